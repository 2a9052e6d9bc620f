#include "onorm/batched_emulation.hpp"

#include <stdexcept>

#include "onorm/errors.hpp"

namespace onorm {

namespace {

// Output l of the group: (1 - a) * sum_j A[j] * x_{t+l-j}. In the
// concatenation (x_prev[1..n-1], x_cur[0..n-1]) sample x_{t+l-j} sits at
// index l + n - 1 - j.
double window(const EmulationState& s, std::span<const double> x_cur, std::size_t l) {
  double acc = 0.0;
  for (std::size_t j = 0; j < s.n; ++j) {
    const std::size_t idx = l + s.n - 1 - j;
    const double x = idx >= s.n - 1 ? x_cur[idx - (s.n - 1)] : s.x_prev[idx + 1];
    acc += s.powers[j] * x;
  }
  return acc;
}

}  // namespace

EmulationState::EmulationState(std::size_t group, double a, double initial)
    : n(group), alpha(a), alpha_n(1.0), powers(group), m_prev(group, 0.0), x_prev(group, 0.0) {
  if (group == 0) throw std::invalid_argument("EmulationState: group size must be positive");
  if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("EmulationState: alpha outside (0,1)");
  double p = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    powers[k] = p;
    p *= alpha;
  }
  alpha_n = p;
  // Pre-history chosen so that a^n * m_prev[l] = a^(l+1) * initial, which is
  // what the streaming recurrence carries from mu_{-1} into mu_l.
  if (initial != 0.0) {
    for (std::size_t l = 0; l < n; ++l) m_prev[l] = initial / powers[n - 1 - l];
  }
}

std::vector<double> batched_mean(EmulationState& state, std::span<const double> x_cur) {
  if (x_cur.size() != state.n) throw ShapeError("batched_mean: group length mismatch");
  std::vector<double> m_cur(state.n);
  const double gain = 1.0 - state.alpha;
  for (std::size_t l = 0; l < state.n; ++l) {
    m_cur[l] = state.alpha_n * state.m_prev[l] + gain * window(state, x_cur, l);
  }
  state.m_prev = m_cur;
  state.x_prev.assign(x_cur.begin(), x_cur.end());
  return m_cur;
}

std::vector<double> batched_control(EmulationState& state, std::span<const double> u_cur) {
  if (u_cur.size() != state.n) throw ShapeError("batched_control: group length mismatch");
  // m_prev.back() is mu_{t-1}; before the first group it equals `initial`.
  const double mu_before = state.m_prev.back();
  const std::vector<double> m_cur = batched_mean(state, u_cur);
  std::vector<double> out(state.n);
  out[0] = u_cur[0] - mu_before;
  for (std::size_t l = 1; l < state.n; ++l) out[l] = u_cur[l] - m_cur[l - 1];
  return out;
}

VarianceEmulationState::VarianceEmulationState(std::size_t group, double alpha, double initial_mean,
                                               double initial_var)
    : mean(group, alpha, initial_mean), second_moment(group, alpha, initial_var + initial_mean * initial_mean) {
  if (!(initial_var >= 0.0)) throw std::invalid_argument("VarianceEmulationState: negative initial variance");
}

GroupMoments batched_variance(VarianceEmulationState& state, std::span<const double> sample_means,
                              std::span<const double> sample_vars) {
  const std::size_t n = state.mean.n;
  if (sample_means.size() != n) throw ShapeError("batched_variance: group length mismatch");
  if (!sample_vars.empty() && sample_vars.size() != n) throw ShapeError("batched_variance: variance length mismatch");
  std::vector<double> q(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = sample_vars.empty() ? 0.0 : sample_vars[i];
    q[i] = v + sample_means[i] * sample_means[i];
  }
  GroupMoments out;
  out.mean = batched_mean(state.mean, sample_means);
  const std::vector<double> s = batched_mean(state.second_moment, q);
  out.var.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = s[i] - out.mean[i] * out.mean[i];
    out.var[i] = v > 0.0 ? v : 0.0;
  }
  return out;
}

}  // namespace onorm
