#pragma once

// Group-of-n evaluation of the exponentially decaying streaming estimators.
//
// The streaming mean mu_t = a * mu_{t-1} + (1 - a) * x_t unrolls to
// mu_t = (1 - a) * sum_j a^j x_{t-j}. For a group X_t = (x_t .. x_{t+n-1}):
//
//   M_t = a^n * M_{t-n} + (1 - a) * (X_{t-n,t} (*) A)
//
// with A = (1, a, .., a^{n-1}) and X_{t-n,t} the 2n-1 values formed by the
// previous group without its first element followed by the current group.
// Each output element is one dot product, so a whole group evaluates without
// a sequential dependency inside it.
//
// Variance follows from the raw second moment S = var + mu^2, which obeys the
// same recurrence with input var(x) + mean(x)^2.

#include <cstddef>
#include <span>
#include <vector>

namespace onorm {

struct EmulationState {
  // `initial` is the streaming estimate before the first sample (mu_{-1}).
  // Zero gives the zero-initialized buffers of the plain formulation.
  EmulationState(std::size_t group, double alpha, double initial = 0.0);

  std::size_t n;
  double alpha;
  double alpha_n;               // a^n
  std::vector<double> powers;   // A[k] = a^k by repeated multiplication
  std::vector<double> m_prev;   // previous group's outputs
  std::vector<double> x_prev;   // previous group's inputs
};

// Advances one group; throws ShapeError unless x_cur.size() == state.n.
std::vector<double> batched_mean(EmulationState& state, std::span<const double> x_cur);

// Control-process outputs u_t - mu_{t-1} for a group, where mu is the
// decaying mean of u. This is the mean-zero stage of the backward pass
// (x' = u - (1-a) eps_{t-1} with (1-a) eps the running mean of u).
std::vector<double> batched_control(EmulationState& state, std::span<const double> u_cur);

struct VarianceEmulationState {
  VarianceEmulationState(std::size_t group, double alpha, double initial_mean = 0.0, double initial_var = 1.0);

  EmulationState mean;
  EmulationState second_moment;
};

struct GroupMoments {
  std::vector<double> mean;
  std::vector<double> var;
};

// Per-step (mu_t, var_t) for a group of samples given each sample's mean and,
// optionally, its within-sample variance (zero when omitted: scalar samples).
GroupMoments batched_variance(VarianceEmulationState& state, std::span<const double> sample_means,
                              std::span<const double> sample_vars = {});

}  // namespace onorm
