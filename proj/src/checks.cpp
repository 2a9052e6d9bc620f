#include "onorm/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "onorm/batched_emulation.hpp"
#include "onorm/config.hpp"
#include "onorm/experiments.hpp"
#include "onorm/online_norm.hpp"
#include "onorm/reference_norms.hpp"
#include "onorm/training.hpp"

namespace onorm::checks {
namespace {

using Outcome = std::pair<bool, std::string>;

template <typename... Ts>
std::string str(const Ts&... parts) {
  std::ostringstream out;
  out << std::setprecision(6);
  (out << ... << parts);
  return out.str();
}

std::vector<double> gaussian(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Relative error; absolute once both sides are below `zero`.
double rel_err(const std::vector<double>& a, const std::vector<double>& b, double zero) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  const double denom = std::max(norm(a), norm(b));
  return denom < zero ? std::sqrt(d) : std::sqrt(d) / denom;
}

// Two-pass population normalization.
std::vector<double> normalize_two_pass(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  const double mu = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0.0;
  for (double v : x) var += (v - mu) * (v - mu);
  const double sigma = std::sqrt(var / n);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mu) / sigma;
  return y;
}

FeatureMap scalar(double v) { return FeatureMap(1, 1, {v}); }

OnlineNormOptions decays(double af, double ab) {
  OnlineNormOptions o;
  o.alpha_f = af;
  o.alpha_b = ab;
  return o;
}

Outcome gradient_oracle() {
  Rng rng(101);
  double worst_fd = 0.0;
  double worst_orth = 0.0;
  for (std::size_t n : {2u, 3u, 10u, 50u}) {
    for (int trial = 0; trial < 10; ++trial) {
      const auto x = gaussian(rng, n);
      const auto w = gaussian(rng, n);
      const auto fd = central_difference([&](const std::vector<double>& v) { return dot(normalize_two_pass(v), w); },
                                         x, 1e-5);
      const auto r = exact_normalize(x);
      const auto g = exact_backward(r.y, w, r.sigma);
      worst_fd = std::max(worst_fd, rel_err(g, fd, 1e-8));
      const double gn = norm(g);
      const double ones = std::accumulate(g.begin(), g.end(), 0.0);
      if (gn > 0.0) {
        worst_orth = std::max(worst_orth, std::abs(ones) / (gn * std::sqrt(static_cast<double>(n))));
        worst_orth = std::max(worst_orth, std::abs(dot(g, r.y)) / (gn * norm(r.y)));
      }
    }
  }
  return {worst_fd <= 1e-6 && worst_orth <= 1e-9,
          str("max rel err ", worst_fd, ", max normalized |x'.1|,|x'.y| ", worst_orth)};
}

Outcome batch_two() {
  Rng rng(102);
  std::size_t bad = 0;
  for (int i = 0; i < 100; ++i) {
    BatchNorm bn(1);
    const auto y = bn.forward({scalar(rng.normal(0.0, 3.0)), scalar(rng.normal(0.0, 3.0))});
    const double a = y[0](0, 0);
    const double b = y[1](0, 0);
    if (!(std::abs(a) == 1.0 && b == -a)) ++bad;
    const auto g = bn.backward({scalar(rng.normal()), scalar(rng.normal())});
    if (g[0](0, 0) != 0.0 || g[1](0, 0) != 0.0) ++bad;
  }
  return {bad == 0, str(bad, " of 200 outputs/gradients off the exact values")};
}

Outcome equivalences() {
  double worst = 0.0;
  for (double a : {0.5, 0.99, 0.999}) {
    Rng rng(103);
    OnlineNormState f(1, decays(a, 0.99));
    double e = 0.0;
    for (int t = 0; t < 10000; ++t) {
      const double x = rng.normal(1.0, 3.0);
      forward_sample(f, scalar(x));
      e += x - (1 - a) * e;
      worst = std::max(worst, std::abs(f.mu[0] - (1 - a) * e));
    }

    // Backward: mu_y as the decaying estimator of y' y with the projection
    // correction, compared against the accumulated control.
    OnlineNormState s(1, decays(0.99, a));
    double mu_y = 0.0;
    for (int t = 0; t < 10000; ++t) {
      const auto c = forward_sample(s, scalar(rng.normal(0.3, 1.2)));
      const double y = c.y(0, 0);
      const double gy = rng.normal(0.2 * y, 1.0);
      backward_sample(s, scalar(gy), c);
      mu_y = (1 - (1 - a) * y * y) * mu_y + (1 - a) * gy * y;
      worst = std::max(worst, std::abs(mu_y - (1 - a) * s.eps_y[0]));
    }
  }
  return {worst <= 1e-10, str("max deviation ", worst)};
}

Outcome asymptotic_moments() {
  const double a = 0.99;
  Rng rng(104);
  OnlineNormState s(1, decays(a, 0.99));
  const int total = 100000;
  double sum = 0.0;
  double sum2 = 0.0;
  for (int t = 0; t < total; ++t) {
    const double y = forward_sample(s, scalar(rng.normal(5.0, 2.0))).y(0, 0);
    if (t >= total / 2) {
      sum += y;
      sum2 += y * y;
    }
  }
  const double m = sum / (total / 2);
  const double var = sum2 / (total / 2) - m * m;
  const bool ok = std::abs(m) <= 0.02 && std::abs(var - 1 / a) <= 0.03 / a;
  return {ok, str("mean ", m, ", variance ", var, " (target ", 1 / a, ")")};
}

Outcome accumulator_bound() {
  Rng rng(105);
  OnlineNormState s(1, decays(0.999, 0.99));
  double early_y = 0.0;
  double early_1 = 0.0;
  double late_y = 0.0;
  double late_1 = 0.0;
  for (int t = 1; t <= 100000; ++t) {
    const auto c = forward_sample(s, scalar(std::clamp(rng.normal(1.0, 2.0), -8.0, 10.0)));
    const double gy = std::clamp(0.5 * c.y(0, 0) + rng.uniform(-1.0, 1.0) + 0.3, -3.0, 3.0);
    backward_sample(s, scalar(gy), c);
    double& my = t <= 1000 ? early_y : late_y;
    double& m1 = t <= 1000 ? early_1 : late_1;
    my = std::max(my, std::abs(s.eps_y[0]));
    m1 = std::max(m1, std::abs(s.eps_1[0]));
  }
  return {late_y <= 10 * early_y && late_1 <= 10 * early_1,
          str("eps_y max ", early_y, " -> ", late_y, ", eps_1 max ", early_1, " -> ", late_1)};
}

Outcome emulation() {
  Rng rng(106);
  const std::size_t len = 960;
  double worst = 0.0;
  for (std::size_t n : {1u, 2u, 3u, 5u, 8u}) {
    for (double a : {0.5, 0.99, 0.999}) {
      std::vector<double> means(len);
      std::vector<double> vars(len);
      for (auto& m : means) m = rng.normal(1.0, 2.0);
      for (auto& v : vars) v = rng.uniform(0.0, 3.0);
      VarianceEmulationState st(n, a);
      double mu = 0.0;
      double var = 1.0;
      for (std::size_t g = 0; g < len; g += n) {
        const auto r = batched_variance(st, std::span<const double>(means).subspan(g, n),
                                        std::span<const double>(vars).subspan(g, n));
        for (std::size_t i = 0; i < n; ++i) {
          const double d = means[g + i] - mu;
          var = a * var + (1 - a) * vars[g + i] + a * (1 - a) * d * d;
          mu = a * mu + (1 - a) * means[g + i];
          worst = std::max(worst, std::abs(r.mean[i] - mu) / std::max(1.0, std::abs(mu)));
          worst = std::max(worst, std::abs(r.var[i] - var) / std::max(1.0, var));
        }
      }
    }
  }
  return {worst <= 1e-10, str("max deviation ", worst)};
}

Outcome hyper_scaling() {
  const auto h = scale_hyperparams(0.1, 0.9, 1e-4, 256, 32);
  return {std::abs(h.mu_prime - 0.98692) < 5e-6, str("mu' = ", std::setprecision(8), h.mu_prime)};
}

Outcome gradient_bias() {
  const auto report = gradient_bias_experiment(BiasConfig{});
  double at2 = -1.0;
  double at64 = -1.0;
  double full = -1.0;
  double small_max = 0.0;
  for (const auto& e : report.entries) {
    if (e.batch_size == 2) at2 = e.mean_angle;
    if (e.batch_size == 64) at64 = e.mean_angle;
    if (e.batch_size == BiasConfig{}.dataset_size) full = e.mean_angle;
    if (e.batch_size <= 32) small_max = std::max(small_max, e.mean_angle);
  }
  return {at2 > at64 && full == 0.0 && small_max > 10.0,
          str("angle b=2 ", at2, " deg, b=64 ", at64, " deg, full ", full, " deg, max b<=32 ", small_max, " deg")};
}

Outcome growth() {
  GrowthConfig plain;
  GrowthConfig scaled;
  scaled.layer_scaling = true;
  const auto p = activation_growth_experiment(plain);
  const auto s = activation_growth_experiment(scaled);
  const auto [lo, hi] = std::minmax_element(s.rms.begin(), s.rms.end());
  const double ratio = *hi / *lo;
  return {p.log_slope > 0.01 && ratio < 10.0,
          str("log-rms slope ", p.log_slope, " unscaled, max/min rms ", ratio, " scaled")};
}

Outcome equilibrium() {
  const auto r = equilibrium_experiment(EquilibriumConfig{});
  return {r.ratio >= 0.8 && r.ratio <= 1.25,
          str("|w| ", r.mean_weight_norm, ", predicted ", r.predicted, ", ratio ", r.ratio)};
}

Outcome parity() {
  RunConfig online;
  online.data.classes = 3;
  online.data.samples = 6000;
  online.train.epochs = 5;
  online.train.batch_size = 32;
  online.train.normalizer = NormalizerKind::Online;
  RunConfig batch = online;
  batch.train.normalizer = NormalizerKind::Batch;
  const auto ro = run_training(online);
  const auto rb = run_training(batch);
  if (ro.diverged || rb.diverged) return {false, "diverged: " + ro.message + rb.message};
  const double ao = ro.records.back().accuracy;
  const double ab = rb.records.back().accuracy;
  return {ao > 0.9 && ab > 0.9 && ao >= ab - 0.02, str("accuracy online ", ao, ", batch ", ab)};
}

Outcome layer_scale_gradient() {
  Rng rng(112);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.index(15);
    const auto y = gaussian(rng, n);
    const auto w = gaussian(rng, n);
    const auto loss = [&](const std::vector<double>& v) {
      const double zeta = std::sqrt(dot(v, v) / static_cast<double>(v.size()));
      return dot(v, w) / zeta;
    };
    const auto fd = central_difference(loss, y, 1e-5);
    const auto c = layer_scale_forward(FeatureMap(n, 1, y));
    const auto g = layer_scale_backward(FeatureMap(n, 1, w), c);
    worst = std::max(worst, rel_err(g.values(), fd, 1e-12));
  }
  return {worst <= 1e-7, str("max rel err ", worst)};
}

}  // namespace

const std::vector<Check>& all_checks() {
  static const std::vector<Check> list = {
      {1, "gradient-oracle", 1.0, true, gradient_oracle},
      {2, "batch-two-degeneracy", 1.0, true, batch_two},
      {3, "control-estimator-equivalence", 5.0, true, equivalences},
      {4, "asymptotic-moments", 10.0, true, asymptotic_moments},
      {5, "accumulator-boundedness", 10.0, true, accumulator_bound},
      {6, "batched-emulation", 5.0, true, emulation},
      {7, "hyperparameter-scaling", 1.0, true, hyper_scaling},
      {8, "gradient-bias", 120.0, false, gradient_bias},
      {9, "activation-growth", 60.0, false, growth},
      {10, "weight-equilibrium", 60.0, false, equilibrium},
      {11, "online-vs-batch-parity", 120.0, false, parity},
      {12, "layer-scaling-gradient", 1.0, true, layer_scale_gradient},
  };
  return list;
}

CheckResult run(const Check& check) {
  CheckResult r;
  r.id = check.id;
  r.name = check.name;
  r.limit_seconds = check.limit_seconds;
  const auto start = std::chrono::steady_clock::now();
  try {
    std::tie(r.passed, r.detail) = check.body();
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("threw: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (r.seconds >= r.limit_seconds) {
    r.passed = false;
    r.detail += str("; over the ", r.limit_seconds, " s budget");
  }
  return r;
}

std::string format(const CheckResult& r) {
  std::ostringstream out;
  out << (r.passed ? "PASS " : "FAIL ") << std::setw(2) << r.id << ' ' << r.name << " (" << std::fixed
      << std::setprecision(2) << r.seconds << " s) " << r.detail;
  return out.str();
}

}  // namespace onorm::checks
