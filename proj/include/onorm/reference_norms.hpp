#pragma once

// Exact finite-population normalization and the baselines built on it.
//
// For x in R^N with population moments mu, sigma the normalized output is
// y = (x - mu) / sigma and the gradient passes through as
//
//   x' = (1/sigma) * (I - P_1)(I - P_y) y'
//      = (1/sigma) * [y' - (y'.1 / N) 1 - (y'.y / N) y]
//
// where P_v projects onto v. The second form is what exact_backward computes;
// jacobian_dense builds the full matrix for use as an oracle.

#include <optional>
#include <span>
#include <vector>

#include "onorm/tensor.hpp"

namespace onorm {

struct ExactNormResult {
  std::vector<double> y;
  double mu = 0.0;
  double sigma = 1.0;
};

// Throws ShapeError for N < 2, NumericError when sigma < floor.
ExactNormResult exact_normalize(std::span<const double> x, double sigma_floor = kSigmaFloor);

std::vector<double> exact_backward(std::span<const double> y, std::span<const double> y_grad, double sigma);

// J_ij = dy_i/dx_j = ((N delta_ij - 1) - y_i y_j) / (N sigma).
Matrix jacobian_dense(std::span<const double> x, double sigma_floor = kSigmaFloor);

// (I - P_dir) v. A zero direction leaves v unchanged.
std::vector<double> reject_from(std::span<const double> v, std::span<const double> dir);

// Mini-batch normalization: statistics per feature over the batch and the
// spatial extent. Degenerate (constant) features are divided by the floor
// instead of failing so a dead unit cannot abort training.
class BatchNorm {
 public:
  explicit BatchNorm(std::size_t features, double running_decay = 0.99, double sigma_floor = kSigmaFloor);

  // Training pass; caches what backward needs and updates running statistics.
  // Throws std::invalid_argument for a batch of one.
  std::vector<FeatureMap> forward(const std::vector<FeatureMap>& batch);
  std::vector<FeatureMap> backward(const std::vector<FeatureMap>& grads);
  // Uses the running statistics.
  FeatureMap infer(const FeatureMap& x) const;

  std::size_t features() const noexcept { return running_mean_.size(); }
  const std::vector<double>& running_mean() const noexcept { return running_mean_; }
  const std::vector<double>& running_var() const noexcept { return running_var_; }

 private:
  struct Cache {
    std::vector<FeatureMap> y;
    std::vector<double> sigma;  // divisor actually used, per feature
    std::vector<bool> floored;
  };

  double decay_;
  double floor_;
  std::vector<double> running_mean_;
  std::vector<double> running_var_;
  std::optional<Cache> cache_;
};

// Per-sample normalization across all features and positions.
class LayerNorm {
 public:
  explicit LayerNorm(double sigma_floor = kSigmaFloor) : floor_(sigma_floor) {}

  // Throws ShapeError for a sample with fewer than two elements.
  std::vector<FeatureMap> forward(const std::vector<FeatureMap>& batch);
  std::vector<FeatureMap> backward(const std::vector<FeatureMap>& grads);
  FeatureMap infer(const FeatureMap& x) const;

 private:
  struct Cache {
    std::vector<FeatureMap> y;
    std::vector<double> sigma;
    std::vector<bool> floored;
  };

  double floor_;
  std::optional<Cache> cache_;
};

}  // namespace onorm
