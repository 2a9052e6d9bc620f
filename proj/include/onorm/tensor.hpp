#pragma once

// Dense 64-bit substrate shared by every other module.
//
// FeatureMap holds one sample laid out feature-major: all spatial values of
// feature 0, then feature 1, and so on. A fully connected activation is a
// FeatureMap with spatial() == 1.
//
// The kernels in this header come in two flavours. The unqualified versions
// are OpenMP-parallel over an outer index (features, output rows); the
// versions in onorm::serial are plain loops kept as the reference. Each output
// element is always reduced by a single thread in a fixed order, so both
// flavours return bit-identical results.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "onorm/errors.hpp"

namespace onorm {

// Shared guard for every division by a standard deviation or RMS.
inline constexpr double kSigmaFloor = 1e-5;

class FeatureMap {
 public:
  FeatureMap() = default;
  // Zero-filled.
  FeatureMap(std::size_t features, std::size_t spatial);
  // Throws ShapeError if data.size() != features * spatial, NumericError if
  // any value is non-finite.
  FeatureMap(std::size_t features, std::size_t spatial, std::vector<double> data);

  std::size_t features() const noexcept { return features_; }
  std::size_t spatial() const noexcept { return spatial_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  std::span<double> feature(std::size_t f) noexcept {
    return std::span<double>(data_).subspan(f * spatial_, spatial_);
  }
  std::span<const double> feature(std::size_t f) const noexcept {
    return std::span<const double>(data_).subspan(f * spatial_, spatial_);
  }

  double& operator()(std::size_t f, std::size_t s) noexcept { return data_[f * spatial_ + s]; }
  double operator()(std::size_t f, std::size_t s) const noexcept { return data_[f * spatial_ + s]; }

  bool same_shape(const FeatureMap& other) const noexcept {
    return features_ == other.features_ && spatial_ == other.spatial_;
  }
  bool all_finite() const noexcept;

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::size_t features_ = 0;
  std::size_t spatial_ = 0;
  std::vector<double> data_;
};

// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return std::span<double>(data_).subspan(r * cols_, cols_); }
  std::span<const double> row(std::size_t r) const noexcept {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  static Matrix identity(std::size_t n);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Seed-deterministic generator: identical seeds give identical streams on a
// given standard library (mt19937_64 plus std::normal_distribution).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  // Uniform in [0, n).
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    std::shuffle(v.begin(), v.end(), engine_);
  }

  // Independent stream derived from (seed, stream) by splitmix64 mixing.
  Rng split(std::uint64_t stream) const;

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

// Per-feature reductions over the spatial extent (population moments).
std::vector<double> feature_mean(const FeatureMap& m);
std::vector<double> feature_var(const FeatureMap& m);

Matrix matmul(const Matrix& a, const Matrix& b);
// a * x
std::vector<double> matvec(const Matrix& a, std::span<const double> x);
// a^T * x
std::vector<double> matvec_transposed(const Matrix& a, std::span<const double> x);

std::vector<double> add(std::span<const double> a, std::span<const double> b);
std::vector<double> scale(std::span<const double> a, double c);
std::vector<double> relu(std::span<const double> a);
// Passes grad where pre_activation > 0, zero elsewhere.
std::vector<double> relu_backward(std::span<const double> pre_activation, std::span<const double> grad);
double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
double mean(std::span<const double> a);
double mean_square(std::span<const double> a);

namespace serial {

std::vector<double> feature_mean(const FeatureMap& m);
std::vector<double> feature_var(const FeatureMap& m);
Matrix matmul(const Matrix& a, const Matrix& b);
std::vector<double> matvec(const Matrix& a, std::span<const double> x);
std::vector<double> matvec_transposed(const Matrix& a, std::span<const double> x);

}  // namespace serial

}  // namespace onorm
