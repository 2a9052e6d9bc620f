#include "onorm/tensor.hpp"

#include <cmath>
#include <string>

namespace onorm {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 14;

void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

FeatureMap::FeatureMap(std::size_t features, std::size_t spatial)
    : features_(features), spatial_(spatial), data_(features * spatial, 0.0) {}

FeatureMap::FeatureMap(std::size_t features, std::size_t spatial, std::vector<double> data)
    : features_(features), spatial_(spatial), data_(std::move(data)) {
  if (data_.size() != features_ * spatial_) {
    throw ShapeError("FeatureMap: data length " + std::to_string(data_.size()) + " != " +
                     std::to_string(features_) + " x " + std::to_string(spatial_));
  }
  if (!all_finite()) throw NumericError("FeatureMap: non-finite value");
}

bool FeatureMap::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows_ * cols_, "Matrix: data length != rows * cols");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Rng Rng::split(std::uint64_t stream) const { return Rng(mix_seed(seed_, stream)); }

namespace serial {

std::vector<double> feature_mean(const FeatureMap& m) {
  std::vector<double> out(m.features(), 0.0);
  if (m.spatial() == 0) return out;
  for (std::size_t f = 0; f < m.features(); ++f) {
    double s = 0.0;
    for (double v : m.feature(f)) s += v;
    out[f] = s / static_cast<double>(m.spatial());
  }
  return out;
}

std::vector<double> feature_var(const FeatureMap& m) {
  std::vector<double> out(m.features(), 0.0);
  if (m.spatial() <= 1) return out;
  const auto n = static_cast<double>(m.spatial());
  for (std::size_t f = 0; f < m.features(); ++f) {
    double s = 0.0;
    for (double v : m.feature(f)) s += v;
    const double mu = s / n;
    double ss = 0.0;
    for (double v : m.feature(f)) ss += (v - mu) * (v - mu);
    out[f] = ss / n;
  }
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
  require(a.cols() == x.size(), "matvec: size mismatch");
  std::vector<double> y(a.rows(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) s += a(r, c) * x[c];
    y[r] = s;
  }
  return y;
}

std::vector<double> matvec_transposed(const Matrix& a, std::span<const double> x) {
  require(a.rows() == x.size(), "matvec_transposed: size mismatch");
  std::vector<double> y(a.cols(), 0.0);
  for (std::size_t c = 0; c < a.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r) s += a(r, c) * x[r];
    y[c] = s;
  }
  return y;
}

}  // namespace serial

std::vector<double> feature_mean(const FeatureMap& m) {
  std::vector<double> out(m.features(), 0.0);
  if (m.spatial() == 0) return out;
  const auto features = static_cast<std::ptrdiff_t>(m.features());
  const auto n = static_cast<double>(m.spatial());
#pragma omp parallel for schedule(static) if (m.size() >= kParallelWork)
  for (std::ptrdiff_t f = 0; f < features; ++f) {
    double s = 0.0;
    for (double v : m.feature(static_cast<std::size_t>(f))) s += v;
    out[static_cast<std::size_t>(f)] = s / n;
  }
  return out;
}

std::vector<double> feature_var(const FeatureMap& m) {
  std::vector<double> out(m.features(), 0.0);
  if (m.spatial() <= 1) return out;
  const auto features = static_cast<std::ptrdiff_t>(m.features());
  const auto n = static_cast<double>(m.spatial());
#pragma omp parallel for schedule(static) if (m.size() >= kParallelWork)
  for (std::ptrdiff_t f = 0; f < features; ++f) {
    const auto row = m.feature(static_cast<std::size_t>(f));
    double s = 0.0;
    for (double v : row) s += v;
    const double mu = s / n;
    double ss = 0.0;
    for (double v : row) ss += (v - mu) * (v - mu);
    out[static_cast<std::size_t>(f)] = ss / n;
  }
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
  const std::size_t work = a.rows() * a.cols() * b.cols();
#pragma omp parallel for schedule(static) if (work >= kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    auto ci = c.row(static_cast<std::size_t>(i));
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(static_cast<std::size_t>(i), k);
      const auto bk = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
  require(a.cols() == x.size(), "matvec: size mismatch");
  std::vector<double> y(a.rows(), 0.0);
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static) if (a.size() >= kParallelWork)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const auto ar = a.row(static_cast<std::size_t>(r));
    double s = 0.0;
    for (std::size_t c = 0; c < ar.size(); ++c) s += ar[c] * x[c];
    y[static_cast<std::size_t>(r)] = s;
  }
  return y;
}

std::vector<double> matvec_transposed(const Matrix& a, std::span<const double> x) {
  require(a.rows() == x.size(), "matvec_transposed: size mismatch");
  std::vector<double> y(a.cols(), 0.0);
  const auto cols = static_cast<std::ptrdiff_t>(a.cols());
#pragma omp parallel for schedule(static) if (a.size() >= kParallelWork)
  for (std::ptrdiff_t c = 0; c < cols; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r) s += a(r, static_cast<std::size_t>(c)) * x[r];
    y[static_cast<std::size_t>(c)] = s;
  }
  return y;
}

std::vector<double> add(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "add: size mismatch");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

std::vector<double> scale(std::span<const double> a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * c;
  return out;
}

std::vector<double> relu(std::span<const double> a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
  return out;
}

std::vector<double> relu_backward(std::span<const double> pre_activation, std::span<const double> grad) {
  require(pre_activation.size() == grad.size(), "relu_backward: size mismatch");
  std::vector<double> out(grad.size());
  for (std::size_t i = 0; i < grad.size(); ++i) out[i] = pre_activation[i] > 0.0 ? grad[i] : 0.0;
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double mean(std::span<const double> a) {
  if (a.empty()) return 0.0;
  double s = 0.0;
  for (double v : a) s += v;
  return s / static_cast<double>(a.size());
}

double mean_square(std::span<const double> a) {
  if (a.empty()) return 0.0;
  return dot(a, a) / static_cast<double>(a.size());
}

}  // namespace onorm
