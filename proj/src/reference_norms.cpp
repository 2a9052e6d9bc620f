#include "onorm/reference_norms.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace onorm {

namespace {

struct Moments {
  double mu = 0.0;
  double sigma = 0.0;    // population standard deviation
  double divisor = 1.0;  // max(sigma, floor)
  bool floored = false;
};

// Writes the normalized values of x into y and never throws. Two-element
// inputs are centered antisymmetrically so that the result is exactly
// (+1, -1) or (-1, +1).
Moments normalize_into(std::span<const double> x, std::span<double> y, double floor) {
  Moments m;
  const std::size_t n = x.size();
  if (n == 2) {
    const double d = (x[0] - x[1]) / 2.0;
    y[0] = d;
    y[1] = -d;
    m.mu = (x[0] + x[1]) / 2.0;
  } else {
    double s = 0.0;
    for (double v : x) s += v;
    m.mu = s / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] - m.mu;
  }
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) ss += y[i] * y[i];
  m.sigma = std::sqrt(ss / static_cast<double>(n));
  m.floored = m.sigma < floor;
  m.divisor = m.floored ? floor : m.sigma;
  for (std::size_t i = 0; i < n; ++i) y[i] /= m.divisor;
  return m;
}

// Gradient through normalize_into, including the floored regime where the
// divisor is constant and only the centering remains.
void backward_into(std::span<const double> y, std::span<const double> gy, double divisor, bool floored,
                   std::span<double> gx) {
  const std::size_t n = y.size();
  if (floored) {
    double s = 0.0;
    for (double g : gy) s += g;
    const double m = s / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) gx[i] = (gy[i] - m) / divisor;
    return;
  }
  if (n == 2) {
    // Every normalized pair is +-(1, -1), where the Jacobian vanishes.
    gx[0] = 0.0;
    gx[1] = 0.0;
    return;
  }
  double s1 = 0.0;
  double sy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s1 += gy[i];
    sy += gy[i] * y[i];
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) gx[i] = (gy[i] - s1 * inv_n - sy * inv_n * y[i]) / divisor;
}

void check_batch(const std::vector<FeatureMap>& batch, std::size_t features) {
  for (const auto& s : batch) {
    if (s.features() != features || !s.same_shape(batch.front())) {
      throw ShapeError("batch: inconsistent sample shapes");
    }
  }
}

}  // namespace

ExactNormResult exact_normalize(std::span<const double> x, double sigma_floor) {
  if (x.size() < 2) throw ShapeError("exact_normalize: need at least two values");
  ExactNormResult r;
  r.y.resize(x.size());
  const Moments m = normalize_into(x, r.y, sigma_floor);
  if (m.floored) {
    throw NumericError("exact_normalize: standard deviation " + std::to_string(m.sigma) + " below floor");
  }
  r.mu = m.mu;
  r.sigma = m.sigma;
  return r;
}

std::vector<double> exact_backward(std::span<const double> y, std::span<const double> y_grad, double sigma) {
  if (y.size() != y_grad.size()) throw ShapeError("exact_backward: length mismatch");
  if (y.size() < 2) throw ShapeError("exact_backward: need at least two values");
  std::vector<double> gx(y.size());
  backward_into(y, y_grad, sigma, false, gx);
  return gx;
}

Matrix jacobian_dense(std::span<const double> x, double sigma_floor) {
  const ExactNormResult r = exact_normalize(x, sigma_floor);
  const std::size_t n = x.size();
  const double nd = static_cast<double>(n);
  Matrix j(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      const double delta = i == k ? 1.0 : 0.0;
      j(i, k) = ((nd * delta - 1.0) - r.y[i] * r.y[k]) / (nd * r.sigma);
    }
  }
  return j;
}

std::vector<double> reject_from(std::span<const double> v, std::span<const double> dir) {
  const double dd = dot(dir, dir);
  std::vector<double> out(v.begin(), v.end());
  if (dd == 0.0) return out;
  const double c = dot(v, dir) / dd;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= c * dir[i];
  return out;
}

BatchNorm::BatchNorm(std::size_t features, double running_decay, double sigma_floor)
    : decay_(running_decay), floor_(sigma_floor), running_mean_(features, 0.0), running_var_(features, 1.0) {
  if (!(running_decay > 0.0 && running_decay < 1.0)) throw std::invalid_argument("BatchNorm: decay outside (0,1)");
}

std::vector<FeatureMap> BatchNorm::forward(const std::vector<FeatureMap>& batch) {
  if (batch.size() < 2) throw std::invalid_argument("BatchNorm: batch size must be at least 2");
  check_batch(batch, features());
  const std::size_t spatial = batch.front().spatial();
  const std::size_t per = batch.size() * spatial;

  Cache cache;
  cache.y.assign(batch.size(), FeatureMap(features(), spatial));
  cache.sigma.assign(features(), 1.0);
  cache.floored.assign(features(), false);
  std::vector<char> floored(features(), 0);

  const auto nf = static_cast<std::ptrdiff_t>(features());
#pragma omp parallel for schedule(static) if (per * batch.size() >= (1u << 14))
  for (std::ptrdiff_t fi = 0; fi < nf; ++fi) {
    const auto f = static_cast<std::size_t>(fi);
    std::vector<double> x(per);
    std::vector<double> y(per);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto src = batch[b].feature(f);
      std::copy(src.begin(), src.end(), x.begin() + static_cast<std::ptrdiff_t>(b * spatial));
    }
    const Moments m = normalize_into(x, y, floor_);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      auto dst = cache.y[b].feature(f);
      std::copy_n(y.begin() + static_cast<std::ptrdiff_t>(b * spatial), spatial, dst.begin());
    }
    cache.sigma[f] = m.divisor;
    floored[f] = m.floored ? 1 : 0;
    running_mean_[f] = decay_ * running_mean_[f] + (1.0 - decay_) * m.mu;
    running_var_[f] = decay_ * running_var_[f] + (1.0 - decay_) * m.sigma * m.sigma;
  }
  for (std::size_t f = 0; f < features(); ++f) cache.floored[f] = floored[f] != 0;

  std::vector<FeatureMap> out = cache.y;
  cache_ = std::move(cache);
  return out;
}

std::vector<FeatureMap> BatchNorm::backward(const std::vector<FeatureMap>& grads) {
  if (!cache_) throw StateError("BatchNorm: backward without forward");
  const Cache& cache = *cache_;
  if (grads.size() != cache.y.size()) throw ShapeError("BatchNorm: gradient batch size mismatch");
  for (std::size_t b = 0; b < grads.size(); ++b) {
    if (!grads[b].same_shape(cache.y[b])) throw ShapeError("BatchNorm: gradient shape mismatch");
  }
  const std::size_t spatial = cache.y.front().spatial();
  const std::size_t per = grads.size() * spatial;
  std::vector<FeatureMap> out(grads.size(), FeatureMap(features(), spatial));

  const auto nf = static_cast<std::ptrdiff_t>(features());
#pragma omp parallel for schedule(static) if (per * grads.size() >= (1u << 14))
  for (std::ptrdiff_t fi = 0; fi < nf; ++fi) {
    const auto f = static_cast<std::size_t>(fi);
    std::vector<double> y(per);
    std::vector<double> gy(per);
    std::vector<double> gx(per);
    for (std::size_t b = 0; b < grads.size(); ++b) {
      const auto ys = cache.y[b].feature(f);
      const auto gs = grads[b].feature(f);
      std::copy(ys.begin(), ys.end(), y.begin() + static_cast<std::ptrdiff_t>(b * spatial));
      std::copy(gs.begin(), gs.end(), gy.begin() + static_cast<std::ptrdiff_t>(b * spatial));
    }
    backward_into(y, gy, cache.sigma[f], cache.floored[f], gx);
    for (std::size_t b = 0; b < grads.size(); ++b) {
      auto dst = out[b].feature(f);
      std::copy_n(gx.begin() + static_cast<std::ptrdiff_t>(b * spatial), spatial, dst.begin());
    }
  }
  cache_.reset();
  return out;
}

FeatureMap BatchNorm::infer(const FeatureMap& x) const {
  if (x.features() != features()) throw ShapeError("BatchNorm::infer: feature count mismatch");
  FeatureMap y(x.features(), x.spatial());
  for (std::size_t f = 0; f < features(); ++f) {
    const double s = std::max(std::sqrt(running_var_[f]), floor_);
    const auto in = x.feature(f);
    auto out = y.feature(f);
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = (in[i] - running_mean_[f]) / s;
  }
  return y;
}

std::vector<FeatureMap> LayerNorm::forward(const std::vector<FeatureMap>& batch) {
  Cache cache;
  cache.y.reserve(batch.size());
  for (const auto& x : batch) {
    if (x.size() < 2) throw ShapeError("LayerNorm: sample needs at least two elements");
    FeatureMap y(x.features(), x.spatial());
    const Moments m = normalize_into(x.data(), y.data(), floor_);
    cache.y.push_back(std::move(y));
    cache.sigma.push_back(m.divisor);
    cache.floored.push_back(m.floored);
  }
  std::vector<FeatureMap> out = cache.y;
  cache_ = std::move(cache);
  return out;
}

std::vector<FeatureMap> LayerNorm::backward(const std::vector<FeatureMap>& grads) {
  if (!cache_) throw StateError("LayerNorm: backward without forward");
  const Cache& cache = *cache_;
  if (grads.size() != cache.y.size()) throw ShapeError("LayerNorm: gradient batch size mismatch");
  std::vector<FeatureMap> out;
  out.reserve(grads.size());
  for (std::size_t b = 0; b < grads.size(); ++b) {
    if (!grads[b].same_shape(cache.y[b])) throw ShapeError("LayerNorm: gradient shape mismatch");
    FeatureMap gx(grads[b].features(), grads[b].spatial());
    backward_into(cache.y[b].data(), grads[b].data(), cache.sigma[b], cache.floored[b], gx.data());
    out.push_back(std::move(gx));
  }
  cache_.reset();
  return out;
}

FeatureMap LayerNorm::infer(const FeatureMap& x) const {
  if (x.size() < 2) throw ShapeError("LayerNorm: sample needs at least two elements");
  FeatureMap y(x.features(), x.spatial());
  normalize_into(x.data(), y.data(), floor_);
  return y;
}

}  // namespace onorm
