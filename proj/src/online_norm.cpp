#include "onorm/online_norm.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <istream>
#include <iterator>
#include <ostream>
#include <stdexcept>
#include <string>

namespace onorm {

namespace {

constexpr std::size_t kParallelWork = 1 << 13;
constexpr std::array<char, 8> kMagic = {'O', 'N', 'O', 'R', 'M', 'S', 'T', '1'};

void check_features(const OnlineNormState& state, const FeatureMap& x, const char* who) {
  if (x.features() != state.features() || x.spatial() == 0) {
    throw ShapeError(std::string(who) + ": expected " + std::to_string(state.features()) +
                     " features, got " + std::to_string(x.features()) + " x " + std::to_string(x.spatial()));
  }
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    if (pos_ + 8 > bytes_.size()) throw std::runtime_error("online-norm state: truncated record");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::vector<double> f64s(std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void validate(const OnlineNormOptions& options) {
  if (!(options.alpha_f > 0.0 && options.alpha_f < 1.0)) {
    throw std::invalid_argument("alpha_f must lie in (0, 1)");
  }
  if (!(options.alpha_b > 0.0 && options.alpha_b < 1.0)) {
    throw std::invalid_argument("alpha_b must lie in (0, 1)");
  }
  if (!(options.sigma_floor > 0.0)) throw std::invalid_argument("sigma_floor must be positive");
}

OnlineNormState::OnlineNormState(std::size_t features, OnlineNormOptions opts) : options(opts) {
  validate(options);
  if (features == 0) throw ShapeError("OnlineNormState: zero features");
  mu.resize(features);
  var.resize(features);
  eps_y.resize(features);
  eps_1.resize(features);
  grad_ms.resize(features);
  reset();
}

void OnlineNormState::reset() {
  std::fill(mu.begin(), mu.end(), 0.0);
  std::fill(var.begin(), var.end(), 1.0);
  std::fill(eps_y.begin(), eps_y.end(), 0.0);
  std::fill(eps_1.begin(), eps_1.end(), 0.0);
  std::fill(grad_ms.begin(), grad_ms.end(), 1.0);
  forward_steps = 0;
  last_backward_step = 0;
}

bool operator==(const OnlineNormState& a, const OnlineNormState& b) {
  return a.options.alpha_f == b.options.alpha_f && a.options.alpha_b == b.options.alpha_b &&
         a.options.sigma_floor == b.options.sigma_floor &&
         a.options.unit_norm_grad == b.options.unit_norm_grad && a.mu == b.mu && a.var == b.var &&
         a.eps_y == b.eps_y && a.eps_1 == b.eps_1 && a.grad_ms == b.grad_ms;
}

ForwardCache forward_sample(OnlineNormState& state, const FeatureMap& x) {
  check_features(state, x, "forward_sample");
  if (!x.all_finite()) throw NumericError("forward_sample: non-finite input");

  const double af = state.options.alpha_f;
  const double floor = state.options.sigma_floor;
  ForwardCache cache;
  cache.y = FeatureMap(x.features(), x.spatial());
  cache.sigma_used.resize(x.features());

  const auto features = static_cast<std::ptrdiff_t>(x.features());
  const auto n = static_cast<double>(x.spatial());
#pragma omp parallel for schedule(static) if (x.size() >= kParallelWork)
  for (std::ptrdiff_t fi = 0; fi < features; ++fi) {
    const auto f = static_cast<std::size_t>(fi);
    const auto in = x.feature(f);
    auto out = cache.y.feature(f);

    const double mu_prev = state.mu[f];
    const double sigma = std::max(std::sqrt(state.var[f]), floor);
    cache.sigma_used[f] = sigma;
    for (std::size_t s = 0; s < in.size(); ++s) out[s] = (in[s] - mu_prev) / sigma;

    double sum = 0.0;
    for (double v : in) sum += v;
    const double m = sum / n;
    double ss = 0.0;
    for (double v : in) ss += (v - m) * (v - m);
    const double v = ss / n;

    const double d = m - mu_prev;
    state.mu[f] = af * mu_prev + (1.0 - af) * m;
    state.var[f] = af * state.var[f] + (1.0 - af) * v + af * (1.0 - af) * d * d;
  }

  cache.step = ++state.forward_steps;
  return cache;
}

FeatureMap normalize_frozen(const OnlineNormState& state, const FeatureMap& x) {
  check_features(state, x, "normalize_frozen");
  FeatureMap y(x.features(), x.spatial());
  for (std::size_t f = 0; f < x.features(); ++f) {
    const double sigma = std::max(std::sqrt(state.var[f]), state.options.sigma_floor);
    const auto in = x.feature(f);
    auto out = y.feature(f);
    for (std::size_t s = 0; s < in.size(); ++s) out[s] = (in[s] - state.mu[f]) / sigma;
  }
  return y;
}

FeatureMap backward_sample(OnlineNormState& state, const FeatureMap& y_grad, const ForwardCache& cache) {
  check_features(state, y_grad, "backward_sample");
  if (!y_grad.same_shape(cache.y) || cache.sigma_used.size() != state.features()) {
    throw ShapeError("backward_sample: gradient does not match cached forward");
  }
  if (cache.step == 0 || cache.step != state.forward_steps) {
    throw StateError("backward_sample: cache is not from the most recent forward");
  }
  if (state.last_backward_step == cache.step) {
    throw StateError("backward_sample: forward step already back-propagated");
  }

  const double gain = 1.0 - state.options.alpha_b;
  const double ab = state.options.alpha_b;
  const double floor = state.options.sigma_floor;
  const bool unit_norm = state.options.unit_norm_grad;
  FeatureMap x_grad(y_grad.features(), y_grad.spatial());

  const auto features = static_cast<std::ptrdiff_t>(y_grad.features());
  const auto n = static_cast<double>(y_grad.spatial());
#pragma omp parallel for schedule(static) if (y_grad.size() >= kParallelWork)
  for (std::ptrdiff_t fi = 0; fi < features; ++fi) {
    const auto f = static_cast<std::size_t>(fi);
    const auto gy = y_grad.feature(f);
    const auto y = cache.y.feature(f);
    auto gx = x_grad.feature(f);

    // Orthogonality to y.
    const double ey = state.eps_y[f];
    double proj = 0.0;
    double sq = 0.0;
    for (std::size_t s = 0; s < gy.size(); ++s) {
      const double xt = gy[s] - gain * ey * y[s];
      gx[s] = xt;
      proj += xt * y[s];
      sq += xt * xt;
    }
    state.eps_y[f] = ey + proj / n;

    // Mean-zero condition.
    double divisor = cache.sigma_used[f];
    if (unit_norm) {
      divisor = std::max(std::sqrt(state.grad_ms[f]), floor);
      state.grad_ms[f] = ab * state.grad_ms[f] + (1.0 - ab) * (sq / n);
    }
    const double e1 = state.eps_1[f];
    double sum = 0.0;
    for (auto& g : gx) {
      g = g / divisor - gain * e1;
      sum += g;
    }
    state.eps_1[f] = e1 + sum / n;
  }

  state.last_backward_step = cache.step;
  return x_grad;
}

LayerScaleCache layer_scale_forward(const FeatureMap& y, double sigma_floor) {
  LayerScaleCache cache;
  cache.zeta = std::sqrt(mean_square(y.data()));
  cache.divisor = std::max(cache.zeta, sigma_floor);
  cache.z = FeatureMap(y.features(), y.spatial());
  auto z = cache.z.data();
  const auto in = y.data();
  for (std::size_t i = 0; i < in.size(); ++i) z[i] = in[i] / cache.divisor;
  return cache;
}

FeatureMap layer_scale_backward(const FeatureMap& z_grad, const LayerScaleCache& cache) {
  if (!z_grad.same_shape(cache.z)) throw ShapeError("layer_scale_backward: shape mismatch");
  FeatureMap y_grad(z_grad.features(), z_grad.spatial());
  const auto gz = z_grad.data();
  const auto z = cache.z.data();
  auto gy = y_grad.data();
  // Below the floor the divisor is a constant, so only the direct term remains.
  double zz = 0.0;
  if (cache.zeta >= cache.divisor) zz = dot(z, gz) / static_cast<double>(z.size());
  for (std::size_t i = 0; i < gz.size(); ++i) gy[i] = (gz[i] - z[i] * zz) / cache.divisor;
  return y_grad;
}

FeatureMap affine_forward(const AffineParams& p, const FeatureMap& z) {
  if (z.features() != p.gain.size()) throw ShapeError("affine_forward: feature count mismatch");
  FeatureMap out(z.features(), z.spatial());
  for (std::size_t f = 0; f < z.features(); ++f) {
    const auto in = z.feature(f);
    auto o = out.feature(f);
    for (std::size_t s = 0; s < in.size(); ++s) o[s] = p.gain[f] * in[s] + p.bias[f];
  }
  return out;
}

FeatureMap affine_backward(AffineParams& p, const FeatureMap& z, const FeatureMap& out_grad) {
  if (z.features() != p.gain.size() || !z.same_shape(out_grad)) {
    throw ShapeError("affine_backward: shape mismatch");
  }
  FeatureMap z_grad(z.features(), z.spatial());
  for (std::size_t f = 0; f < z.features(); ++f) {
    const auto in = z.feature(f);
    const auto g = out_grad.feature(f);
    auto gz = z_grad.feature(f);
    double dg = 0.0;
    double db = 0.0;
    for (std::size_t s = 0; s < in.size(); ++s) {
      dg += g[s] * in[s];
      db += g[s];
      gz[s] = p.gain[f] * g[s];
    }
    p.gain_grad[f] += dg;
    p.bias_grad[f] += db;
  }
  return z_grad;
}

std::vector<std::uint8_t> serialize_state(const OnlineNormState& state) {
  std::vector<std::uint8_t> out;
  out.reserve(48 + 5 * 8 * state.features());
  for (char c : kMagic) out.push_back(static_cast<std::uint8_t>(c));
  put_u64(out, state.features());
  put_f64(out, state.options.alpha_f);
  put_f64(out, state.options.alpha_b);
  put_f64(out, state.options.sigma_floor);
  put_u64(out, state.options.unit_norm_grad ? 1u : 0u);
  for (const auto* v : {&state.mu, &state.var, &state.eps_y, &state.eps_1, &state.grad_ms}) {
    for (double x : *v) put_f64(out, x);
  }
  return out;
}

OnlineNormState deserialize_state(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size() || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw std::runtime_error("online-norm state: bad magic");
  }
  Reader r(bytes.subspan(kMagic.size()));
  const std::uint64_t features = r.u64();
  if (features == 0 || features > (bytes.size() / 40)) {
    throw std::runtime_error("online-norm state: implausible feature count");
  }
  OnlineNormOptions opts;
  opts.alpha_f = r.f64();
  opts.alpha_b = r.f64();
  opts.sigma_floor = r.f64();
  opts.unit_norm_grad = (r.u64() & 1u) != 0;
  OnlineNormState state(features, opts);
  state.mu = r.f64s(features);
  state.var = r.f64s(features);
  state.eps_y = r.f64s(features);
  state.eps_1 = r.f64s(features);
  state.grad_ms = r.f64s(features);
  if (!r.done()) throw std::runtime_error("online-norm state: trailing bytes");
  for (double v : state.var) {
    if (!(v >= 0.0)) throw std::runtime_error("online-norm state: negative variance");
  }
  return state;
}

void save_state(const OnlineNormState& state, std::ostream& out) {
  const auto bytes = serialize_state(state);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("online-norm state: write failed");
}

OnlineNormState load_state(std::istream& in) {
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_state(bytes);
}

OnlineNormLayer::OnlineNormLayer(std::size_t features, OnlineNormOptions options, bool affine, bool layer_scaling)
    : state_(features, options), affine_(features), use_affine_(affine), use_layer_scaling_(layer_scaling) {}

FeatureMap OnlineNormLayer::forward(const FeatureMap& x) {
  if (pending_) throw StateError("OnlineNormLayer: forward called again before backward");
  Pending p;
  p.norm = forward_sample(state_, x);
  FeatureMap a = use_affine_ ? affine_forward(affine_, p.norm.y) : p.norm.y;
  FeatureMap out;
  if (use_layer_scaling_) {
    p.scale = layer_scale_forward(a, state_.options.sigma_floor);
    out = p.scale.z;
  } else {
    out = a;
  }
  pending_ = std::move(p);
  return out;
}

FeatureMap OnlineNormLayer::infer(const FeatureMap& x) const {
  FeatureMap y = normalize_frozen(state_, x);
  if (use_affine_) y = affine_forward(affine_, y);
  if (use_layer_scaling_) y = layer_scale_forward(y, state_.options.sigma_floor).z;
  return y;
}

FeatureMap OnlineNormLayer::backward(const FeatureMap& out_grad) {
  if (!pending_) throw StateError("OnlineNormLayer: backward without matching forward");
  Pending p = std::move(*pending_);
  pending_.reset();
  FeatureMap g = use_layer_scaling_ ? layer_scale_backward(out_grad, p.scale) : out_grad;
  if (use_affine_) g = affine_backward(affine_, p.norm.y, g);
  return backward_sample(state_, g, p.norm);
}

void OnlineNormLayer::reset() {
  state_.reset();
  pending_.reset();
}

}  // namespace onorm
