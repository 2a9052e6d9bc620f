#include "onorm/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "onorm/errors.hpp"

namespace onorm {

std::string to_string(NormalizerKind kind) {
  switch (kind) {
    case NormalizerKind::None: return "none";
    case NormalizerKind::Online: return "online";
    case NormalizerKind::Batch: return "batch";
    case NormalizerKind::Layer: return "layer";
  }
  return "none";
}

NormalizerKind parse_normalizer(const std::string& name) {
  if (name == "none") return NormalizerKind::None;
  if (name == "online") return NormalizerKind::Online;
  if (name == "batch") return NormalizerKind::Batch;
  if (name == "layer") return NormalizerKind::Layer;
  throw std::invalid_argument("unknown normalizer '" + name + "'");
}

namespace {

void he_init(Matrix& w, std::size_t fan_in, Rng& rng) {
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : w.data()) v = rng.normal(0.0, sd);
}

ParamRef ref(std::span<double> v, std::span<double> g, std::span<double> m, bool decay) {
  return ParamRef{v, g, m, decay};
}

}  // namespace

DenseLayer::DenseLayer(std::size_t in, std::size_t out)
    : w_(out, in), gw_(out, in), vw_(out, in), b_(out, 0.0), gb_(out, 0.0), vb_(out, 0.0) {
  if (in == 0 || out == 0) throw ShapeError("DenseLayer: zero dimension");
}

DenseLayer::DenseLayer(std::size_t in, std::size_t out, Rng& rng) : DenseLayer(in, out) { he_init(w_, in, rng); }

std::vector<FeatureMap> DenseLayer::forward(const std::vector<FeatureMap>& batch, Mode mode) {
  std::vector<FeatureMap> out(batch.size());
  for (const auto& x : batch) {
    if (x.size() != w_.cols()) throw ShapeError("DenseLayer: input size mismatch");
  }
  const auto n = static_cast<std::ptrdiff_t>(batch.size());
#pragma omp parallel for schedule(static) if (batch.size() * w_.size() >= (1u << 16))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& x = batch[static_cast<std::size_t>(i)];
    std::vector<double> y(w_.rows());
    for (std::size_t r = 0; r < w_.rows(); ++r) {
      const auto row = w_.row(r);
      double s = b_[r];
      for (std::size_t c = 0; c < row.size(); ++c) s += row[c] * x.data()[c];
      y[r] = s;
    }
    out[static_cast<std::size_t>(i)] = FeatureMap(w_.rows(), 1, std::move(y));
  }
  if (mode == Mode::Train) inputs_ = batch;
  return out;
}

std::vector<FeatureMap> DenseLayer::backward(const std::vector<FeatureMap>& grads) {
  if (grads.size() != inputs_.size()) throw StateError("DenseLayer: backward does not match last forward");
  std::vector<FeatureMap> out;
  out.reserve(grads.size());
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const auto& g = grads[i];
    const auto& x = inputs_[i];
    if (g.size() != w_.rows()) throw ShapeError("DenseLayer: gradient size mismatch");
    for (std::size_t r = 0; r < w_.rows(); ++r) {
      const double gr = g.data()[r];
      gb_[r] += gr;
      auto grow = gw_.row(r);
      for (std::size_t c = 0; c < grow.size(); ++c) grow[c] += gr * x.data()[c];
    }
    out.emplace_back(x.features(), x.spatial(), matvec_transposed(w_, g.data()));
  }
  inputs_.clear();
  return out;
}

std::vector<ParamRef> DenseLayer::params() {
  return {ref(w_.data(), gw_.data(), vw_.data(), true), ref(b_, gb_, vb_, false)};
}

Conv2DLayer::Conv2DLayer(std::size_t channels, std::size_t height, std::size_t width, std::size_t filters,
                         std::size_t kernel)
    : c_(channels),
      h_(height),
      w_(width),
      filters_(filters),
      k_(kernel),
      weights_(filters, channels * kernel * kernel),
      gw_(filters, channels * kernel * kernel),
      vw_(filters, channels * kernel * kernel),
      bias_(filters, 0.0),
      gb_(filters, 0.0),
      vb_(filters, 0.0) {
  if (channels == 0 || filters == 0 || kernel == 0) throw ShapeError("Conv2DLayer: zero dimension");
  if (kernel > height || kernel > width) throw ShapeError("Conv2DLayer: kernel larger than input");
}

Conv2DLayer::Conv2DLayer(std::size_t channels, std::size_t height, std::size_t width, std::size_t filters,
                         std::size_t kernel, Rng& rng)
    : Conv2DLayer(channels, height, width, filters, kernel) {
  he_init(weights_, channels * kernel * kernel, rng);
}

std::vector<FeatureMap> Conv2DLayer::forward(const std::vector<FeatureMap>& batch, Mode mode) {
  const std::size_t oh = out_height();
  const std::size_t ow = out_width();
  std::vector<FeatureMap> out;
  out.reserve(batch.size());
  for (const auto& x : batch) {
    if (x.features() != c_ || x.spatial() != h_ * w_) throw ShapeError("Conv2DLayer: input shape mismatch");
    FeatureMap y(filters_, oh * ow);
    for (std::size_t f = 0; f < filters_; ++f) {
      const auto wf = weights_.row(f);
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double s = bias_[f];
          for (std::size_t c = 0; c < c_; ++c) {
            for (std::size_t ky = 0; ky < k_; ++ky) {
              for (std::size_t kx = 0; kx < k_; ++kx) {
                s += wf[(c * k_ + ky) * k_ + kx] * x(c, (oy + ky) * w_ + ox + kx);
              }
            }
          }
          y(f, oy * ow + ox) = s;
        }
      }
    }
    out.push_back(std::move(y));
  }
  if (mode == Mode::Train) inputs_ = batch;
  return out;
}

std::vector<FeatureMap> Conv2DLayer::backward(const std::vector<FeatureMap>& grads) {
  if (grads.size() != inputs_.size()) throw StateError("Conv2DLayer: backward does not match last forward");
  const std::size_t oh = out_height();
  const std::size_t ow = out_width();
  std::vector<FeatureMap> out;
  out.reserve(grads.size());
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const auto& g = grads[i];
    const auto& x = inputs_[i];
    if (g.features() != filters_ || g.spatial() != oh * ow) throw ShapeError("Conv2DLayer: gradient shape mismatch");
    FeatureMap gx(c_, h_ * w_);
    for (std::size_t f = 0; f < filters_; ++f) {
      const auto wf = weights_.row(f);
      auto gwf = gw_.row(f);
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double go = g(f, oy * ow + ox);
          gb_[f] += go;
          for (std::size_t c = 0; c < c_; ++c) {
            for (std::size_t ky = 0; ky < k_; ++ky) {
              for (std::size_t kx = 0; kx < k_; ++kx) {
                const std::size_t wi = (c * k_ + ky) * k_ + kx;
                const std::size_t xi = (oy + ky) * w_ + ox + kx;
                gwf[wi] += go * x(c, xi);
                gx(c, xi) += go * wf[wi];
              }
            }
          }
        }
      }
    }
    out.push_back(std::move(gx));
  }
  inputs_.clear();
  return out;
}

std::vector<ParamRef> Conv2DLayer::params() {
  return {ref(weights_.data(), gw_.data(), vw_.data(), true), ref(bias_, gb_, vb_, false)};
}

std::vector<FeatureMap> ReluLayer::forward(const std::vector<FeatureMap>& batch, Mode mode) {
  std::vector<FeatureMap> out;
  out.reserve(batch.size());
  for (const auto& x : batch) out.emplace_back(x.features(), x.spatial(), relu(x.data()));
  if (mode == Mode::Train) inputs_ = batch;
  return out;
}

std::vector<FeatureMap> ReluLayer::backward(const std::vector<FeatureMap>& grads) {
  if (grads.size() != inputs_.size()) throw StateError("ReluLayer: backward does not match last forward");
  std::vector<FeatureMap> out;
  out.reserve(grads.size());
  for (std::size_t i = 0; i < grads.size(); ++i) {
    out.emplace_back(inputs_[i].features(), inputs_[i].spatial(), relu_backward(inputs_[i].data(), grads[i].data()));
  }
  inputs_.clear();
  return out;
}

NormLayer::NormLayer(std::size_t features, const NormSpec& spec)
    : spec_(spec), affine_(features), vel_gain_(features, 0.0), vel_bias_(features, 0.0) {
  switch (spec.kind) {
    case NormalizerKind::Online: {
      OnlineNormOptions o;
      o.alpha_f = spec.alpha_f;
      o.alpha_b = spec.alpha_b;
      o.unit_norm_grad = spec.unit_norm_grad;
      online_.emplace(features, o, true, spec.layer_scaling);
      break;
    }
    case NormalizerKind::Batch: batch_.emplace(features, spec.running_decay); break;
    case NormalizerKind::Layer: layer_.emplace(); break;
    case NormalizerKind::None: throw std::invalid_argument("NormLayer: kind none has no layer");
  }
}

AffineParams& NormLayer::affine() noexcept { return online_ ? online_->affine() : affine_; }

std::vector<FeatureMap> NormLayer::forward(const std::vector<FeatureMap>& batch, Mode mode) {
  if (online_) {
    std::vector<FeatureMap> out;
    if (mode == Mode::Eval) {
      for (const auto& x : batch) out.push_back(online_->infer(x));
      return out;
    }
    if (batch.size() != 1) throw StateError("online normalizer trains one sample at a time");
    out.push_back(online_->forward(batch[0]));
    return out;
  }
  std::vector<FeatureMap> y;
  if (mode == Mode::Train) {
    y = batch_ ? batch_->forward(batch) : layer_->forward(batch);
    normalized_ = y;
  } else {
    for (const auto& x : batch) y.push_back(batch_ ? batch_->infer(x) : layer_->infer(x));
  }
  for (auto& m : y) m = affine_forward(affine_, m);
  return y;
}

std::vector<FeatureMap> NormLayer::backward(const std::vector<FeatureMap>& grads) {
  if (online_) {
    if (grads.size() != 1) throw StateError("online normalizer trains one sample at a time");
    return {online_->backward(grads[0])};
  }
  if (grads.size() != normalized_.size()) throw StateError("NormLayer: backward does not match last forward");
  std::vector<FeatureMap> gz;
  gz.reserve(grads.size());
  for (std::size_t i = 0; i < grads.size(); ++i) gz.push_back(affine_backward(affine_, normalized_[i], grads[i]));
  normalized_.clear();
  return batch_ ? batch_->backward(gz) : layer_->backward(gz);
}

std::vector<ParamRef> NormLayer::params() {
  AffineParams& a = affine();
  return {ref(a.gain, a.gain_grad, vel_gain_, false), ref(a.bias, a.bias_grad, vel_bias_, false)};
}

Network::Network(const Network& other) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    Network copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Network& Network::add(std::unique_ptr<Layer> layer) {
  layers_.push_back(std::move(layer));
  return *this;
}

std::vector<FeatureMap> Network::forward(const std::vector<FeatureMap>& batch, Mode mode) {
  std::vector<FeatureMap> x = batch;
  for (auto& l : layers_) x = l->forward(x, mode);
  return x;
}

std::vector<FeatureMap> Network::backward(const std::vector<FeatureMap>& grads) {
  std::vector<FeatureMap> g = grads;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<ParamRef> Network::params() {
  std::vector<ParamRef> out;
  for (auto& l : layers_) {
    for (auto& p : l->params()) out.push_back(p);
  }
  return out;
}

void Network::zero_grad() {
  for (auto& p : params()) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

bool Network::has_online_norm() const {
  return std::any_of(layers_.begin(), layers_.end(), [](const auto& l) {
    const auto* n = dynamic_cast<const NormLayer*>(l.get());
    return n != nullptr && n->kind() == NormalizerKind::Online;
  });
}

std::pair<double, double> Network::accumulator_max() const {
  double ey = 0.0;
  double e1 = 0.0;
  for (const auto& l : layers_) {
    const auto* n = dynamic_cast<const NormLayer*>(l.get());
    if (n == nullptr || n->online() == nullptr) continue;
    const auto& s = n->online()->state();
    for (double v : s.eps_y) ey = std::max(ey, std::abs(v));
    for (double v : s.eps_1) e1 = std::max(e1, std::abs(v));
  }
  return {ey, e1};
}

double Network::weight_norm() {
  double s = 0.0;
  for (const auto& p : params()) {
    if (!p.decay) continue;
    for (double v : p.value) s += v * v;
  }
  return std::sqrt(s);
}

Network make_mlp(std::size_t inputs, std::size_t hidden, std::size_t classes, const NormSpec& norm, Rng& rng) {
  Network net;
  net.add(std::make_unique<DenseLayer>(inputs, hidden, rng));
  if (norm.kind != NormalizerKind::None) net.add(std::make_unique<NormLayer>(hidden, norm));
  net.add(std::make_unique<ReluLayer>());
  net.add(std::make_unique<DenseLayer>(hidden, classes, rng));
  return net;
}

LossResult softmax_xent(const std::vector<FeatureMap>& logits, std::span<const int> labels, double grad_scale) {
  if (logits.size() != labels.size()) throw ShapeError("softmax_xent: label count mismatch");
  if (logits.empty()) throw ShapeError("softmax_xent: empty batch");
  LossResult r;
  const double inv_b = grad_scale / static_cast<double>(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto z = logits[i].data();
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= z.size()) throw ShapeError("softmax_xent: label out of range");
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    const double lse = zmax + std::log(sum);
    total += lse - z[static_cast<std::size_t>(label)];
    const auto best = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    if (best == static_cast<std::size_t>(label)) ++r.correct;
    FeatureMap g(logits[i].features(), logits[i].spatial());
    for (std::size_t k = 0; k < z.size(); ++k) {
      const double p = std::exp(z[k] - lse);
      g.data()[k] = (p - (k == static_cast<std::size_t>(label) ? 1.0 : 0.0)) * inv_b;
    }
    r.grads.push_back(std::move(g));
  }
  r.loss = total / static_cast<double>(logits.size());
  return r;
}

void sgd_momentum_step(std::span<const ParamRef> params, double eta, double mu, double lambda) {
  for (const auto& p : params) {
    const double l = p.decay ? lambda : 0.0;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      p.velocity[i] = mu * p.velocity[i] + (1.0 - mu) * (p.grad[i] + l * p.value[i]);
      p.value[i] -= eta * p.velocity[i];
      p.grad[i] = 0.0;
    }
  }
}

void sgd_momentum_step(Network& net, double eta, double mu, double lambda) {
  const auto p = net.params();
  sgd_momentum_step(p, eta, mu, lambda);
}

}  // namespace onorm
