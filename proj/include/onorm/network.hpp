#pragma once

// Small feed-forward networks with hand-written backprop. Every layer works on
// a batch of FeatureMaps; dense layers flatten their input and emit (out, 1).

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "onorm/online_norm.hpp"
#include "onorm/reference_norms.hpp"
#include "onorm/tensor.hpp"

namespace onorm {

enum class Mode { Train, Eval };

enum class NormalizerKind { None, Online, Batch, Layer };

std::string to_string(NormalizerKind kind);
// Accepts "none", "online", "batch", "layer"; throws std::invalid_argument.
NormalizerKind parse_normalizer(const std::string& name);

// One trainable tensor. `decay` marks tensors that receive L2 decay.
struct ParamRef {
  std::span<double> value;
  std::span<double> grad;
  std::span<double> velocity;
  bool decay = false;
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::vector<FeatureMap> forward(const std::vector<FeatureMap>& batch, Mode mode) = 0;
  // Accumulates parameter gradients and returns gradients for the inputs of
  // the most recent training forward.
  virtual std::vector<FeatureMap> backward(const std::vector<FeatureMap>& grads) = 0;
  virtual std::vector<ParamRef> params() { return {}; }
  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual std::string name() const = 0;
};

class DenseLayer final : public Layer {
 public:
  DenseLayer(std::size_t in, std::size_t out);
  // He-normal weights, zero bias.
  DenseLayer(std::size_t in, std::size_t out, Rng& rng);

  std::vector<FeatureMap> forward(const std::vector<FeatureMap>& batch, Mode mode) override;
  std::vector<FeatureMap> backward(const std::vector<FeatureMap>& grads) override;
  std::vector<ParamRef> params() override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<DenseLayer>(*this); }
  std::string name() const override { return "dense"; }

  Matrix& weights() noexcept { return w_; }
  const Matrix& weights() const noexcept { return w_; }
  std::vector<double>& bias() noexcept { return b_; }
  const Matrix& weight_grad() const noexcept { return gw_; }
  const std::vector<double>& bias_grad() const noexcept { return gb_; }
  const Matrix& weight_velocity() const noexcept { return vw_; }

 private:
  Matrix w_, gw_, vw_;
  std::vector<double> b_, gb_, vb_;
  std::vector<FeatureMap> inputs_;
};

// Valid-padding 2D convolution, stride one. Input maps are (channels, h*w)
// in row-major spatial order; output is (filters, (h-k+1)*(w-k+1)).
class Conv2DLayer final : public Layer {
 public:
  Conv2DLayer(std::size_t channels, std::size_t height, std::size_t width, std::size_t filters, std::size_t kernel);
  Conv2DLayer(std::size_t channels, std::size_t height, std::size_t width, std::size_t filters, std::size_t kernel,
              Rng& rng);

  std::vector<FeatureMap> forward(const std::vector<FeatureMap>& batch, Mode mode) override;
  std::vector<FeatureMap> backward(const std::vector<FeatureMap>& grads) override;
  std::vector<ParamRef> params() override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2DLayer>(*this); }
  std::string name() const override { return "conv2d"; }

  std::size_t out_height() const noexcept { return h_ - k_ + 1; }
  std::size_t out_width() const noexcept { return w_ - k_ + 1; }
  std::size_t filters() const noexcept { return filters_; }
  // Row f holds filter f as (channel, ky, kx).
  Matrix& weights() noexcept { return weights_; }
  std::vector<double>& bias() noexcept { return bias_; }
  const Matrix& weight_grad() const noexcept { return gw_; }

 private:
  std::size_t c_, h_, w_, filters_, k_;
  Matrix weights_, gw_, vw_;
  std::vector<double> bias_, gb_, vb_;
  std::vector<FeatureMap> inputs_;
};

class ReluLayer final : public Layer {
 public:
  std::vector<FeatureMap> forward(const std::vector<FeatureMap>& batch, Mode mode) override;
  std::vector<FeatureMap> backward(const std::vector<FeatureMap>& grads) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReluLayer>(*this); }
  std::string name() const override { return "relu"; }

 private:
  std::vector<FeatureMap> inputs_;
};

struct NormSpec {
  NormalizerKind kind = NormalizerKind::Online;
  double alpha_f = 0.999;
  double alpha_b = 0.99;
  bool layer_scaling = true;  // online only
  bool unit_norm_grad = false;
  double running_decay = 0.99;  // batch norm inference statistics
};

// Normalizer followed by a per-feature affine transform. The online kind
// streams: a training forward takes exactly one sample and must be followed
// by its backward before the next forward.
class NormLayer final : public Layer {
 public:
  NormLayer(std::size_t features, const NormSpec& spec);

  std::vector<FeatureMap> forward(const std::vector<FeatureMap>& batch, Mode mode) override;
  std::vector<FeatureMap> backward(const std::vector<FeatureMap>& grads) override;
  std::vector<ParamRef> params() override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<NormLayer>(*this); }
  std::string name() const override { return to_string(spec_.kind) + "-norm"; }

  NormalizerKind kind() const noexcept { return spec_.kind; }
  // Null unless kind() == Online.
  const OnlineNormLayer* online() const noexcept { return online_ ? &*online_ : nullptr; }
  OnlineNormLayer* online() noexcept { return online_ ? &*online_ : nullptr; }
  AffineParams& affine() noexcept;

 private:
  NormSpec spec_;
  std::optional<OnlineNormLayer> online_;
  std::optional<BatchNorm> batch_;
  std::optional<LayerNorm> layer_;
  AffineParams affine_;  // batch and layer kinds; online keeps its own
  std::vector<double> vel_gain_, vel_bias_;
  std::vector<FeatureMap> normalized_;
};

class Network {
 public:
  Network() = default;
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  Network& add(std::unique_ptr<Layer> layer);
  std::vector<FeatureMap> forward(const std::vector<FeatureMap>& batch, Mode mode);
  std::vector<FeatureMap> backward(const std::vector<FeatureMap>& grads);
  std::vector<ParamRef> params();
  void zero_grad();

  std::size_t size() const noexcept { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  bool has_online_norm() const;
  // Largest |eps_y| and |eps_1| over all online normalizers; zero if none.
  std::pair<double, double> accumulator_max() const;
  // L2 norm over all decayed parameters.
  double weight_norm();

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// dense(in, hidden) -> norm -> relu -> dense(hidden, classes). A None kind
// omits the normalizer.
Network make_mlp(std::size_t inputs, std::size_t hidden, std::size_t classes, const NormSpec& norm, Rng& rng);

struct LossResult {
  double loss = 0.0;        // mean over the batch
  std::size_t correct = 0;  // argmax hits
  std::vector<FeatureMap> grads;
};

// Softmax cross-entropy averaged over the batch; gradients include the 1/B.
LossResult softmax_xent(const std::vector<FeatureMap>& logits, std::span<const int> labels, double grad_scale = 1.0);

// nu <- mu nu + (1 - mu)(g + lambda w); w <- w - eta nu; g <- 0. Decay only on
// parameters flagged for it.
void sgd_momentum_step(std::span<const ParamRef> params, double eta, double mu, double lambda);
void sgd_momentum_step(Network& net, double eta, double mu, double lambda);

}  // namespace onorm
