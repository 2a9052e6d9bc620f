#pragma once

// Online Normalization: per-feature streaming statistics in the forward pass,
// a two-stage control process in the backward pass, optional affine
// transform, and layer scaling across all features of a sample.
//
// Forward, per feature f of sample x_t (means over the spatial extent):
//
//   y_t   = (x_t - mu_{t-1}) / sigma_{t-1}
//   mu_t  = af * mu_{t-1} + (1 - af) * mean(x_t)
//   var_t = af * var_{t-1} + (1 - af) * var(x_t)
//           + af * (1 - af) * (mean(x_t) - mu_{t-1})^2
//
// Backward, given dL/dy:
//
//   xt'        = y' - (1 - ab) * eps_y_{t-1} * y
//   eps_y_t    = eps_y_{t-1} + mean(xt' * y)
//   x'         = xt' / sigma_{t-1} - (1 - ab) * eps_1_{t-1}
//   eps_1_t    = eps_1_{t-1} + mean(x')
//
// The accumulators track how far the streamed gradients are from being
// orthogonal to y and to the ones vector; feeding them back keeps both
// deviations bounded.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "onorm/tensor.hpp"

namespace onorm {

struct OnlineNormOptions {
  double alpha_f = 0.999;
  double alpha_b = 0.99;
  double sigma_floor = kSigmaFloor;
  // Divide the backward output by a running RMS of xt' instead of the
  // cached sigma_{t-1}.
  bool unit_norm_grad = false;
};

// Throws std::invalid_argument unless both decays lie strictly inside (0, 1)
// and sigma_floor > 0.
void validate(const OnlineNormOptions& options);

struct OnlineNormState {
  OnlineNormState(std::size_t features, OnlineNormOptions options = {});

  std::size_t features() const noexcept { return mu.size(); }

  // mu = 0, var = 1, eps_y = eps_1 = 0, grad_ms = 1; clears the handshake.
  void reset();

  OnlineNormOptions options;
  std::vector<double> mu;
  std::vector<double> var;
  std::vector<double> eps_y;
  std::vector<double> eps_1;
  // Running mean square of xt', only read when options.unit_norm_grad.
  std::vector<double> grad_ms;

  // Handshake counters: forward_steps counts training forwards since reset;
  // last_backward_step is the forward step most recently back-propagated.
  std::uint64_t forward_steps = 0;
  std::uint64_t last_backward_step = 0;
};

bool operator==(const OnlineNormState& a, const OnlineNormState& b);

struct ForwardCache {
  std::uint64_t step = 0;
  FeatureMap y;
  // max(sigma_{t-1}, floor) per feature, as used for this sample.
  std::vector<double> sigma_used;
};

// Normalizes x with the pre-update statistics and advances the state.
ForwardCache forward_sample(OnlineNormState& state, const FeatureMap& x);

// Normalizes with the current statistics without advancing them.
FeatureMap normalize_frozen(const OnlineNormState& state, const FeatureMap& x);

// Requires `cache` to come from the most recent forward_sample on `state` and
// not to have been back-propagated yet; StateError otherwise.
FeatureMap backward_sample(OnlineNormState& state, const FeatureMap& y_grad, const ForwardCache& cache);

struct LayerScaleCache {
  FeatureMap z;
  double zeta = 1.0;  // sqrt(mean(y^2)) over all features and positions
  double divisor = 1.0;  // max(zeta, floor)
};

LayerScaleCache layer_scale_forward(const FeatureMap& y, double sigma_floor = kSigmaFloor);
FeatureMap layer_scale_backward(const FeatureMap& z_grad, const LayerScaleCache& cache);

struct AffineParams {
  explicit AffineParams(std::size_t features)
      : gain(features, 1.0), bias(features, 0.0), gain_grad(features, 0.0), bias_grad(features, 0.0) {}

  std::vector<double> gain;
  std::vector<double> bias;
  std::vector<double> gain_grad;
  std::vector<double> bias_grad;
};

FeatureMap affine_forward(const AffineParams& p, const FeatureMap& z);
// Accumulates into p.gain_grad / p.bias_grad and returns dL/dz.
FeatureMap affine_backward(AffineParams& p, const FeatureMap& z, const FeatureMap& out_grad);

// Checkpoint record, little-endian regardless of host:
//
//   offset  size  field
//   0       8     magic "ONORMST1"
//   8       8     u64 feature count F
//   16      8     f64 alpha_f
//   24      8     f64 alpha_b
//   32      8     f64 sigma_floor
//   40      8     u64 flags (bit 0: unit_norm_grad)
//   48      8F    f64 mu[F]
//   ...     8F    f64 var[F], eps_y[F], eps_1[F], grad_ms[F] in that order
//
// Handshake counters are not stored; a loaded state expects a fresh forward.
std::vector<std::uint8_t> serialize_state(const OnlineNormState& state);
OnlineNormState deserialize_state(std::span<const std::uint8_t> bytes);
void save_state(const OnlineNormState& state, std::ostream& out);
OnlineNormState load_state(std::istream& in);

// Full layer: normalize -> affine -> layer scaling, with strict
// forward/backward interleaving in training mode.
class OnlineNormLayer {
 public:
  OnlineNormLayer(std::size_t features, OnlineNormOptions options = {}, bool affine = true,
                  bool layer_scaling = true);

  FeatureMap forward(const FeatureMap& x);
  // Inference with frozen statistics; never touches the handshake.
  FeatureMap infer(const FeatureMap& x) const;
  FeatureMap backward(const FeatureMap& out_grad);

  void reset();

  const OnlineNormState& state() const noexcept { return state_; }
  OnlineNormState& state() noexcept { return state_; }
  AffineParams& affine() noexcept { return affine_; }
  const AffineParams& affine() const noexcept { return affine_; }
  bool has_affine() const noexcept { return use_affine_; }
  bool has_layer_scaling() const noexcept { return use_layer_scaling_; }

 private:
  struct Pending {
    ForwardCache norm;
    LayerScaleCache scale;
  };

  OnlineNormState state_;
  AffineParams affine_;
  bool use_affine_;
  bool use_layer_scaling_;
  std::optional<Pending> pending_;
};

}  // namespace onorm
