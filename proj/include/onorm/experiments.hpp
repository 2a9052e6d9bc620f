#pragma once

// Desk-scale diagnostics: gradient bias of small-batch normalization,
// activation growth under perturbed normalization statistics, weight-norm
// equilibrium under L2 decay, and decay-factor sweeps. Every result is a pure
// function of its configuration and seed.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "onorm/dataset.hpp"
#include "onorm/training.hpp"

namespace onorm {

// Angle in degrees between two vectors, computed as 2 atan2(|a^ - b^|, |a^ + b^|)
// so that identical vectors give exactly 0. Zero vectors give 0.
double angle_degrees(std::span<const double> a, std::span<const double> b);

struct BiasConfig {
  std::size_t dataset_size = 2048;
  std::vector<std::size_t> batch_sizes{2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048};
  std::size_t repetitions = 10;
  std::size_t filters = 8;
  std::size_t kernel = 3;
  std::uint64_t seed = 1;

  friend bool operator==(const BiasConfig&, const BiasConfig&) = default;
};

struct BiasEntry {
  std::size_t batch_size = 0;
  double mean_angle = 0.0;  // degrees
  std::size_t repetitions = 0;
  double std_angle = 0.0;
};

struct BiasReport {
  std::vector<BiasEntry> entries;
};

// conv -> batch norm -> relu -> dense -> softmax with weights held fixed. For
// each batch size the per-batch gradients are averaged over one shuffled pass
// of the dataset and compared with the full-population gradient.
BiasReport gradient_bias_experiment(const BiasConfig& config);
void write_bias_csv(std::ostream& out, const BiasReport& report);

struct GrowthConfig {
  std::size_t depth = 64;
  std::size_t width = 64;
  std::size_t samples = 256;
  double noise = 0.05;       // lognormal sigma on scale, gaussian on mean
  double sigma_bias = 0.05;  // scale estimates multiplied by (1 - sigma_bias)
  bool layer_scaling = false;
  std::uint64_t seed = 1;

  friend bool operator==(const GrowthConfig&, const GrowthConfig&) = default;
};

struct GrowthProfile {
  GrowthConfig config;
  std::vector<double> rms;  // per layer, after normalization, before relu
  double log_slope = 0.0;   // least-squares slope of log(rms) against layer index
};

// A chain of dense -> normalize -> (layer scaling) -> relu layers. Per-layer
// statistics come from an exactly normalized reference pass; inference then
// uses perturbed copies of them.
GrowthProfile activation_growth_experiment(const GrowthConfig& config);
void write_growth_csv(std::ostream& out, const GrowthProfile& plain, const GrowthProfile& scaled);

struct EquilibriumConfig {
  double eta = 0.1;
  double lambda = 1e-3;
  std::size_t steps = 20000;
  std::size_t inputs = 20;
  std::size_t classes = 5;
  std::size_t batch = 16;
  double label_noise = 0.1;
  bool zero_gradient = false;  // apply only the decay term
  std::uint64_t seed = 1;

  friend bool operator==(const EquilibriumConfig&, const EquilibriumConfig&) = default;
};

struct EquilibriumReport {
  std::vector<double> weight_norm;  // after each step
  std::vector<double> grad_norm;    // loss gradient norm at each step
  double mean_weight_norm = 0.0;    // final quartile
  double mean_grad_norm = 0.0;      // final quartile
  double predicted = 0.0;           // sqrt(eta / 2 lambda) * mean_grad_norm
  double ratio = 0.0;               // mean_weight_norm / predicted
};

// Linear layer followed by per-sample layer normalization and softmax, trained
// with plain SGD and L2 decay on a stationary stream. Throws DivergenceError
// on non-finite weights.
EquilibriumReport equilibrium_experiment(const EquilibriumConfig& config);
void write_equilibrium_csv(std::ostream& out, const EquilibriumReport& report);

struct SweepConfig {
  std::vector<double> alpha_f{0.9, 0.99, 0.999, 0.9999};
  std::vector<double> alpha_b{0.9, 0.99, 0.999, 0.9999};
  TrainConfig train;
  DatasetSpec data;
  std::size_t hidden = 32;
  double holdout = 0.2;
};

struct SweepCell {
  double alpha_f = 0.0;
  double alpha_b = 0.0;
  double loss = 0.0;
  double accuracy = 0.0;
  bool diverged = false;
};

// One online-norm training run per grid cell; cells run in parallel and share
// the dataset and initial weights.
std::vector<SweepCell> decay_sweep(const SweepConfig& config);
void write_sweep_csv(std::ostream& out, const std::vector<SweepCell>& cells);

}  // namespace onorm
