#pragma once

// Flat `key = value` run configuration. Grammar (see README):
//
//   line    := blank | comment | entry
//   comment := '#' anything
//   entry   := key '=' value [comment]
//   value   := number | 'true' | 'false' | word | '"' chars '"' | list
//   list    := number (',' number)*
//
// Unknown keys, repeated keys, malformed values and out-of-range values raise
// ConfigError carrying the 1-based line number.

#include <string>
#include <string_view>
#include <vector>

#include "onorm/dataset.hpp"
#include "onorm/experiments.hpp"
#include "onorm/network.hpp"
#include "onorm/training.hpp"

namespace onorm {

struct RunConfig {
  TrainConfig train;
  DatasetSpec data;
  std::size_t hidden = 32;
  double holdout = 0.2;
  bool layer_scaling = true;
  bool unit_norm_grad = false;
  BiasConfig bias;
  GrowthConfig growth;
  EquilibriumConfig equilibrium;
  std::vector<double> sweep_alpha_f{0.9, 0.99, 0.999, 0.9999};
  std::vector<double> sweep_alpha_b{0.9, 0.99, 0.999, 0.9999};

  // Propagates train.seed to every experiment.
  void set_seed(std::uint64_t seed);
  NormSpec norm_spec() const;
  SweepConfig sweep() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::string& path);
// Every key, one per line, in a form parse_config reads back to an equal config.
std::string serialize_config(const RunConfig& config);

// Generates (or loads) the dataset with mix_seed(seed, 1), holds out
// `holdout` of it with Rng(seed).split(2), initializes the MLP with
// Rng(seed).split(3) and trains it.
TrainResult run_training(const RunConfig& config);

}  // namespace onorm
