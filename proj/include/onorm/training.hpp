#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "onorm/dataset.hpp"
#include "onorm/network.hpp"

namespace onorm {

struct TrainConfig {
  double eta = 0.05;
  double mu = 0.9;
  double lambda = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 5;
  std::uint64_t seed = 1;
  NormalizerKind normalizer = NormalizerKind::Online;
  double alpha_f = 0.999;
  double alpha_b = 0.99;
  // Optimizer steps between evaluations; 0 evaluates once per epoch.
  std::size_t eval_interval = 0;
  double divergence_threshold = 1e6;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct MetricsRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;      // validation loss
  double accuracy = 0.0;  // validation accuracy in [0, 1]
  double weight_norm_l2 = 0.0;
  double eps_y_max = 0.0;
  double eps_1_max = 0.0;
};

struct TrainResult {
  std::vector<MetricsRecord> records;
  bool diverged = false;
  std::string message;
};

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

Evaluation evaluate(Network& net, const Dataset& data, std::size_t chunk = 256);

// Mini-batch SGD with momentum. Networks with an online normalizer stream
// samples one at a time (forward then backward) and apply the accumulated
// gradient every batch_size samples. Incomplete trailing batches are dropped.
// Divergence (|loss| above threshold or non-finite) ends training with a final
// record carrying the offending training loss.
TrainResult train(const TrainConfig& config, Network& net, const Dataset& train_set, const Dataset& val_set);

struct ScaledHyperparams {
  double eta_prime = 0.0;  // linear in batch size
  double mu_prime = 0.0;   // equal per-sample decay
  double eta_star = 0.0;   // eta_prime corrected for the (1 - mu) convention
  double lambda = 0.0;     // unchanged
};

ScaledHyperparams scale_hyperparams(double eta, double mu, double lambda, std::size_t b_old, std::size_t b_new);

extern const char* const kMetricsCsvHeader;
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& records);

}  // namespace onorm
