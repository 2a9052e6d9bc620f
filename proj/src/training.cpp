#include "onorm/training.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "onorm/csv.hpp"
#include "onorm/errors.hpp"

namespace onorm {

const char* const kMetricsCsvHeader = "step,epoch,loss,accuracy,weight_norm_l2,eps_y_max,eps_1_max";

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
  if (!(eta >= 0.0) || !std::isfinite(eta)) fail("eta must be non-negative");
  if (!(mu >= 0.0 && mu < 1.0)) fail("mu must be in [0,1)");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("lambda must be non-negative");
  if (batch_size == 0) fail("batch_size must be positive");
  if (!(alpha_f > 0.0 && alpha_f < 1.0)) fail("alpha_f must be in (0,1)");
  if (!(alpha_b > 0.0 && alpha_b < 1.0)) fail("alpha_b must be in (0,1)");
  if (!(divergence_threshold > 0.0)) fail("divergence_threshold must be positive");
}

Evaluation evaluate(Network& net, const Dataset& data, std::size_t chunk) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t end = std::min(data.size(), start + chunk);
    const std::vector<FeatureMap> batch(data.inputs.begin() + static_cast<std::ptrdiff_t>(start),
                                        data.inputs.begin() + static_cast<std::ptrdiff_t>(end));
    const auto logits = net.forward(batch, Mode::Eval);
    const auto r = softmax_xent(logits, std::span<const int>(data.labels).subspan(start, end - start));
    loss += r.loss * static_cast<double>(end - start);
    correct += r.correct;
  }
  return {loss / static_cast<double>(data.size()), static_cast<double>(correct) / static_cast<double>(data.size())};
}

namespace {

MetricsRecord snapshot(Network& net, const Dataset& val, std::size_t step, std::size_t epoch) {
  MetricsRecord r;
  r.step = step;
  r.epoch = epoch;
  const Evaluation e = evaluate(net, val);
  r.loss = e.loss;
  r.accuracy = e.accuracy;
  r.weight_norm_l2 = net.weight_norm();
  const auto [ey, e1] = net.accumulator_max();
  r.eps_y_max = ey;
  r.eps_1_max = e1;
  return r;
}

bool diverged(double loss, double threshold) { return !std::isfinite(loss) || std::abs(loss) > threshold; }

}  // namespace

TrainResult train(const TrainConfig& config, Network& net, const Dataset& train_set, const Dataset& val_set) {
  config.validate();
  if (train_set.size() == 0 || val_set.size() == 0) throw std::invalid_argument("train: empty dataset");
  TrainResult result;
  Rng rng(config.seed);
  const bool streaming = net.has_online_norm();
  const std::size_t b = config.batch_size;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  net.zero_grad();

  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start + b <= order.size(); start += b) {
      double batch_loss = 0.0;
      try {
        if (streaming) {
          for (std::size_t i = start; i < start + b; ++i) {
            const std::vector<FeatureMap> one{train_set.inputs[order[i]]};
            const int label = train_set.labels[order[i]];
            const auto logits = net.forward(one, Mode::Train);
            const auto r = softmax_xent(logits, std::span<const int>(&label, 1), 1.0 / static_cast<double>(b));
            net.backward(r.grads);
            batch_loss += r.loss / static_cast<double>(b);
          }
        } else {
          std::vector<FeatureMap> batch;
          std::vector<int> labels;
          for (std::size_t i = start; i < start + b; ++i) {
            batch.push_back(train_set.inputs[order[i]]);
            labels.push_back(train_set.labels[order[i]]);
          }
          const auto logits = net.forward(batch, Mode::Train);
          const auto r = softmax_xent(logits, labels);
          net.backward(r.grads);
          batch_loss = r.loss;
        }
      } catch (const NumericError& e) {
        batch_loss = std::numeric_limits<double>::quiet_NaN();
        result.message = e.what();
      }
      if (diverged(batch_loss, config.divergence_threshold)) {
        MetricsRecord r;
        r.step = step;
        r.epoch = epoch;
        r.loss = batch_loss;
        r.accuracy = 0.0;
        result.records.push_back(r);
        result.diverged = true;
        if (result.message.empty()) result.message = "training loss diverged at step " + std::to_string(step);
        return result;
      }
      sgd_momentum_step(net, config.eta, config.mu, config.lambda);
      ++step;
      if (config.eval_interval > 0 && step % config.eval_interval == 0) {
        result.records.push_back(snapshot(net, val_set, step, epoch));
      }
    }
    if (config.eval_interval == 0) result.records.push_back(snapshot(net, val_set, step, epoch));
  }
  return result;
}

ScaledHyperparams scale_hyperparams(double eta, double mu, double lambda, std::size_t b_old, std::size_t b_new) {
  if (b_old == 0 || b_new == 0) throw std::invalid_argument("scale_hyperparams: batch sizes must be positive");
  const double ratio = static_cast<double>(b_new) / static_cast<double>(b_old);
  ScaledHyperparams h;
  h.eta_prime = ratio * eta;
  h.mu_prime = std::pow(mu, ratio);
  // With mu == 0 the correction factor is (1 - 0) / (1 - 0) = 1.
  h.eta_star = mu < 1.0 ? (1.0 - h.mu_prime) / (1.0 - mu) * h.eta_prime : h.eta_prime;
  h.lambda = lambda;
  return h;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& records) {
  CsvWriter csv(out, kMetricsCsvHeader);
  for (const auto& r : records) {
    csv.row(r.step, r.epoch, r.loss, r.accuracy, r.weight_norm_l2, r.eps_y_max, r.eps_1_max);
  }
}

}  // namespace onorm
