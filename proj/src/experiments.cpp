#include "onorm/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "onorm/csv.hpp"
#include "onorm/errors.hpp"

namespace onorm {

double angle_degrees(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("angle_degrees: length mismatch");
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  double diff = 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double u = a[i] / na;
    const double v = b[i] / nb;
    diff += (u - v) * (u - v);
    sum += (u + v) * (u + v);
  }
  return 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum)) * 180.0 / std::numbers::pi;
}

namespace {

Network make_bias_net(const BiasConfig& cfg, const Dataset& data, Rng& rng) {
  Network net;
  auto conv = std::make_unique<Conv2DLayer>(1, data.height, data.width, cfg.filters, cfg.kernel, rng);
  const std::size_t flat = cfg.filters * conv->out_height() * conv->out_width();
  NormSpec bn;
  bn.kind = NormalizerKind::Batch;
  net.add(std::move(conv));
  net.add(std::make_unique<NormLayer>(cfg.filters, bn));
  net.add(std::make_unique<ReluLayer>());
  net.add(std::make_unique<DenseLayer>(flat, data.classes, rng));
  return net;
}

std::vector<double> flat_grad(Network& net) {
  std::vector<double> g;
  for (const auto& p : net.params()) g.insert(g.end(), p.grad.begin(), p.grad.end());
  return g;
}

// Gradient of the mean loss over the samples listed in idx, as one batch.
std::vector<double> batch_gradient(Network& net, const Dataset& data, std::span<const std::size_t> idx) {
  std::vector<FeatureMap> batch;
  std::vector<int> labels;
  batch.reserve(idx.size());
  for (std::size_t i : idx) {
    batch.push_back(data.inputs[i]);
    labels.push_back(data.labels[i]);
  }
  net.zero_grad();
  const auto r = softmax_xent(net.forward(batch, Mode::Train), labels);
  net.backward(r.grads);
  return flat_grad(net);
}

double least_squares_slope(const std::vector<double>& y) {
  const double n = static_cast<double>(y.size());
  if (y.size() < 2) return 0.0;
  const double xm = (n + 1.0) / 2.0;  // x = 1..n
  double ym = 0.0;
  for (double v : y) ym += v;
  ym /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double dx = static_cast<double>(i + 1) - xm;
    sxy += dx * (y[i] - ym);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace

BiasReport gradient_bias_experiment(const BiasConfig& cfg) {
  if (cfg.repetitions == 0) throw std::invalid_argument("gradient bias: repetitions must be positive");
  for (std::size_t b : cfg.batch_sizes) {
    if (b < 2) throw std::invalid_argument("gradient bias: batch size must be at least 2");
    if (cfg.dataset_size % b != 0) throw std::invalid_argument("gradient bias: batch size must divide dataset size");
  }
  DatasetSpec spec;
  spec.kind = DatasetKind::SyntheticImages;
  spec.classes = 10;
  spec.samples = cfg.dataset_size;
  const Rng root(cfg.seed);
  const Dataset data = generate_dataset(spec, mix_seed(cfg.seed, 1));
  Rng init = root.split(2);
  const Network base = make_bias_net(cfg, data, init);

  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  Network truth_net = base;
  const std::vector<double> truth = batch_gradient(truth_net, data, all);

  const std::size_t nb = cfg.batch_sizes.size();
  std::vector<std::vector<double>> angles(nb, std::vector<double>(cfg.repetitions));
  const auto reps = static_cast<std::ptrdiff_t>(cfg.repetitions);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t r = 0; r < reps; ++r) {
    Network net = base;
    Rng rng = root.split(100 + static_cast<std::uint64_t>(r));
    for (std::size_t k = 0; k < nb; ++k) {
      const std::size_t b = cfg.batch_sizes[k];
      std::vector<std::size_t> order = all;
      // A single batch holding the whole population does not depend on order.
      if (b < order.size()) rng.shuffle(order);
      std::vector<double> avg(truth.size(), 0.0);
      const std::size_t batches = order.size() / b;
      for (std::size_t s = 0; s < batches; ++s) {
        const auto g = batch_gradient(net, data, std::span<const std::size_t>(order).subspan(s * b, b));
        for (std::size_t i = 0; i < g.size(); ++i) avg[i] += g[i];
      }
      if (batches > 1) {
        for (auto& v : avg) v /= static_cast<double>(batches);
      }
      angles[k][static_cast<std::size_t>(r)] = angle_degrees(avg, truth);
    }
  }

  BiasReport report;
  for (std::size_t k = 0; k < nb; ++k) {
    BiasEntry e;
    e.batch_size = cfg.batch_sizes[k];
    e.repetitions = cfg.repetitions;
    const auto& a = angles[k];
    e.mean_angle = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
    double ss = 0.0;
    for (double v : a) ss += (v - e.mean_angle) * (v - e.mean_angle);
    e.std_angle = std::sqrt(ss / static_cast<double>(a.size()));
    report.entries.push_back(e);
  }
  return report;
}

void write_bias_csv(std::ostream& out, const BiasReport& report) {
  CsvWriter csv(out, "batch_size,mean_angle_deg,std_angle_deg,repetitions");
  for (const auto& e : report.entries) csv.row(e.batch_size, e.mean_angle, e.std_angle, e.repetitions);
}

GrowthProfile activation_growth_experiment(const GrowthConfig& cfg) {
  if (cfg.depth == 0 || cfg.width == 0 || cfg.samples < 2) throw std::invalid_argument("growth: empty network or data");
  if (!(cfg.noise >= 0.0)) throw std::invalid_argument("growth: noise must be non-negative");
  if (!(cfg.sigma_bias >= 0.0 && cfg.sigma_bias < 1.0)) throw std::invalid_argument("growth: sigma_bias outside [0,1)");
  const std::size_t w = cfg.width;
  const std::size_t n = cfg.samples;
  const Rng root(cfg.seed);
  Rng data_rng = root.split(1);
  Rng weight_rng = root.split(2);
  Rng noise_rng = root.split(3);

  Matrix x(n, w);
  for (auto& v : x.data()) v = data_rng.normal();
  std::vector<Matrix> weights;
  const double sd = std::sqrt(2.0 / static_cast<double>(w));
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    Matrix m(w, w);
    for (auto& v : m.data()) v = weight_rng.normal(0.0, sd);
    weights.push_back(std::move(m));
  }

  // Column statistics of a (samples x width) activation matrix.
  auto column_moments = [&](const Matrix& a, std::vector<double>& mu, std::vector<double>& sigma) {
    FeatureMap fm(w, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < w; ++j) fm(j, i) = a(i, j);
    }
    mu = feature_mean(fm);
    sigma = feature_var(fm);
    for (auto& s : sigma) s = std::sqrt(s);
  };

  std::vector<std::vector<double>> mus(cfg.depth);
  std::vector<std::vector<double>> sigmas(cfg.depth);
  Matrix h = x;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    Matrix a = matmul(h, weights[l]);
    column_moments(a, mus[l], sigmas[l]);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        const double y = (a(i, j) - mus[l][j]) / std::max(sigmas[l][j], kSigmaFloor);
        a(i, j) = y > 0.0 ? y : 0.0;
      }
    }
    h = std::move(a);
  }

  for (std::size_t l = 0; l < cfg.depth; ++l) {
    for (std::size_t j = 0; j < w; ++j) {
      const double s = sigmas[l][j];
      const double dm = cfg.noise > 0.0 ? noise_rng.normal(0.0, cfg.noise) : 0.0;
      const double ds = cfg.noise > 0.0 ? noise_rng.normal(0.0, cfg.noise) : 0.0;
      mus[l][j] += dm * s;
      sigmas[l][j] = s * (1.0 - cfg.sigma_bias) * std::exp(ds);
    }
  }

  GrowthProfile profile;
  profile.config = cfg;
  h = x;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    Matrix a = matmul(h, weights[l]);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      auto row = a.row(i);
      for (std::size_t j = 0; j < w; ++j) row[j] = (row[j] - mus[l][j]) / std::max(sigmas[l][j], kSigmaFloor);
      if (cfg.layer_scaling) {
        const double zeta = std::max(std::sqrt(mean_square(row)), kSigmaFloor);
        for (auto& v : row) v /= zeta;
      }
      for (auto& v : row) {
        ss += v * v;
        v = v > 0.0 ? v : 0.0;
      }
    }
    profile.rms.push_back(std::sqrt(ss / static_cast<double>(n * w)));
    h = std::move(a);
  }
  std::vector<double> logs;
  for (double r : profile.rms) logs.push_back(std::log(std::max(r, 1e-300)));
  profile.log_slope = least_squares_slope(logs);
  return profile;
}

void write_growth_csv(std::ostream& out, const GrowthProfile& plain, const GrowthProfile& scaled) {
  if (plain.rms.size() != scaled.rms.size()) throw ShapeError("write_growth_csv: depth mismatch");
  CsvWriter csv(out, "layer,rms_without_scaling,rms_with_scaling");
  for (std::size_t l = 0; l < plain.rms.size(); ++l) csv.row(l + 1, plain.rms[l], scaled.rms[l]);
}

EquilibriumReport equilibrium_experiment(const EquilibriumConfig& cfg) {
  if (!(cfg.eta > 0.0) || !(cfg.lambda > 0.0)) throw std::invalid_argument("equilibrium: eta and lambda must be positive");
  if (cfg.steps < 4 || cfg.batch == 0 || cfg.classes < 3 || cfg.inputs == 0) {
    throw std::invalid_argument("equilibrium: degenerate configuration");
  }
  const Rng root(cfg.seed);
  Rng init = root.split(1);
  Rng stream = root.split(2);
  const std::size_t k = cfg.classes;
  const std::size_t d = cfg.inputs;
  Matrix teacher(k, d);
  for (auto& v : teacher.data()) v = init.normal();
  DenseLayer layer(d, k, init);
  LayerNorm norm;

  EquilibriumReport rep;
  rep.weight_norm.reserve(cfg.steps);
  rep.grad_norm.reserve(cfg.steps);
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    std::vector<FeatureMap> xs;
    std::vector<int> labels;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      std::vector<double> x(d);
      for (auto& v : x) v = stream.normal();
      const auto logits = matvec(teacher, x);
      int label = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
      if (stream.uniform() < cfg.label_noise) label = static_cast<int>(stream.index(k));
      xs.emplace_back(d, 1, std::move(x));
      labels.push_back(label);
    }
    const auto a = layer.forward(xs, Mode::Train);
    const auto y = norm.forward(a);
    const auto r = softmax_xent(y, labels);
    layer.backward(norm.backward(r.grads));

    auto params = layer.params();
    ParamRef& w = params[0];
    if (cfg.zero_gradient) std::fill(w.grad.begin(), w.grad.end(), 0.0);
    rep.grad_norm.push_back(l2_norm(w.grad));
    // Plain SGD: w <- w - eta (g + lambda w). The bias is frozen at zero; the
    // normalization removes any common offset anyway.
    for (std::size_t i = 0; i < w.value.size(); ++i) w.value[i] -= cfg.eta * (w.grad[i] + cfg.lambda * w.value[i]);
    for (auto& p : params) std::fill(p.grad.begin(), p.grad.end(), 0.0);
    const double wn = l2_norm(w.value);
    if (!std::isfinite(wn)) throw DivergenceError("equilibrium: weights became non-finite at step " + std::to_string(t));
    rep.weight_norm.push_back(wn);
  }

  const std::size_t from = cfg.steps - cfg.steps / 4;
  const auto count = static_cast<double>(cfg.steps - from);
  rep.mean_weight_norm = std::accumulate(rep.weight_norm.begin() + static_cast<std::ptrdiff_t>(from),
                                         rep.weight_norm.end(), 0.0) / count;
  rep.mean_grad_norm = std::accumulate(rep.grad_norm.begin() + static_cast<std::ptrdiff_t>(from),
                                       rep.grad_norm.end(), 0.0) / count;
  rep.predicted = std::sqrt(cfg.eta / (2.0 * cfg.lambda)) * rep.mean_grad_norm;
  rep.ratio = rep.predicted > 0.0 ? rep.mean_weight_norm / rep.predicted : 0.0;
  return rep;
}

void write_equilibrium_csv(std::ostream& out, const EquilibriumReport& report) {
  CsvWriter csv(out, "step,weight_norm,grad_norm");
  for (std::size_t t = 0; t < report.weight_norm.size(); ++t) csv.row(t + 1, report.weight_norm[t], report.grad_norm[t]);
}

std::vector<SweepCell> decay_sweep(const SweepConfig& cfg) {
  if (cfg.alpha_f.empty() || cfg.alpha_b.empty()) throw std::invalid_argument("sweep: empty grid");
  for (double a : cfg.alpha_f) {
    if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("sweep: alpha_f outside (0,1)");
  }
  for (double a : cfg.alpha_b) {
    if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("sweep: alpha_b outside (0,1)");
  }
  const Rng root(cfg.train.seed);
  const Dataset data = generate_dataset(cfg.data, mix_seed(cfg.train.seed, 1));
  Rng split_rng = root.split(2);
  const auto [train_set, val_set] = split_dataset(data, cfg.holdout, split_rng);

  std::vector<SweepCell> cells;
  for (double af : cfg.alpha_f) {
    for (double ab : cfg.alpha_b) cells.push_back({af, ab, 0.0, 0.0, false});
  }
  const auto n = static_cast<std::ptrdiff_t>(cells.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    SweepCell& cell = cells[static_cast<std::size_t>(i)];
    TrainConfig tc = cfg.train;
    tc.normalizer = NormalizerKind::Online;
    tc.alpha_f = cell.alpha_f;
    tc.alpha_b = cell.alpha_b;
    NormSpec ns;
    ns.alpha_f = cell.alpha_f;
    ns.alpha_b = cell.alpha_b;
    Rng init = root.split(3);
    try {
      Network net = make_mlp(train_set.input_size(), cfg.hidden, data.classes, ns, init);
      const TrainResult r = train(tc, net, train_set, val_set);
      cell.diverged = r.diverged;
      cell.loss = r.records.empty() ? std::numeric_limits<double>::quiet_NaN() : r.records.back().loss;
      cell.accuracy = r.records.empty() ? 0.0 : r.records.back().accuracy;
    } catch (const std::exception&) {
      cell.diverged = true;
      cell.loss = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return cells;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepCell>& cells) {
  CsvWriter csv(out, "alpha_f,alpha_b,final_loss,final_accuracy,diverged");
  for (const auto& c : cells) csv.row(c.alpha_f, c.alpha_b, c.loss, c.accuracy, c.diverged ? 1 : 0);
}

}  // namespace onorm
