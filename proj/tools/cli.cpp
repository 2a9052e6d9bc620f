#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include "onorm/batched_emulation.hpp"
#include "onorm/checks.hpp"
#include "onorm/config.hpp"
#include "onorm/errors.hpp"
#include "onorm/experiments.hpp"
#include "onorm/online_norm.hpp"

namespace onorm::cli {
namespace {

namespace fs = std::filesystem;

// Failures inside a subcommand; carries the exit code.
struct Failure {
  int code;
  std::string message;
};

struct Options {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::size_t emulate_n = 4;
  double emulate_alpha = 0.99;
  std::size_t emulate_steps = 4096;
  bool selftest_all = false;
};

RunConfig load(const Options& o) {
  RunConfig c = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
  if (o.seed) c.set_seed(*o.seed);
  return c;
}

std::ofstream open_output(const Options& o, const std::string& name) {
  fs::create_directories(o.out_dir);
  const fs::path path = fs::path(o.out_dir) / name;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Failure{kRuntime, "cannot write " + path.string()};
  return f;
}

int cmd_train(const Options& o, std::ostream& out) {
  const RunConfig c = load(o);
  try {
    c.train.validate();
  } catch (const std::invalid_argument& e) {
    throw Failure{kConfig, e.what()};
  }
  const TrainResult r = run_training(c);
  auto f = open_output(o, "metrics.csv");
  write_metrics_csv(f, r.records);
  if (r.diverged) throw Failure{kRuntime, "diverged: " + r.message};
  if (!r.records.empty()) {
    out << "final validation loss " << r.records.back().loss << ", accuracy " << r.records.back().accuracy << '\n';
  }
  return kOk;
}

int cmd_grad_bias(const Options& o, std::ostream& out) {
  const auto report = gradient_bias_experiment(load(o).bias);
  auto f = open_output(o, "grad_bias.csv");
  write_bias_csv(f, report);
  for (const auto& e : report.entries) out << "batch " << e.batch_size << ": " << e.mean_angle << " deg\n";
  return kOk;
}

int cmd_growth(const Options& o, std::ostream& out) {
  GrowthConfig plain = load(o).growth;
  GrowthConfig scaled = plain;
  plain.layer_scaling = false;
  scaled.layer_scaling = true;
  const auto p = activation_growth_experiment(plain);
  const auto s = activation_growth_experiment(scaled);
  auto f = open_output(o, "growth.csv");
  write_growth_csv(f, p, s);
  out << "log-rms slope without scaling " << p.log_slope << ", with scaling " << s.log_slope << '\n';
  return kOk;
}

int cmd_equilibrium(const Options& o, std::ostream& out) {
  const auto r = equilibrium_experiment(load(o).equilibrium);
  auto f = open_output(o, "equilibrium.csv");
  write_equilibrium_csv(f, r);
  out << "final-quartile |w| " << r.mean_weight_norm << ", predicted " << r.predicted << ", ratio " << r.ratio
      << '\n';
  return kOk;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  const auto cells = decay_sweep(load(o).sweep());
  auto f = open_output(o, "sweep.csv");
  write_sweep_csv(f, cells);
  std::size_t diverged = 0;
  for (const auto& c : cells) diverged += c.diverged ? 1 : 0;
  out << cells.size() << " cells, " << diverged << " diverged\n";
  return kOk;
}

// Streams random multi-position samples through the online normalizer and
// through the group-of-n emulation; reports the largest disagreement.
int cmd_emulate_check(const Options& o, std::ostream& out) {
  if (o.emulate_n == 0) throw Failure{kUsage, "--n must be positive"};
  if (!(o.emulate_alpha > 0.0 && o.emulate_alpha < 1.0)) throw Failure{kUsage, "--alpha must lie in (0, 1)"};
  const std::size_t n = o.emulate_n;
  const std::size_t steps = o.emulate_steps - o.emulate_steps % n;
  Rng rng = Rng(load(o).train.seed).split(7);
  OnlineNormOptions opts;
  opts.alpha_f = o.emulate_alpha;
  OnlineNormState streaming(1, opts);
  VarianceEmulationState batched(n, o.emulate_alpha);
  double worst = 0.0;
  for (std::size_t g = 0; g < steps; g += n) {
    std::vector<double> means(n);
    std::vector<double> vars(n);
    std::vector<double> mu(n);
    std::vector<double> var(n);
    for (std::size_t i = 0; i < n; ++i) {
      FeatureMap x(1, 4);
      for (auto& v : x.values()) v = rng.normal(2.0, 3.0);
      double m = 0.0;
      for (double v : x.values()) m += v / 4.0;
      double s = 0.0;
      for (double v : x.values()) s += (v - m) * (v - m) / 4.0;
      means[i] = m;
      vars[i] = s;
      forward_sample(streaming, x);
      mu[i] = streaming.mu[0];
      var[i] = streaming.var[0];
    }
    const auto r = batched_variance(batched, means, vars);
    for (std::size_t i = 0; i < n; ++i) {
      worst = std::max(worst, std::abs(r.mean[i] - mu[i]) / std::max(1.0, std::abs(mu[i])));
      worst = std::max(worst, std::abs(r.var[i] - var[i]) / std::max(1.0, var[i]));
    }
  }
  out << "n=" << n << " alpha=" << o.emulate_alpha << " steps=" << steps << " max deviation " << worst << '\n';
  if (!(worst <= 1e-10)) throw Failure{kRuntime, "batched emulation deviates from streaming"};
  return kOk;
}

int cmd_selftest(const Options& o, std::ostream& out) {
  std::size_t failed = 0;
  for (const auto& check : checks::all_checks()) {
    if (!check.fast && !o.selftest_all) continue;
    const auto r = checks::run(check);
    out << checks::format(r) << '\n';
    failed += r.passed ? 0 : 1;
  }
  if (failed > 0) throw Failure{kRuntime, std::to_string(failed) + " properties failed"};
  return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Online normalization experiments", "onorm"};
  app.require_subcommand(1, 1);
  Options o;
  app.add_option("--config", o.config_path, "key = value configuration file");
  app.add_option("--out", o.out_dir, "directory for CSV output (created if missing)");
  app.add_option("--seed", o.seed, "overrides the configured seed for every stream");

  auto* train = app.add_subcommand("train", "train the blob/image MLP, write metrics.csv");
  auto* bias = app.add_subcommand("grad-bias", "batch-size gradient bias, write grad_bias.csv");
  auto* growth = app.add_subcommand("growth", "activation growth with and without layer scaling, write growth.csv");
  auto* eq = app.add_subcommand("equilibrium", "weight-norm equilibrium, write equilibrium.csv");
  auto* sweep = app.add_subcommand("sweep", "alpha_f x alpha_b grid, write sweep.csv");
  auto* emulate = app.add_subcommand("emulate-check", "compare group-of-n emulation with streaming statistics");
  emulate->add_option("--n", o.emulate_n, "group size")->capture_default_str();
  emulate->add_option("--alpha", o.emulate_alpha, "decay factor")->capture_default_str();
  emulate->add_option("--steps", o.emulate_steps, "stream length")->capture_default_str();
  auto* selftest = app.add_subcommand("selftest", "run the property checks");
  selftest->add_flag("--all", o.selftest_all, "include the slower phenomenon checks");
  // Global flags are accepted after the subcommand too.
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto parsed = app.get_subcommands();
    out << (parsed.empty() ? app.help() : parsed.front()->help());
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    if (args.empty()) {
      err << app.help();
    } else {
      err << "onorm: " << e.what() << '\n';
    }
    return kUsage;
  }

  try {
    if (*train) return cmd_train(o, out);
    if (*bias) return cmd_grad_bias(o, out);
    if (*growth) return cmd_growth(o, out);
    if (*eq) return cmd_equilibrium(o, out);
    if (*sweep) return cmd_sweep(o, out);
    if (*emulate) return cmd_emulate_check(o, out);
    if (*selftest) return cmd_selftest(o, out);
  } catch (const Failure& f) {
    err << "onorm: " << f.message << '\n';
    return f.code;
  } catch (const ConfigError& e) {
    err << "onorm: config: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    err << "onorm: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}

}  // namespace onorm::cli
