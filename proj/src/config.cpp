#include "onorm/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "onorm/errors.hpp"

namespace onorm {

void RunConfig::set_seed(std::uint64_t seed) {
  train.seed = seed;
  bias.seed = seed;
  growth.seed = seed;
  equilibrium.seed = seed;
}

NormSpec RunConfig::norm_spec() const {
  NormSpec s;
  s.kind = train.normalizer;
  s.alpha_f = train.alpha_f;
  s.alpha_b = train.alpha_b;
  s.layer_scaling = layer_scaling;
  s.unit_norm_grad = unit_norm_grad;
  return s;
}

SweepConfig RunConfig::sweep() const {
  SweepConfig s;
  s.alpha_f = sweep_alpha_f;
  s.alpha_b = sweep_alpha_b;
  s.train = train;
  s.data = data;
  s.hidden = hidden;
  s.holdout = holdout;
  return s;
}

namespace {

// Value parsers throw std::invalid_argument; the caller attaches the line.
double to_double(std::string_view v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw std::invalid_argument("expected a number, got '" + std::string(v) + "'");
  return out;
}

std::uint64_t to_uint(std::string_view v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw std::invalid_argument("expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

bool to_bool(std::string_view v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw std::invalid_argument("expected true or false, got '" + std::string(v) + "'");
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = v.find(',', start);
    out.push_back(trim(v.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  for (auto item : out) {
    if (item.empty()) throw std::invalid_argument("empty list element");
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

struct Key {
  std::string name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};


template <typename Field>
Key number_key(std::string name, Field field, double lo, double hi, bool lo_open, bool hi_open) {
  return Key{name,
             [=](RunConfig& c, std::string_view v) {
               const double x = to_double(v);
               const bool ok_lo = lo_open ? x > lo : x >= lo;
               const bool ok_hi = hi_open ? x < hi : x <= hi;
               require(ok_lo && ok_hi && std::isfinite(x), name + " = " + std::string(v) + " is out of range " +
                                                               (lo_open ? "(" : "[") + fmt(lo) + ", " + fmt(hi) +
                                                               (hi_open ? ")" : "]"));
               field(c) = x;
             },
             [=](const RunConfig& c) { return fmt(field(const_cast<RunConfig&>(c))); }};
}

template <typename Field>
Key count_key(std::string name, Field field, std::uint64_t min) {
  return Key{name,
             [=](RunConfig& c, std::string_view v) {
               const std::uint64_t x = to_uint(v);
               require(x >= min, name + " must be at least " + std::to_string(min));
               field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(x);
             },
             [=](const RunConfig& c) { return std::to_string(field(const_cast<RunConfig&>(c))); }};
}

template <typename Field>
Key bool_key(std::string name, Field field) {
  return Key{name, [=](RunConfig& c, std::string_view v) { field(c) = to_bool(v); },
             [=](const RunConfig& c) { return std::string(field(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

template <typename Field>
Key string_key(std::string name, Field field) {
  return Key{name, [=](RunConfig& c, std::string_view v) { field(c) = std::string(v); },
             [=](const RunConfig& c) { return "\"" + field(const_cast<RunConfig&>(c)) + "\""; }};
}

template <typename Field>
Key decay_list_key(std::string name, Field field) {
  return Key{name,
             [=](RunConfig& c, std::string_view v) {
               std::vector<double> out;
               for (auto item : split_list(v)) {
                 const double x = to_double(item);
                 require(x > 0.0 && x < 1.0, name + ": " + std::string(item) + " is outside (0, 1)");
                 out.push_back(x);
               }
               field(c) = out;
             },
             [=](const RunConfig& c) {
               std::string s;
               for (double x : field(const_cast<RunConfig&>(c))) s += (s.empty() ? "" : ", ") + fmt(x);
               return s;
             }};
}

const std::vector<Key>& keys() {
  constexpr double inf = std::numeric_limits<double>::infinity();
  static const std::vector<Key> table = {
      number_key("eta", [](RunConfig& c) -> double& { return c.train.eta; }, 0.0, inf, false, true),
      number_key("momentum", [](RunConfig& c) -> double& { return c.train.mu; }, 0.0, 1.0, false, true),
      number_key("lambda", [](RunConfig& c) -> double& { return c.train.lambda; }, 0.0, inf, false, true),
      count_key("batch_size", [](RunConfig& c) -> std::size_t& { return c.train.batch_size; }, 1),
      count_key("epochs", [](RunConfig& c) -> std::size_t& { return c.train.epochs; }, 1),
      Key{"seed", [](RunConfig& c, std::string_view v) { c.set_seed(to_uint(v)); },
          [](const RunConfig& c) { return std::to_string(c.train.seed); }},
      Key{"normalizer", [](RunConfig& c, std::string_view v) { c.train.normalizer = parse_normalizer(std::string(v)); },
          [](const RunConfig& c) { return to_string(c.train.normalizer); }},
      number_key("alpha_f", [](RunConfig& c) -> double& { return c.train.alpha_f; }, 0.0, 1.0, true, true),
      number_key("alpha_b", [](RunConfig& c) -> double& { return c.train.alpha_b; }, 0.0, 1.0, true, true),
      count_key("eval_interval", [](RunConfig& c) -> std::size_t& { return c.train.eval_interval; }, 0),
      number_key("divergence_threshold", [](RunConfig& c) -> double& { return c.train.divergence_threshold; }, 0.0,
                 inf, true, true),
      count_key("hidden", [](RunConfig& c) -> std::size_t& { return c.hidden; }, 1),
      number_key("holdout", [](RunConfig& c) -> double& { return c.holdout; }, 0.0, 1.0, true, true),
      bool_key("layer_scaling", [](RunConfig& c) -> bool& { return c.layer_scaling; }),
      bool_key("unit_norm_grad", [](RunConfig& c) -> bool& { return c.unit_norm_grad; }),
      Key{"dataset", [](RunConfig& c, std::string_view v) { c.data.kind = parse_dataset_kind(std::string(v)); },
          [](const RunConfig& c) { return to_string(c.data.kind); }},
      count_key("classes", [](RunConfig& c) -> std::size_t& { return c.data.classes; }, 2),
      count_key("samples", [](RunConfig& c) -> std::size_t& { return c.data.samples; }, 1),
      count_key("dims", [](RunConfig& c) -> std::size_t& { return c.data.dims; }, 1),
      number_key("radius", [](RunConfig& c) -> double& { return c.data.radius; }, 0.0, inf, true, true),
      number_key("spread", [](RunConfig& c) -> double& { return c.data.spread; }, 0.0, inf, false, true),
      count_key("image_size", [](RunConfig& c) -> std::size_t& { return c.data.image_size; }, 2),
      number_key("image_noise", [](RunConfig& c) -> double& { return c.data.image_noise; }, 0.0, inf, false, true),
      string_key("idx_images", [](RunConfig& c) -> std::string& { return c.data.idx_images; }),
      string_key("idx_labels", [](RunConfig& c) -> std::string& { return c.data.idx_labels; }),
      count_key("bias_dataset_size", [](RunConfig& c) -> std::size_t& { return c.bias.dataset_size; }, 2),
      Key{"bias_batch_sizes",
          [](RunConfig& c, std::string_view v) {
            std::vector<std::size_t> out;
            for (auto item : split_list(v)) {
              const auto b = to_uint(item);
              require(b >= 2, "bias_batch_sizes: batch sizes must be at least 2");
              out.push_back(b);
            }
            c.bias.batch_sizes = out;
          },
          [](const RunConfig& c) {
            std::string s;
            for (auto b : c.bias.batch_sizes) s += (s.empty() ? "" : ", ") + std::to_string(b);
            return s;
          }},
      count_key("bias_repetitions", [](RunConfig& c) -> std::size_t& { return c.bias.repetitions; }, 1),
      count_key("bias_filters", [](RunConfig& c) -> std::size_t& { return c.bias.filters; }, 1),
      count_key("bias_kernel", [](RunConfig& c) -> std::size_t& { return c.bias.kernel; }, 1),
      count_key("growth_depth", [](RunConfig& c) -> std::size_t& { return c.growth.depth; }, 1),
      count_key("growth_width", [](RunConfig& c) -> std::size_t& { return c.growth.width; }, 1),
      count_key("growth_samples", [](RunConfig& c) -> std::size_t& { return c.growth.samples; }, 2),
      number_key("growth_noise", [](RunConfig& c) -> double& { return c.growth.noise; }, 0.0, inf, false, true),
      number_key("growth_sigma_bias", [](RunConfig& c) -> double& { return c.growth.sigma_bias; }, 0.0, 1.0, false,
                 true),
      number_key("eq_eta", [](RunConfig& c) -> double& { return c.equilibrium.eta; }, 0.0, inf, true, true),
      number_key("eq_lambda", [](RunConfig& c) -> double& { return c.equilibrium.lambda; }, 0.0, inf, true, true),
      count_key("eq_steps", [](RunConfig& c) -> std::size_t& { return c.equilibrium.steps; }, 4),
      count_key("eq_inputs", [](RunConfig& c) -> std::size_t& { return c.equilibrium.inputs; }, 1),
      count_key("eq_classes", [](RunConfig& c) -> std::size_t& { return c.equilibrium.classes; }, 3),
      count_key("eq_batch", [](RunConfig& c) -> std::size_t& { return c.equilibrium.batch; }, 1),
      number_key("eq_label_noise", [](RunConfig& c) -> double& { return c.equilibrium.label_noise; }, 0.0, 1.0, false,
                 false),
      decay_list_key("sweep_alpha_f", [](RunConfig& c) -> std::vector<double>& { return c.sweep_alpha_f; }),
      decay_list_key("sweep_alpha_b", [](RunConfig& c) -> std::vector<double>& { return c.sweep_alpha_b; }),
  };
  return table;
}

// Splits off a trailing comment, honouring double quotes.
std::string_view strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

bool valid_key(std::string_view k) {
  if (k.empty()) return false;
  for (char ch : k) {
    if (!(ch == '_' || (ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9'))) return false;
  }
  return !(k[0] >= '0' && k[0] <= '9');
}

}  // namespace

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string_view line = trim(strip_comment(raw));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(line_no, "expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    std::string_view value = trim(line.substr(eq + 1));
    if (!valid_key(key)) throw ConfigError(line_no, "invalid key '" + std::string(key) + "'");
    if (value.empty()) throw ConfigError(line_no, "missing value for '" + std::string(key) + "'");
    if (value.front() == '"') {
      if (value.size() < 2 || value.back() != '"') throw ConfigError(line_no, "unterminated string");
      value = value.substr(1, value.size() - 2);
    }
    const auto& table = keys();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Key& k) { return k.name == key; });
    if (it == table.end()) throw ConfigError(line_no, "unknown key '" + std::string(key) + "'");
    if (!seen.insert(std::string(key)).second) throw ConfigError(line_no, "duplicate key '" + std::string(key) + "'");
    try {
      it->set(cfg, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(line_no, e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  for (const auto& k : keys()) out += k.name + " = " + k.get(config) + "\n";
  return out;
}

TrainResult run_training(const RunConfig& config) {
  const Rng root(config.train.seed);
  const Dataset data = generate_dataset(config.data, mix_seed(config.train.seed, 1));
  Rng split_rng = root.split(2);
  const auto [train_set, val_set] = split_dataset(data, config.holdout, split_rng);
  Rng init = root.split(3);
  Network net = make_mlp(train_set.input_size(), config.hidden, data.classes, config.norm_spec(), init);
  return train(config.train, net, train_set, val_set);
}

}  // namespace onorm
