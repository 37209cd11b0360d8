/*
 * Copyright 2026 The nemgan Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "nemgan/runner.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string_view>

#include "json.hpp"

namespace nemgan::runner {

namespace {

using json = nlohmann::json;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError("expected a number, got '" + s + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& s) {
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) {
    throw ConfigError("expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  for (const std::string& item : split_list(s)) out.push_back(parse_double(item));
  return out;
}

std::vector<std::size_t> parse_widths(const std::string& s) {
  std::vector<std::size_t> out;
  for (const std::string& item : split_list(s)) {
    const std::uint64_t v = parse_uint(item);
    if (v == 0) throw ConfigError("layer widths must be positive");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw ConfigError("at least one hidden layer is required");
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

struct Key {
  std::string name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define NEMGAN_KEY_DOUBLE(NAME, FIELD)                                                  \
  Key {                                                                                 \
    NAME, [](ExperimentConfig& c, const std::string& v) { c.FIELD = parse_double(v); }, \
        [](const ExperimentConfig& c) { return fmt(c.FIELD); }                          \
  }
#define NEMGAN_KEY_SIZE(NAME, FIELD)                                                  \
  Key {                                                                               \
    NAME,                                                                             \
        [](ExperimentConfig& c, const std::string& v) {                               \
          c.FIELD = static_cast<decltype(c.FIELD)>(parse_uint(v));                    \
        },                                                                            \
        [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }             \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"mode",
       [](ExperimentConfig& c, const std::string& v) {
         if (v == "V") {
           c.train.variant = train::Variant::kV;
         } else if (v == "S") {
           c.train.variant = train::Variant::kS;
         } else if (v == "P") {
           c.train.variant = train::Variant::kP;
         } else {
           throw ConfigError("mode must be V, S or P, got '" + v + "'");
         }
       },
       [](const ExperimentConfig& c) { return train::variant_name(c.train.variant); }},
      {"dataset.kind",
       [](ExperimentConfig& c, const std::string& v) {
         if (v != "ring" && v != "grid" && v != "skewed" && v != "factored") {
           throw ConfigError("dataset.kind must be ring, grid, skewed or factored");
         }
         c.dataset.kind = v;
       },
       [](const ExperimentConfig& c) { return c.dataset.kind; }},
      NEMGAN_KEY_SIZE("dataset.k", dataset.k),
      NEMGAN_KEY_DOUBLE("dataset.radius", dataset.radius),
      NEMGAN_KEY_DOUBLE("dataset.std", dataset.std),
      NEMGAN_KEY_SIZE("dataset.m", dataset.m),
      NEMGAN_KEY_DOUBLE("dataset.spacing", dataset.spacing),
      {"dataset.base",
       [](ExperimentConfig& c, const std::string& v) {
         if (v != "ring" && v != "grid") throw ConfigError("dataset.base must be ring or grid");
         c.dataset.base = v;
       },
       [](const ExperimentConfig& c) { return c.dataset.base; }},
      {"dataset.weights",
       [](ExperimentConfig& c, const std::string& v) { c.dataset.weights = parse_doubles(v); },
       [](const ExperimentConfig& c) { return join(c.dataset.weights); }},
      NEMGAN_KEY_SIZE("dataset.factors", dataset.factors),
      NEMGAN_KEY_SIZE("dataset.levels", dataset.levels),
      NEMGAN_KEY_SIZE("dataset.n", dataset.n),

      NEMGAN_KEY_SIZE("model.modes", model.modes),
      NEMGAN_KEY_DOUBLE("model.center_scale", model.center_scale),
      NEMGAN_KEY_DOUBLE("model.epsilon", model.epsilon),
      {"model.g_hidden",
       [](ExperimentConfig& c, const std::string& v) { c.model.g_hidden = parse_widths(v); },
       [](const ExperimentConfig& c) { return join(c.model.g_hidden); }},
      {"model.d_hidden",
       [](ExperimentConfig& c, const std::string& v) { c.model.d_hidden = parse_widths(v); },
       [](const ExperimentConfig& c) { return join(c.model.d_hidden); }},
      {"model.h1_hidden",
       [](ExperimentConfig& c, const std::string& v) { c.model.h1_hidden = parse_widths(v); },
       [](const ExperimentConfig& c) { return join(c.model.h1_hidden); }},
      {"model.h2_hidden",
       [](ExperimentConfig& c, const std::string& v) { c.model.h2_hidden = parse_widths(v); },
       [](const ExperimentConfig& c) { return join(c.model.h2_hidden); }},
      {"model.activation",
       [](ExperimentConfig& c, const std::string& v) {
         if (v == "relu") {
           c.model.activation = nets::Activation::kRelu;
         } else if (v == "tanh") {
           c.model.activation = nets::Activation::kTanh;
         } else {
           throw ConfigError("model.activation must be relu or tanh");
         }
       },
       [](const ExperimentConfig& c) {
         return std::string(c.model.activation == nets::Activation::kRelu ? "relu" : "tanh");
       }},
      NEMGAN_KEY_DOUBLE("model.slope", train.slope),
      {"model.p",
       [](ExperimentConfig& c, const std::string& v) {
         const std::uint64_t p = parse_uint(v);
         if (p != 1 && p != 2) throw ConfigError("model.p must be 1 or 2");
         c.train.weights.p = static_cast<int>(p);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.train.weights.p); }},
      NEMGAN_KEY_DOUBLE("model.lambda_recon", train.weights.recon),
      NEMGAN_KEY_DOUBLE("model.lambda_kl", train.weights.kl),
      NEMGAN_KEY_DOUBLE("model.lambda_mode", train.weights.mode),
      NEMGAN_KEY_DOUBLE("model.lambda_cc", train.weights.cc),
      {"model.saturating_g",
       [](ExperimentConfig& c, const std::string& v) {
         c.train.weights.saturating = parse_bool(v);
       },
       [](const ExperimentConfig& c) {
         return std::string(c.train.weights.saturating ? "true" : "false");
       }},

      NEMGAN_KEY_SIZE("train.batch", train.batch),
      NEMGAN_KEY_SIZE("train.steps", train.steps),
      NEMGAN_KEY_SIZE("train.d_steps", train.d_steps),
      NEMGAN_KEY_DOUBLE("train.lr_d", train.lr_d),
      NEMGAN_KEY_DOUBLE("train.lr_g", train.lr_g),
      NEMGAN_KEY_DOUBLE("train.lr_h", train.lr_h),
      NEMGAN_KEY_DOUBLE("train.beta1", train.beta1),
      NEMGAN_KEY_DOUBLE("train.beta2", train.beta2),
      NEMGAN_KEY_DOUBLE("train.labeled_fraction", train.labeled_fraction),
      NEMGAN_KEY_SIZE("train.seed", train.seed),
      NEMGAN_KEY_DOUBLE("train.prior.warmup", train.prior.warmup_fraction),
      NEMGAN_KEY_DOUBLE("train.prior.period", train.prior.period_fraction),
      NEMGAN_KEY_SIZE("train.prior.h_epochs", train.prior.h_epochs),
      NEMGAN_KEY_SIZE("train.prior.h_batch", train.prior.h_batch),
      NEMGAN_KEY_SIZE("train.prior.alpha_steps", train.prior.alpha_steps),
      NEMGAN_KEY_DOUBLE("train.prior.alpha_lr", train.prior.alpha_lr),
      NEMGAN_KEY_DOUBLE("train.prior.alpha_tol", train.prior.alpha_tol),
      NEMGAN_KEY_SIZE("train.prior.pool", train.prior.pool_size),
      NEMGAN_KEY_SIZE("train.prior.align_samples", train.prior.align_samples),
      {"train.prior.retrain",
       [](ExperimentConfig& c, const std::string& v) {
         if (v == "both") {
           c.train.prior.scope = train::RetrainScope::kBoth;
         } else if (v == "h2") {
           c.train.prior.scope = train::RetrainScope::kH2Only;
         } else {
           throw ConfigError("train.prior.retrain must be both or h2");
         }
       },
       [](const ExperimentConfig& c) {
         return std::string(c.train.prior.scope == train::RetrainScope::kBoth ? "both" : "h2");
       }},

      NEMGAN_KEY_SIZE("eval.interval", eval.interval),
      NEMGAN_KEY_SIZE("eval.n", eval.n),
      NEMGAN_KEY_SIZE("eval.test_per_mode", eval.test_per_mode),
      {"eval.metrics",
       [](ExperimentConfig& c, const std::string& v) {
         c.eval.clustering = c.eval.coverage = c.eval.frechet = false;
         for (const std::string& m : split_list(v)) {
           if (m == "clustering") {
             c.eval.clustering = true;
           } else if (m == "coverage") {
             c.eval.coverage = true;
           } else if (m == "frechet") {
             c.eval.frechet = true;
           } else {
             throw ConfigError("unknown metric '" + m + "'");
           }
         }
       },
       [](const ExperimentConfig& c) {
         std::vector<std::string> on;
         if (c.eval.clustering) on.emplace_back("clustering");
         if (c.eval.coverage) on.emplace_back("coverage");
         if (c.eval.frechet) on.emplace_back("frechet");
         std::string out;
         for (std::size_t i = 0; i < on.size(); ++i) out += (i ? "," : "") + on[i];
         return out;
       }},
  };
  return table;
}

#undef NEMGAN_KEY_DOUBLE
#undef NEMGAN_KEY_SIZE

void validate(const ExperimentConfig& cfg, bool fraction_set) {
  if (cfg.train.variant == train::Variant::kV && fraction_set && cfg.train.labeled_fraction > 0) {
    throw ConfigError("mode V uses no supervision; train.labeled_fraction must be 0");
  }
  if (cfg.dataset.n < 5) throw ConfigError("dataset.n must be at least 5");
  try {
    cfg.train.validate();
    make_mixture(cfg.dataset);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (cfg.eval.interval == 0 || cfg.eval.n == 0 || cfg.eval.test_per_mode == 0) {
    throw ConfigError("eval.interval, eval.n and eval.test_per_mode must be positive");
  }
}

json tensor_json(const ad::Tensor& t) {
  return json{{"shape", t.shape()}, {"data", t.vec()}};
}

ad::Tensor tensor_from(const json& j) {
  return ad::Tensor(j.at("shape").get<ad::Shape>(), j.at("data").get<std::vector<double>>());
}

json net_json(const nets::Mlp& net) {
  json params = json::array();
  for (const ad::Tensor& p : net.params) params.push_back(tensor_json(p));
  return json{{"widths", net.spec.widths},
              {"activation", net.spec.hidden == nets::Activation::kRelu ? "relu" : "tanh"},
              {"output", static_cast<int>(net.spec.output)},
              {"params", params}};
}

nets::Mlp net_from(const std::string& name, const json& j) {
  nets::Mlp net;
  net.name = name;
  net.spec.widths = j.at("widths").get<std::vector<std::size_t>>();
  net.spec.hidden = j.at("activation").get<std::string>() == "relu" ? nets::Activation::kRelu
                                                                     : nets::Activation::kTanh;
  net.spec.output = static_cast<nets::OutputKind>(j.at("output").get<int>());
  net.spec.validate();
  for (const json& p : j.at("params")) net.params.push_back(tensor_from(p));
  if (net.params.size() != 2 * net.spec.layers()) {
    throw CheckpointError("network " + name + " has the wrong number of parameter tensors");
  }
  return net;
}

json adam_json(const train::AdamState& s) {
  json m = json::array(), v = json::array();
  for (const ad::Tensor& t : s.m) m.push_back(tensor_json(t));
  for (const ad::Tensor& t : s.v) v.push_back(tensor_json(t));
  return json{{"t", s.t}, {"m", m}, {"v", v}};
}

train::AdamState adam_from(const json& j) {
  train::AdamState s;
  s.t = j.at("t").get<std::uint64_t>();
  for (const json& t : j.at("m")) s.m.push_back(tensor_from(t));
  for (const json& t : j.at("v")) s.v.push_back(tensor_from(t));
  return s;
}

std::string report_csv_fields(const metrics::MetricsReport& r) {
  std::ostringstream os;
  os << fmt(r.acc) << ',' << fmt(r.nmi) << ',' << fmt(r.ari) << ',' << r.modes_covered << ','
     << fmt(r.histogram_kl) << ',' << fmt(r.frechet);
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  bool has_dataset = false, has_train = false, fraction_set = false;
  std::vector<std::string> seen;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = source + ":" + std::to_string(lineno) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError(where + "expected 'key = value'");
    const auto& table = keys();
    const auto it = std::find_if(table.begin(), table.end(),
                                 [&](const Key& k) { return k.name == key; });
    if (it == table.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) {
      throw ConfigError(where + "duplicate key '" + key + "'");
    }
    seen.push_back(key);
    try {
      it->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
    has_dataset = has_dataset || key.starts_with("dataset.");
    has_train = has_train || key.starts_with("train.");
    fraction_set = fraction_set || key == "train.labeled_fraction";
  }
  if (!has_dataset) throw ConfigError(source + ": missing required section 'dataset'");
  if (!has_train) throw ConfigError(source + ": missing required section 'train'");
  if (cfg.train.variant == train::Variant::kV && !fraction_set) cfg.train.labeled_fraction = 0.0;
  try {
    validate(cfg, fraction_set);
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string render_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const Key& k : keys()) {
    const std::string v = k.get(cfg);
    if (v.empty()) continue;
    out += k.name + " = " + v + "\n";
  }
  return out;
}

std::string content_hash(const std::string& text) {
  const std::string blob = "blob " + std::to_string(text.size()) + '\0' + text;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), digest, &len, EVP_sha1(), nullptr) != 1) {
    throw std::runtime_error("SHA-1 digest failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return os.str();
}

void apply_env_overrides(ExperimentConfig& cfg) {
  if (const char* s = std::getenv("NEMGAN_SEED"); s != nullptr && *s != '\0') {
    try {
      cfg.train.seed = parse_uint(s);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("NEMGAN_SEED: ") + e.what());
    }
  }
}

data::MixtureSpec make_mixture(const DatasetConfig& c) {
  if (c.kind == "ring") return data::make_ring(c.k, c.radius, c.std);
  if (c.kind == "grid") return data::make_grid(c.m, c.spacing, c.std);
  if (c.kind == "factored") return data::make_factored(c.factors, c.levels, c.radius, c.std);
  data::MixtureSpec base = c.base == "grid" ? data::make_grid(c.m, c.spacing, c.std)
                                            : data::make_ring(c.k, c.radius, c.std);
  return data::make_skewed(std::move(base), c.weights);
}

data::Dataset make_dataset(const ExperimentConfig& cfg) {
  return data::make_dataset(make_mixture(cfg.dataset), cfg.dataset.n, cfg.eval.test_per_mode,
                            cfg.train.seed);
}

void save_checkpoint(const std::filesystem::path& path, const ExperimentConfig& cfg,
                     const train::TrainingState& state) {
  const std::string config_text = render_config(cfg);
  std::ostringstream rng;
  rng << state.rng;
  json j;
  j["format"] = "nemgan-checkpoint";
  j["version"] = kCheckpointVersion;
  j["config"] = config_text;
  j["config_hash"] = content_hash(config_text);
  j["step"] = state.step;
  j["alpha"] = state.alpha.logits();
  j["layout"] = {{"modes", state.layout.modes},
                 {"dim", state.layout.dim},
                 {"epsilon", state.layout.epsilon},
                 {"centers", tensor_json(state.layout.centers)}};
  j["networks"] = {{"g", net_json(state.nets.g)},
                   {"d", net_json(state.nets.d)},
                   {"h1", net_json(state.nets.h1)},
                   {"h2", net_json(state.nets.h2)}};
  j["optimizers"] = {{"g", adam_json(state.opt.g)},
                     {"d", adam_json(state.opt.d)},
                     {"h1", adam_json(state.opt.h1)},
                     {"h2", adam_json(state.opt.h2)}};
  j["rng"] = rng.str();
  write_text(path, j.dump(1) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot read checkpoint " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": not a checkpoint: " + e.what());
  }
  if (j.value("format", "") != "nemgan-checkpoint") {
    throw CheckpointError(path.string() + ": not a nemgan checkpoint");
  }
  const int version = j.value("version", -1);
  if (version != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": checkpoint version " + std::to_string(version) +
                          " is not supported (expected " + std::to_string(kCheckpointVersion) +
                          ")");
  }
  try {
    Checkpoint cp;
    const std::string text = j.at("config").get<std::string>();
    if (content_hash(text) != j.at("config_hash").get<std::string>()) {
      throw CheckpointError(path.string() + ": config hash mismatch");
    }
    cp.config = parse_config(text, path.string() + "#config");
    train::TrainingState& s = cp.state;
    s.step = j.at("step").get<std::uint64_t>();
    s.alpha = latent::AlphaVector(j.at("alpha").get<std::vector<double>>());
    const json& lay = j.at("layout");
    s.layout.modes = lay.at("modes").get<std::size_t>();
    s.layout.dim = lay.at("dim").get<std::size_t>();
    s.layout.epsilon = lay.at("epsilon").get<double>();
    s.layout.centers = tensor_from(lay.at("centers"));
    s.layout.validate();
    const json& n = j.at("networks");
    s.nets.g = net_from("g", n.at("g"));
    s.nets.d = net_from("d", n.at("d"));
    s.nets.h1 = net_from("h1", n.at("h1"));
    s.nets.h2 = net_from("h2", n.at("h2"));
    const json& o = j.at("optimizers");
    s.opt.g = adam_from(o.at("g"));
    s.opt.d = adam_from(o.at("d"));
    s.opt.h1 = adam_from(o.at("h1"));
    s.opt.h2 = adam_from(o.at("h2"));
    std::istringstream rng(j.at("rng").get<std::string>());
    rng >> s.rng;
    return cp;
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": malformed checkpoint: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(path.string() + ": invalid checkpoint contents: " + e.what());
  }
}

std::string metrics_csv_header() {
  return "step,d_loss,g_adv,recon,kl_latent,cc,prior_align,acc,nmi,ari,modes_covered,"
         "histogram_kl,gaussian_frechet\n";
}

std::string metrics_csv_row(const train::HistoryRow& row) {
  const obj::LossBreakdown& l = row.losses;
  std::ostringstream os;
  os << row.step << ',' << fmt(l.d_loss) << ',' << fmt(l.g_adv_loss) << ',' << fmt(l.recon_loss)
     << ',' << fmt(l.kl_latent_loss) << ',' << fmt(l.cc_loss) << ',' << fmt(l.prior_align_loss)
     << ',' << report_csv_fields(row.report) << '\n';
  return os.str();
}

void write_scatter_svg(const std::filesystem::path& path, const ad::Tensor& points,
                       std::span<const std::size_t> labels) {
  static constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                             "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                             "#bcbd22", "#17becf"};
  const std::size_t n = labels.size();
  double lo_x = 0, hi_x = 1, lo_y = 0, hi_y = 1;
  if (n > 0) {
    lo_x = hi_x = points.at(0, 0);
    lo_y = hi_y = points.cols() > 1 ? points.at(0, 1) : 0.0;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double x = points.at(i, 0);
    const double y = points.cols() > 1 ? points.at(i, 1) : 0.0;
    lo_x = std::min(lo_x, x);
    hi_x = std::max(hi_x, x);
    lo_y = std::min(lo_y, y);
    hi_y = std::max(hi_y, y);
  }
  const double size = 480.0, pad = 10.0;
  const double span = std::max({hi_x - lo_x, hi_y - lo_y, 1e-9});
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * pad
     << "\" height=\"" << size + 2 * pad << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < n; ++i) {
    const double x = pad + (points.at(i, 0) - lo_x) / span * size;
    const double y = pad + size - ((points.cols() > 1 ? points.at(i, 1) : 0.0) - lo_y) / span * size;
    os << "<circle cx=\"" << fmt(x) << "\" cy=\"" << fmt(y) << "\" r=\"1.5\" fill=\""
       << kPalette[labels[i] % 10] << "\"/>\n";
  }
  os << "</svg>\n";
  write_text(path, os.str());
}

int cmd_train(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
              std::ostream& log, const train::TrainingHooks& hooks) {
  ExperimentConfig cfg = load_config(config_path);
  apply_env_overrides(cfg);
  std::filesystem::create_directories(out_dir);
  const std::string resolved = render_config(cfg);
  write_text(out_dir / "config.resolved", resolved);

  const data::Dataset dataset = make_dataset(cfg);
  std::ofstream csv(out_dir / "metrics.csv", std::ios::binary);
  if (!csv) throw std::runtime_error("cannot write " + (out_dir / "metrics.csv").string());
  csv << metrics_csv_header() << std::flush;

  train::TrainingHooks wrapped = hooks;
  wrapped.on_row = [&](const train::HistoryRow& row) {
    csv << metrics_csv_row(row) << std::flush;
    log << "step " << row.step << " d_loss " << fmt(row.losses.d_loss) << " acc "
        << fmt(row.report.acc) << " modes " << row.report.modes_covered << " hist_kl "
        << fmt(row.report.histogram_kl) << '\n';
    if (hooks.on_row) hooks.on_row(row);
  };
  const train::TrainingRun run =
      train::run_training(cfg.train, cfg.model, cfg.eval, dataset, wrapped);
  save_checkpoint(out_dir / "checkpoint.json", cfg, run.state);

  json manifest{{"seed", cfg.train.seed},
                {"config_hash", content_hash(resolved)},
                {"config", "config.resolved"},
                {"metrics", "metrics.csv"},
                {"checkpoint", "checkpoint.json"},
                {"steps_run", run.state.step},
                {"mode", train::variant_name(cfg.train.variant)}};
  write_text(out_dir / "manifest.json", manifest.dump(1) + "\n");
  return 0;
}

metrics::MetricsReport cmd_eval(const std::filesystem::path& checkpoint, std::size_t n,
                                std::uint64_t seed, std::ostream& out,
                                const std::optional<std::filesystem::path>& csv) {
  if (n == 0) throw std::invalid_argument("eval: n must be positive");
  const Checkpoint cp = load_checkpoint(checkpoint);
  data::Dataset dataset = make_dataset(cp.config);
  // fresh balanced test set: per_mode draws of every component
  std::mt19937_64 rng(seed);
  const std::size_t per_mode = cp.config.eval.test_per_mode;
  const std::size_t k = dataset.spec.components();
  data::Samples balanced{ad::Tensor::matrix(k * per_mode, dataset.spec.dim), {}};
  for (std::size_t m = 0; m < k; ++m) {
    const data::Samples part = data::sample_component(dataset.spec, m, per_mode, rng);
    for (std::size_t r = 0; r < per_mode; ++r) {
      for (std::size_t c = 0; c < dataset.spec.dim; ++c) {
        balanced.x.at(m * per_mode + r, c) = part.x.at(r, c);
      }
      balanced.labels.push_back(m);
    }
  }
  dataset.balanced_test = std::move(balanced);
  train::EvalConfig eval = cp.config.eval;
  eval.n = n;
  eval.clustering = eval.coverage = eval.frechet = true;
  const metrics::MetricsReport report = train::evaluate(cp.state, dataset, eval, rng());

  out << "step " << report.step << "\nacc " << fmt(report.acc) << "\nnmi " << fmt(report.nmi)
      << "\nari " << fmt(report.ari) << "\nmodes_covered " << report.modes_covered << "/"
      << k << "\nhistogram_kl " << fmt(report.histogram_kl) << "\ngaussian_frechet "
      << fmt(report.frechet) << '\n';
  if (csv) {
    const bool fresh = !std::filesystem::exists(*csv);
    std::ofstream os(*csv, std::ios::binary | std::ios::app);
    if (!os) throw std::runtime_error("cannot write " + csv->string());
    if (fresh) os << "step,acc,nmi,ari,modes_covered,histogram_kl,gaussian_frechet\n";
    os << report.step << ',' << report_csv_fields(report) << '\n';
  }
  return report;
}

SampleResult cmd_sample(const std::filesystem::path& checkpoint, std::size_t n,
                        std::optional<std::size_t> mode, std::uint64_t seed,
                        const std::filesystem::path& csv,
                        const std::optional<std::filesystem::path>& svg) {
  if (n == 0) throw std::invalid_argument("sample: n must be positive");
  const Checkpoint cp = load_checkpoint(checkpoint);
  SampleResult result;
  if (mode) {
    if (*mode >= cp.state.layout.modes) {
      throw std::out_of_range("sample: mode index " + std::to_string(*mode) +
                              " outside [0, " + std::to_string(cp.state.layout.modes) + ")");
    }
    result.points = train::generate_conditional(cp.state, *mode, n, seed);
    result.labels.assign(n, *mode);
  } else {
    result.points = train::generate(cp.state, n, seed);
    result.labels = data::oracle_mode_assign(result.points, make_mixture(cp.config.dataset));
  }
  data::write_csv(csv, data::Samples{result.points, result.labels});
  if (svg) write_scatter_svg(*svg, result.points, result.labels);
  return result;
}

bool GradcheckReport::passed() const {
  return std::all_of(terms.begin(), terms.end(), [this](const GradTerm& t) {
    return t.result.max_relative_error < tolerance;
  });
}

GradcheckReport run_gradcheck(const ExperimentConfig& cfg, std::size_t batch,
                              std::size_t max_coords_per_tensor) {
  const data::MixtureSpec spec = make_mixture(cfg.dataset);
  train::TrainingState state = train::init_state(cfg.model, cfg.train, spec);
  const nets::NetworkSet& ns = state.nets;
  const latent::ModeLayout& layout = state.layout;
  const double slope = cfg.train.slope;
  const std::size_t m = layout.modes;
  std::mt19937_64 rng(cfg.train.seed ^ 0x5eedull);

  std::normal_distribution<double> normal(0.0, 0.5);
  std::vector<double> logits(m);
  for (double& v : logits) v = normal(rng);
  const latent::AlphaVector alpha(logits);
  const std::vector<double> a = latent::breakpoints(alpha);

  // nu1 values that sit inside hard-sigmoid transition windows, away from the
  // clamp kinks, so the alpha path carries a gradient.
  auto clear_of_kinks = [&](double nu) {
    for (double ai : a) {
      const double u = slope * (ai - nu) + 0.5;
      if (std::abs(u) < 1e-3 || std::abs(u - 1.0) < 1e-3) return false;
    }
    return nu > 0.0 && nu < 1.0;
  };
  latent::LatentNoise noise = latent::draw_noise(layout, batch, rng);
  std::uniform_real_distribution<double> window(-0.45 / slope, 0.45 / slope);
  for (std::size_t r = 0; r < batch; ++r) {
    double nu;
    do {
      nu = r % 2 == 0 ? a[(r / 2) % (m - 1)] + window(rng) : std::uniform_real_distribution<double>(0, 1)(rng);
    } while (!clear_of_kinks(nu));
    noise.nu1[r] = nu;
  }
  const latent::LatentBatch zb =
      latent::assemble(alpha, layout, noise, slope, latent::Embedding::kSoft);
  const data::Samples real = data::sample_mixture(spec, batch, cfg.train.seed + 17);
  const ad::Tensor fake = nets::evaluate(ns.g, zb.z);
  std::vector<double> target(m);
  double tsum = 0.0;
  for (double& v : target) tsum += (v = 0.5 + std::uniform_real_distribution<double>(0, 1)(rng));
  for (double& v : target) v /= tsum;
  std::vector<double> mix(batch * m);
  for (double& v : mix) v = normal(rng);
  const ad::Tensor mix_weights({batch, m}, mix);

  auto params_of = [](std::initializer_list<const nets::Mlp*> list) {
    std::vector<ad::Tensor> out;
    for (const nets::Mlp* net : list) out.insert(out.end(), net->params.begin(), net->params.end());
    return out;
  };
  // Binds consecutive slices of the probe variables to the listed networks.
  auto bind_slices = [](std::span<const ad::Var> vars,
                        std::initializer_list<const nets::Mlp*> list) {
    std::vector<nets::BoundNet> out;
    std::size_t off = 0;
    for (const nets::Mlp* net : list) {
      nets::BoundNet b{net, {vars.begin() + off, vars.begin() + off + net->params.size()}};
      off += net->params.size();
      out.push_back(std::move(b));
    }
    return out;
  };

  struct Term {
    std::string name;
    std::vector<ad::Tensor> params;
    ad::ScalarFunction fn;
  };
  std::vector<Term> terms;
  const obj::LossWeights weights = cfg.train.weights;

  terms.push_back({"d_loss", params_of({&ns.d}), [&](ad::Tape& t, std::span<const ad::Var> v) {
                     auto b = bind_slices(v, {&ns.d});
                     return obj::discriminator_loss(b[0](t.constant(real.x)),
                                                    b[0](t.constant(fake)));
                   }});
  auto generator_parts = [&](ad::Tape& t, std::span<const ad::Var> v) {
    auto b = bind_slices(v, {&ns.g, &ns.h1, &ns.h2});
    nets::BoundNet d = nets::bind(t, ns.d, false);
    ad::Var z = t.constant(zb.z);
    ad::Var x = b[0](z);
    ad::Var zhat = b[1](x);
    return obj::generator_inverter_loss(z, d(x), zhat, b[2](zhat), zb.y, alpha, weights);
  };
  const auto gh = params_of({&ns.g, &ns.h1, &ns.h2});
  terms.push_back({"g_adv", gh, [&](ad::Tape& t, std::span<const ad::Var> v) {
                     return generator_parts(t, v).g_adv;
                   }});
  terms.push_back({"recon", gh, [&](ad::Tape& t, std::span<const ad::Var> v) {
                     return generator_parts(t, v).recon;
                   }});
  terms.push_back({"kl_latent", gh, [&](ad::Tape& t, std::span<const ad::Var> v) {
                     return generator_parts(t, v).kl_latent;
                   }});
  terms.push_back({"mode_ce", gh, [&](ad::Tape& t, std::span<const ad::Var> v) {
                     return generator_parts(t, v).mode_ce;
                   }});
  terms.push_back({"generator_total", gh, [&](ad::Tape& t, std::span<const ad::Var> v) {
                     return generator_parts(t, v).total;
                   }});
  terms.push_back({"cc", params_of({&ns.h1, &ns.h2}),
                   [&](ad::Tape& t, std::span<const ad::Var> v) {
                     auto b = bind_slices(v, {&ns.h1, &ns.h2});
                     return obj::supervised_cc_loss(b[1](b[0](t.constant(real.x))), real.labels);
                   }});
  terms.push_back({"alpha_soft_indicator", {alpha.as_row()},
                   [&](ad::Tape& t, std::span<const ad::Var> v) {
                     ad::Var f = latent::soft_indicator_on_tape(v[0], noise.nu1, slope);
                     return ad::sum(ad::mul(f, t.constant(mix_weights)));
                   }});
  terms.push_back({"alpha_latent", {alpha.as_row()},
                   [&](ad::Tape& t, std::span<const ad::Var> v) {
                     ad::Var z = latent::latent_on_tape(v[0], noise, layout, slope);
                     ad::Tensor w(z.value().shape());
                     for (std::size_t i = 0; i < w.size(); ++i) w[i] = mix[i % mix.size()];
                     return ad::sum(ad::mul(z, t.constant(std::move(w))));
                   }});
  const obj::AggregateFn aggregate = train::network_aggregate(ns, layout, noise, slope);
  terms.push_back({"prior_align", {alpha.as_row()},
                   [&](ad::Tape&, std::span<const ad::Var> v) {
                     obj::PriorVector tv{target, obj::PriorRole::kRetrainedAggregate};
                     return obj::prior_alignment_loss(v[0], tv, aggregate);
                   }});

  GradcheckReport report;
  ad::GradCheckOptions opts;
  opts.max_coords_per_tensor = max_coords_per_tensor;
  opts.seed = cfg.train.seed;
  opts.tolerance = report.tolerance;
  for (const Term& term : terms) {
    report.terms.push_back({term.name, ad::grad_check(term.fn, term.params, opts)});
  }
  return report;
}

int cmd_gradcheck(const std::filesystem::path& config_path, std::ostream& out) {
  ExperimentConfig cfg = load_config(config_path);
  apply_env_overrides(cfg);
  const GradcheckReport report = run_gradcheck(cfg);
  for (const GradTerm& t : report.terms) {
    out << std::left << std::setw(22) << t.name << " max_rel_err " << std::scientific
        << std::setprecision(3) << t.result.max_relative_error << " probes "
        << t.result.probes << (t.result.max_relative_error < report.tolerance ? "  ok" : "  FAIL")
        << '\n'
        << std::defaultfloat;
  }
  out << (report.passed() ? "gradcheck passed" : "gradcheck FAILED") << " (tolerance "
      << report.tolerance << ")\n";
  return report.passed() ? 0 : 1;
}

int cmd_bench(const std::filesystem::path& config_path, std::size_t steps, std::ostream& out) {
  if (steps == 0) throw std::invalid_argument("bench: steps must be positive");
  ExperimentConfig cfg = load_config(config_path);
  apply_env_overrides(cfg);
  const data::Dataset dataset = make_dataset(cfg);
  train::TrainingState state = train::init_state(cfg.model, cfg.train, dataset.spec);
  std::mt19937_64 rng(cfg.train.seed);
  std::uniform_int_distribution<std::size_t> pick(0, dataset.train.size() - 1);
  ad::Tensor real = ad::Tensor::matrix(cfg.train.batch, dataset.spec.dim);

  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t r = 0; r < cfg.train.batch; ++r) {
      const std::size_t src = pick(rng);
      for (std::size_t c = 0; c < dataset.spec.dim; ++c) real.at(r, c) = dataset.train.x.at(src, c);
    }
    train::train_step(state, real, cfg.train);
  }
  const double step_ms =
      std::chrono::duration<double, std::milli>(clock::now() - t0).count() / static_cast<double>(steps);

  const latent::LatentNoise noise =
      latent::draw_noise(state.layout, cfg.train.prior.align_samples, rng);
  obj::PriorVector target{latent::prior_probs(state.alpha), obj::PriorRole::kRetrainedAggregate};
  const auto t1 = clock::now();
  latent::AlphaVector alpha = state.alpha;
  train::align_alpha(alpha, target,
                     train::network_aggregate(state.nets, state.layout, noise, cfg.train.slope),
                     1, cfg.train.prior.alpha_lr, cfg.train.beta1, cfg.train.beta2);
  const double align_ms = std::chrono::duration<double, std::milli>(clock::now() - t1).count() / 2.0;

  out << "train_step (batch " << cfg.train.batch << "): " << fmt(step_ms) << " ms/step over "
      << steps << " steps\n"
      << "alpha alignment step (" << cfg.train.prior.align_samples
      << " latent samples): " << fmt(align_ms) << " ms/step\n";
  return 0;
}

}  // namespace nemgan::runner
