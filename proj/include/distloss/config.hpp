#pragma once

#include <charconv>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "distloss/dataset.hpp"
#include "distloss/errors.hpp"
#include "distloss/loss.hpp"
#include "distloss/nnet.hpp"
#include "distloss/train.hpp"

namespace distloss {

/// Every knob of a run. Defaults describe the desk-scale experiment: an
/// exponentially imbalanced synthetic task with noisy features, 20 label
/// bins and regions by fraction of the fullest bin.
struct RunConfig {
  std::string tag = "run";
  std::string out_dir = "runs";
  std::string data_path;   // external CSV; empty = synthesize
  std::string checkpoint;  // empty = <run dir>/checkpoint.json
  std::string init_from;   // warm-start checkpoint for fine-tuning
  std::vector<std::string> ablate_values;
  SynthSpec data;
  TrainConfig train;
  std::uint64_t seed = 0;

  RunConfig() {
    data.noise_sd = 0.6;
    data.imbalance_ratio = 100.0;
    train.delta_y = 0.5;
    train.epochs = 20;
    train.scheme = ShotScheme::nmax_fractions;
    train.region_low = 0.15;
    train.region_high = 0.5;
    sync();
  }

  /// Copies shared settings (seed, label range) into the module configs.
  void sync() {
    data.seed = seed;
    train.seed = seed;
    train.y_min = data.y_min;
    train.y_max = data.y_max;
  }
};

namespace detail {

inline std::string fmt_num(double v) { return format_double(v); }

template <class T>
T parse_int(const std::string& key, std::string_view s) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw Error(ErrorCode::ConfigError, key + ": expected an integer, got '" + std::string(s) + "'");
  return v;
}

inline double parse_real(const std::string& key, const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(v))
    throw Error(ErrorCode::ConfigError, key + ": expected a number, got '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw Error(ErrorCode::ConfigError, key + ": expected true/false, got '" + s + "'");
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

struct ConfigKey {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

inline ConfigKey real_key(std::string name, double TrainConfig::*field) {
  return {name, [field](const RunConfig& c) { return fmt_num(c.train.*field); },
          [name, field](RunConfig& c, const std::string& v) { c.train.*field = parse_real(name, v); }};
}

inline ConfigKey size_key(std::string name, std::size_t TrainConfig::*field) {
  return {name, [field](const RunConfig& c) { return std::to_string(c.train.*field); },
          [name, field](RunConfig& c, const std::string& v) {
            c.train.*field = parse_int<std::size_t>(name, v);
          }};
}

inline ConfigKey bool_key(std::string name, bool TrainConfig::*field) {
  return {name, [field](const RunConfig& c) { return std::string(c.train.*field ? "true" : "false"); },
          [name, field](RunConfig& c, const std::string& v) { c.train.*field = parse_bool(name, v); }};
}

inline ConfigKey opt_real_key(std::string name, std::optional<double> TrainConfig::*field) {
  return {name,
          [field](const RunConfig& c) {
            return (c.train.*field) ? fmt_num(*(c.train.*field)) : std::string("auto");
          },
          [name, field](RunConfig& c, const std::string& v) {
            if (v == "auto") c.train.*field = std::nullopt;
            else c.train.*field = parse_real(name, v);
          }};
}

inline ConfigKey string_key(std::string name, std::string RunConfig::*field) {
  return {name, [field](const RunConfig& c) { return c.*field; },
          [field](RunConfig& c, const std::string& v) { c.*field = v; }};
}

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    k.push_back(string_key("tag", &RunConfig::tag));
    k.push_back(string_key("out_dir", &RunConfig::out_dir));
    k.push_back(string_key("data_path", &RunConfig::data_path));
    k.push_back(string_key("checkpoint", &RunConfig::checkpoint));
    k.push_back(string_key("init_from", &RunConfig::init_from));
    k.push_back({"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
                 [](RunConfig& c, const std::string& v) { c.seed = parse_int<std::uint64_t>("seed", v); }});

    auto data_size = [](std::string name, std::size_t SynthSpec::*field) {
      return ConfigKey{name, [field](const RunConfig& c) { return std::to_string(c.data.*field); },
                       [name, field](RunConfig& c, const std::string& v) {
                         c.data.*field = parse_int<std::size_t>(name, v);
                       }};
    };
    auto data_real = [](std::string name, double SynthSpec::*field) {
      return ConfigKey{name, [field](const RunConfig& c) { return fmt_num(c.data.*field); },
                       [name, field](RunConfig& c, const std::string& v) {
                         c.data.*field = parse_real(name, v);
                       }};
    };
    k.push_back(data_size("n_train", &SynthSpec::n_train));
    k.push_back(data_size("n_eval", &SynthSpec::n_eval));
    k.push_back(data_size("d", &SynthSpec::d));
    k.push_back(data_real("y_min", &SynthSpec::y_min));
    k.push_back(data_real("y_max", &SynthSpec::y_max));
    k.push_back({"target_law", [](const RunConfig& c) { return std::string(to_string(c.data.law)); },
                 [](RunConfig& c, const std::string& v) { c.data.law = parse_target_law(v); }});
    k.push_back(data_real("imbalance_ratio", &SynthSpec::imbalance_ratio));
    k.push_back(data_real("lognormal_mu", &SynthSpec::lognormal_mu));
    k.push_back(data_real("lognormal_sigma", &SynthSpec::lognormal_sigma));
    k.push_back(data_real("bimodal_weight", &SynthSpec::bimodal_weight));
    k.push_back(data_real("bimodal_sd", &SynthSpec::bimodal_sd));
    k.push_back(data_real("noise_sd", &SynthSpec::noise_sd));

    k.push_back(real_key("delta_y", &TrainConfig::delta_y));
    k.push_back(opt_real_key("bandwidth", &TrainConfig::bandwidth));

    k.push_back({"seq_loss", [](const RunConfig& c) { return to_string(c.train.loss.kind); },
                 [](RunConfig& c, const std::string& v) { c.train.loss.kind = parse_seq_loss_kind(v); }});
    k.push_back({"dist_weight", [](const RunConfig& c) { return fmt_num(c.train.loss.dist_weight); },
                 [](RunConfig& c, const std::string& v) {
                   c.train.loss.dist_weight = parse_real("dist_weight", v);
                 }});
    k.push_back({"weight_floor", [](const RunConfig& c) { return fmt_num(c.train.loss.weight_floor); },
                 [](RunConfig& c, const std::string& v) {
                   c.train.loss.weight_floor = parse_real("weight_floor", v);
                 }});
    k.push_back({"normalize_weights",
                 [](const RunConfig& c) { return std::string(c.train.loss.normalize_weights ? "true" : "false"); },
                 [](RunConfig& c, const std::string& v) {
                   c.train.loss.normalize_weights = parse_bool("normalize_weights", v);
                 }});
    k.push_back({"weight_sample_term",
                 [](const RunConfig& c) { return std::string(c.train.loss.weight_sample_term ? "true" : "false"); },
                 [](RunConfig& c, const std::string& v) {
                   c.train.loss.weight_sample_term = parse_bool("weight_sample_term", v);
                 }});
    k.push_back(opt_real_key("sort_epsilon", &TrainConfig::sort_epsilon));

    k.push_back({"hidden",
                 [](const RunConfig& c) {
                   std::vector<std::string> parts;
                   for (auto h : c.train.hidden) parts.push_back(std::to_string(h));
                   return join(parts);
                 },
                 [](RunConfig& c, const std::string& v) {
                   c.train.hidden.clear();
                   for (const auto& p : split_list(v)) {
                     const auto h = parse_int<std::size_t>("hidden", p);
                     if (h == 0) throw Error(ErrorCode::ConfigError, "hidden: widths must be >= 1");
                     c.train.hidden.push_back(h);
                   }
                 }});
    k.push_back({"activation", [](const RunConfig& c) { return std::string(to_string(c.train.activation)); },
                 [](RunConfig& c, const std::string& v) { c.train.activation = parse_activation(v); }});
    k.push_back(size_key("epochs", &TrainConfig::epochs));
    k.push_back(size_key("batch_size", &TrainConfig::batch_size));
    k.push_back(real_key("lr", &TrainConfig::lr));
    k.push_back({"lr_milestones",
                 [](const RunConfig& c) {
                   if (!c.train.lr_milestones) return std::string("auto");
                   std::vector<std::string> parts;
                   for (auto m : *c.train.lr_milestones) parts.push_back(std::to_string(m));
                   return parts.empty() ? std::string("none") : join(parts);
                 },
                 [](RunConfig& c, const std::string& v) {
                   if (v == "auto") {
                     c.train.lr_milestones.reset();
                     return;
                   }
                   std::vector<std::size_t> ms;
                   if (v != "none")
                     for (const auto& p : split_list(v)) ms.push_back(parse_int<std::size_t>("lr_milestones", p));
                   c.train.lr_milestones = ms;
                 }});
    k.push_back(real_key("lr_decay", &TrainConfig::lr_decay));
    k.push_back(real_key("beta1", &TrainConfig::beta1));
    k.push_back(real_key("beta2", &TrainConfig::beta2));
    k.push_back(real_key("adam_eps", &TrainConfig::adam_eps));
    k.push_back(real_key("weight_decay", &TrainConfig::weight_decay));
    k.push_back(bool_key("drop_last", &TrainConfig::drop_last));
    k.push_back(bool_key("last_layer_only", &TrainConfig::last_layer_only));
    k.push_back(bool_key("init_bias_to_mean", &TrainConfig::init_bias_to_mean));

    k.push_back({"shot_scheme", [](const RunConfig& c) { return std::string(to_string(c.train.scheme)); },
                 [](RunConfig& c, const std::string& v) { c.train.scheme = parse_shot_scheme(v); }});
    k.push_back(real_key("region_low", &TrainConfig::region_low));
    k.push_back(real_key("region_high", &TrainConfig::region_high));
    k.push_back(real_key("gm_eps", &TrainConfig::gm_eps));
    k.push_back({"ablate_values", [](const RunConfig& c) { return join(c.ablate_values); },
                 [](RunConfig& c, const std::string& v) { c.ablate_values = split_list(v); }});
    return k;
  }();
  return keys;
}

}  // namespace detail

inline std::vector<std::string> config_key_names() {
  std::vector<std::string> names;
  for (const auto& k : detail::config_keys()) names.push_back(k.name);
  return names;
}

/// Sets one key; unknown keys and malformed values raise ConfigError.
inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : detail::config_keys()) {
    if (k.name == key) {
      k.set(cfg, value);
      cfg.sync();
      return;
    }
  }
  throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "'");
}

inline std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : detail::config_keys()) out.emplace_back(k.name, k.get(cfg));
  return out;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

/// Flat `key = value` lines; '#' starts a comment line.
inline void apply_config_text(RunConfig& cfg, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": expected key = value");
    set_config_value(cfg, trim(std::string_view(t).substr(0, eq)),
                     trim(std::string_view(t).substr(eq + 1)));
  }
}

inline RunConfig parse_config_text(std::string_view text) {
  RunConfig cfg;
  apply_config_text(cfg, text);
  return cfg;
}

inline std::string config_to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_entries(cfg)) out += k + " = " + v + "\n";
  return out;
}

inline nlohmann::json config_to_json(const RunConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : config_entries(cfg)) j[k] = v;
  return j;
}

/// Single-line form used for CSV comment headers.
inline std::string config_to_line(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_entries(cfg)) out += (out.empty() ? "" : "; ") + k + "=" + v;
  return out;
}

}  // namespace distloss
