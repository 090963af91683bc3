#pragma once

// Run configuration: model, data and training settings read from an INI file
// with [model], [data] and [train] sections. Unknown keys are rejected.

#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtcn/mixsim.hpp"
#include "dtcn/model.hpp"
#include "dtcn/trainer.hpp"

namespace dtcn {

/// Bad configuration input (unknown key, malformed value, out-of-range setting).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kSnrLimitDb = 20.0;

struct RunConfig {
  DTCNConfig model;
  MixConfig data;
  TrainConfig train;
  std::size_t train_count = 200;
  std::size_t eval_count = 50;
  std::uint64_t pool_seed = 1;
  std::uint64_t train_seed = 2;
  std::uint64_t eval_seed = 3;
  std::uint64_t init_seed = 7;

  /// Desk-scale recipe used by the learning test and the example configs.
  static RunConfig toy() {
    RunConfig r;
    r.model.N = 64;
    r.model.B = 32;
    r.model.H = 64;
    r.model.X = 4;
    r.model.R = 2;
    r.train.batch_size = 2;
    r.train.dynamic_mixing = true;
    return r;
  }

  void validate() const {
    try {
      model.validate();
      train.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    auto snr = [](const char* what, double lo, double hi) {
      if (lo < -kSnrLimitDb || hi > kSnrLimitDb || lo > hi)
        throw ConfigError(std::string(what) + " range must satisfy -20 <= min <= max <= 20 dB");
    };
    snr("mix_snr", data.mix_snr_min, data.mix_snr_max);
    snr("noise_snr", data.noise_snr_min, data.noise_snr_max);
    if (data.t60_min < 0.0 || data.t60_min > data.t60_max) throw ConfigError("t60 range must satisfy 0 <= min <= max");
    if (data.speakers != model.C) throw ConfigError("data.speakers must equal model.C");
    if (data.sample_rate != model.sample_rate) throw ConfigError("data.sample_rate must equal the model sample rate");
    if (data.length < model.L) throw ConfigError("data.length shorter than one encoder block");
    if (data.kinds.empty()) throw ConfigError("data.kinds must not be empty");
    if (!train_count || !eval_count) throw ConfigError("train_count and eval_count must be positive");
  }
};

namespace detail {

struct ConfigKey {
  std::string section, key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T>
T parse_value(const std::string& v) {
  std::istringstream is(v);
  T out{};
  if constexpr (std::is_same_v<T, bool>) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("expected a boolean, got '" + v + "'");
  } else {
    if constexpr (std::is_unsigned_v<T>)
      if (!v.empty() && v[0] == '-') throw ConfigError("expected a non-negative value, got '" + v + "'");
    is >> out;
    if (!is || !is.eof()) throw ConfigError("malformed value '" + v + "'");
  }
  return out;
}

template <typename T>
std::string show(const T& v) {
  std::ostringstream os;
  if constexpr (std::is_same_v<T, bool>) os << (v ? "true" : "false");
  else os << std::setprecision(17) << v;
  return os.str();
}

template <typename T>
ConfigKey field(std::string section, std::string key, T RunConfig::*outer) {
  return {std::move(section), std::move(key), [outer](RunConfig& r, const std::string& v) { r.*outer = parse_value<T>(v); },
          [outer](const RunConfig& r) { return show(r.*outer); }};
}

template <typename S, typename T>
ConfigKey field(std::string section, std::string key, S RunConfig::*outer, T S::*inner) {
  return {std::move(section), std::move(key),
          [outer, inner](RunConfig& r, const std::string& v) { (r.*outer).*inner = parse_value<T>(v); },
          [outer, inner](const RunConfig& r) { return show((r.*outer).*inner); }};
}

inline const std::vector<ConfigKey>& config_schema() {
  using R = RunConfig;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    k.push_back(field("model", "N", &R::model, &DTCNConfig::N));
    k.push_back(field("model", "B", &R::model, &DTCNConfig::B));
    k.push_back(field("model", "H", &R::model, &DTCNConfig::H));
    k.push_back(field("model", "P", &R::model, &DTCNConfig::P));
    k.push_back(field("model", "L", &R::model, &DTCNConfig::L));
    k.push_back(field("model", "X", &R::model, &DTCNConfig::X));
    k.push_back(field("model", "R", &R::model, &DTCNConfig::R));
    k.push_back(field("model", "C", &R::model, &DTCNConfig::C));
    k.push_back(field("model", "deformable", &R::model, &DTCNConfig::deformable));
    k.push_back(field("model", "shared_weights", &R::model, &DTCNConfig::shared_weights));
    k.push_back(field("model", "skip_connections", &R::model, &DTCNConfig::skip_connections));
    k.push_back(field("model", "init_seed", &R::init_seed));
    // One rate for both model and data.
    k.push_back({"data", "sample_rate",
                 [](R& r, const std::string& v) { r.data.sample_rate = r.model.sample_rate = parse_value<int>(v); },
                 [](const R& r) { return show(r.data.sample_rate); }});
    k.push_back(field("data", "speakers", &R::data, &MixConfig::speakers));
    k.push_back(field("data", "length", &R::data, &MixConfig::length));
    k.push_back(field("data", "mix_snr_min", &R::data, &MixConfig::mix_snr_min));
    k.push_back(field("data", "mix_snr_max", &R::data, &MixConfig::mix_snr_max));
    k.push_back(field("data", "noise_snr_min", &R::data, &MixConfig::noise_snr_min));
    k.push_back(field("data", "noise_snr_max", &R::data, &MixConfig::noise_snr_max));
    k.push_back(field("data", "t60_min", &R::data, &MixConfig::t60_min));
    k.push_back(field("data", "t60_max", &R::data, &MixConfig::t60_max));
    k.push_back(field("data", "tail_gain", &R::data, &MixConfig::tail_gain));
    k.push_back(field("data", "max_direct_delay", &R::data, &MixConfig::max_direct_delay));
    k.push_back(field("data", "pool_size", &R::data, &MixConfig::pool_size));
    k.push_back(field("data", "noise", &R::data, &MixConfig::noise));
    k.push_back(field("data", "speed_perturb", &R::data, &MixConfig::speed_perturb));
    k.push_back({"data", "kinds",
                 [](R& r, const std::string& v) {
                   r.data.kinds.clear();
                   for (const auto& part : split(v, ',')) {
                     try {
                       r.data.kinds.push_back(parse_source_kind(trim(part)));
                     } catch (const std::exception& e) {
                       throw ConfigError(e.what());
                     }
                   }
                 },
                 [](const R& r) {
                   std::string s;
                   for (std::size_t i = 0; i < r.data.kinds.size(); ++i) s += (i ? "," : "") + to_string(r.data.kinds[i]);
                   return s;
                 }});
    k.push_back(field("data", "train_count", &R::train_count));
    k.push_back(field("data", "eval_count", &R::eval_count));
    k.push_back(field("data", "pool_seed", &R::pool_seed));
    k.push_back(field("data", "train_seed", &R::train_seed));
    k.push_back(field("data", "eval_seed", &R::eval_seed));
    k.push_back(field("train", "epochs", &R::train, &TrainConfig::epochs));
    k.push_back(field("train", "batch_size", &R::train, &TrainConfig::batch_size));
    k.push_back(field("train", "lr", &R::train, &TrainConfig::lr));
    k.push_back(field("train", "clip_norm", &R::train, &TrainConfig::clip_norm));
    k.push_back(field("train", "seed", &R::train, &TrainConfig::seed));
    k.push_back(field("train", "dynamic_mixing", &R::train, &TrainConfig::dynamic_mixing));
    k.push_back(field("train", "eval_interval", &R::train, &TrainConfig::eval_interval));
    k.push_back(field("train", "patience", &R::train, &TrainConfig::patience));
    k.push_back(field("train", "beta1", &R::train, &TrainConfig::beta1));
    k.push_back(field("train", "beta2", &R::train, &TrainConfig::beta2));
    k.push_back(field("train", "adam_eps", &R::train, &TrainConfig::adam_eps));
    return k;
  }();
  return keys;
}

}  // namespace detail

/// Sets "section.key" to `value`.
inline void set_config_value(RunConfig& r, const std::string& dotted, const std::string& value) {
  const auto dot = dotted.find('.');
  if (dot == std::string::npos) throw ConfigError("config key must look like section.key: " + dotted);
  const std::string section = dotted.substr(0, dot), key = dotted.substr(dot + 1);
  for (const auto& k : detail::config_schema()) {
    if (k.section == section && k.key == key) {
      try {
        k.set(r, value);
      } catch (const ConfigError& e) {
        throw ConfigError(dotted + ": " + e.what());
      }
      return;
    }
  }
  throw ConfigError("unknown config key: " + dotted);
}

/// Applies "section.key=value" overrides.
inline void apply_overrides(RunConfig& r, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override must look like section.key=value: " + o);
    set_config_value(r, detail::trim(o.substr(0, eq)), detail::trim(o.substr(eq + 1)));
  }
}

/// Reads INI text on top of `base`. '#' and ';' start comments.
inline RunConfig parse_config(std::istream& is, RunConfig base = {}) {
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos || section.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value inside a section");
    try {
      set_config_value(base, section + "." + detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  return parse_config(is, std::move(base));
}

/// Writes every key; parse_config(write_config(r)) reproduces r.
inline void write_config(std::ostream& os, const RunConfig& r) {
  std::string section;
  for (const auto& k : detail::config_schema()) {
    if (k.section != section) {
      if (!section.empty()) os << '\n';
      section = k.section;
      os << '[' << section << "]\n";
    }
    os << k.key << " = " << k.get(r) << '\n';
  }
}

}  // namespace dtcn
