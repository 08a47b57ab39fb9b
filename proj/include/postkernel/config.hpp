#pragma once

// Flat key=value experiment configuration.
//
//   # comment
//   command = verify            verify | risk | ntk
//   prior = configs/four_function.json
//   seed = 7
//
// Keys (defaults in parentheses): command, prior, seed (0), n_train (1),
// samples (10000), mode (exact; exact | mc), rtol (1e-7), eps (1e-10),
// match_tol (1e-9), out (stdout), trials (100), competitors (1000),
// inject_zero_labels (false), lr (0.01), epochs (300), batch_size (10),
// eval_every (5), widths (2,32,32), n_points (200), svg (false).
// Relative "prior" paths resolve against the config file's directory.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "postkernel/errors.hpp"
#include "postkernel/kernel_metrics.hpp"
#include "postkernel/priors.hpp"

namespace postkernel {

struct ExperimentConfig {
  std::string command;
  std::string prior_path;
  std::uint64_t seed = 0;
  std::size_t n_train = 1;
  std::size_t samples = 10000;
  std::string mode = "exact";
  double rtol = kDefaultRtol;
  double eps = kDefaultEigenFloor;
  double match_tol = kDefaultMatchTol;
  std::string out;
  std::size_t trials = 100;
  std::size_t competitors = 1000;
  bool inject_zero_labels = false;
  // ntk
  double lr = 1e-2;
  int epochs = 300;
  int batch_size = 10;
  int eval_every = 5;
  std::vector<std::size_t> widths{2, 32, 32};
  std::size_t n_points = 200;
  bool svg = false;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (in.fail() || !in.eof()) throw ConfigError("config key '" + key + "' has invalid value '" + value + "'");
  if constexpr (std::is_unsigned_v<T>) {
    if (value.find('-') != std::string::npos) throw ConfigError("config key '" + key + "' must be non-negative");
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config key '" + key + "' expects true/false, got '" + value + "'");
}

}  // namespace detail

/// Applies one key=value setting.
inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_number;
  if (key == "command") cfg.command = value;
  else if (key == "prior") cfg.prior_path = value;
  else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "n_train") cfg.n_train = parse_number<std::size_t>(key, value);
  else if (key == "samples") cfg.samples = parse_number<std::size_t>(key, value);
  else if (key == "mode") cfg.mode = value;
  else if (key == "rtol") cfg.rtol = parse_number<double>(key, value);
  else if (key == "eps") cfg.eps = parse_number<double>(key, value);
  else if (key == "match_tol") cfg.match_tol = parse_number<double>(key, value);
  else if (key == "out") cfg.out = value;
  else if (key == "trials") cfg.trials = parse_number<std::size_t>(key, value);
  else if (key == "competitors") cfg.competitors = parse_number<std::size_t>(key, value);
  else if (key == "inject_zero_labels") cfg.inject_zero_labels = detail::parse_bool(key, value);
  else if (key == "lr") cfg.lr = parse_number<double>(key, value);
  else if (key == "epochs") cfg.epochs = parse_number<int>(key, value);
  else if (key == "batch_size") cfg.batch_size = parse_number<int>(key, value);
  else if (key == "eval_every") cfg.eval_every = parse_number<int>(key, value);
  else if (key == "n_points") cfg.n_points = parse_number<std::size_t>(key, value);
  else if (key == "svg") cfg.svg = detail::parse_bool(key, value);
  else if (key == "widths") {
    cfg.widths.clear();
    std::stringstream in(value);
    std::string item;
    while (std::getline(in, item, ',')) cfg.widths.push_back(parse_number<std::size_t>(key, detail::trim(item)));
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

inline ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {}) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + " is not key=value");
    set_config_value(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  if (!cfg.prior_path.empty() && !base_dir.empty() && std::filesystem::path(cfg.prior_path).is_relative()) {
    cfg.prior_path = (base_dir / cfg.prior_path).string();
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), std::filesystem::path(path).parent_path());
}

inline void validate(const ExperimentConfig& cfg) {
  if (cfg.command != "verify" && cfg.command != "risk" && cfg.command != "ntk") {
    throw ConfigError("command must be verify, risk or ntk (got '" + cfg.command + "')");
  }
  if (cfg.command != "ntk") {
    if (cfg.prior_path.empty()) throw ConfigError("command '" + cfg.command + "' needs a prior file");
    if (!std::filesystem::exists(cfg.prior_path)) throw ConfigError("prior file '" + cfg.prior_path + "' does not exist");
  }
  if (cfg.mode != "exact" && cfg.mode != "mc") throw ConfigError("mode must be exact or mc");
  if (!(cfg.rtol > 0.0) || !(cfg.eps > 0.0)) throw ConfigError("rtol and eps must be positive");
  if (!(cfg.match_tol >= 0.0)) throw ConfigError("match_tol must be non-negative");
  if (cfg.mode == "mc" && cfg.samples == 0) throw ConfigError("monte-carlo mode needs samples > 0");
}

}  // namespace postkernel
