#pragma once

// Run configuration shared by the command-line tool: every tunable exposed
// under one key name, loadable from `key = value` files and overridable key
// by key.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bmsmoe/assessment.hpp"
#include "bmsmoe/errors.hpp"
#include "bmsmoe/pipeline.hpp"

namespace bmsmoe {

struct RunConfig {
  DenoiseConfig denoise;
  NoiseConfig noise;
  std::filesystem::path input;
  std::filesystem::path output;
  bool trace = false;

  RunConfig() { denoise.workers = 0; }
};

namespace detail {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw ArgumentError("invalid value '" + text + "' for key '" + key + "'");
  }
  return value;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ArgumentError("invalid boolean '" + text + "' for key '" + key + "'");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

using ConfigSetter = std::function<void(RunConfig&, const std::string&)>;

// Key name -> setter. Keys use underscores; the CLI also accepts dashes.
inline const std::map<std::string, ConfigSetter>& config_keys() {
  using detail::parse_bool;
  using detail::parse_number;
  static const std::map<std::string, ConfigSetter> keys = {
      {"k", [](RunConfig& c, const std::string& v) { c.denoise.bm.k = parse_number<int>("k", v); }},
      {"stride", [](RunConfig& c, const std::string& v) { c.denoise.bm.stride = parse_number<int>("stride", v); }},
      {"search_radius",
       [](RunConfig& c, const std::string& v) { c.denoise.bm.search_radius = parse_number<int>("search_radius", v); }},
      {"n_hard", [](RunConfig& c, const std::string& v) { c.denoise.bm.n_hard = parse_number<int>("n_hard", v); }},
      {"tau_hard",
       [](RunConfig& c, const std::string& v) { c.denoise.bm.tau_hard = parse_number<double>("tau_hard", v); }},
      {"match_sigma",
       [](RunConfig& c, const std::string& v) { c.denoise.bm.sigma = parse_number<double>("match_sigma", v); }},
      {"lambda_2d",
       [](RunConfig& c, const std::string& v) { c.denoise.bm.lambda_2d = parse_number<double>("lambda_2d", v); }},
      {"kernels", [](RunConfig& c, const std::string& v) { c.denoise.kernels = parse_number<int>("kernels", v); }},
      {"fusion", [](RunConfig& c, const std::string& v) { c.denoise.fusion = parse_fusion_mode(v); }},
      {"lambda_mse",
       [](RunConfig& c, const std::string& v) { c.denoise.fit.lambda_mse = parse_number<double>("lambda_mse", v); }},
      {"lambda_ssim",
       [](RunConfig& c, const std::string& v) { c.denoise.fit.lambda_ssim = parse_number<double>("lambda_ssim", v); }},
      {"max_iters",
       [](RunConfig& c, const std::string& v) { c.denoise.fit.max_iters = parse_number<int>("max_iters", v); }},
      {"lr0", [](RunConfig& c, const std::string& v) { c.denoise.fit.lr0 = parse_number<double>("lr0", v); }},
      {"adam_beta1",
       [](RunConfig& c, const std::string& v) { c.denoise.fit.adam_beta1 = parse_number<double>("adam_beta1", v); }},
      {"adam_beta2",
       [](RunConfig& c, const std::string& v) { c.denoise.fit.adam_beta2 = parse_number<double>("adam_beta2", v); }},
      {"adam_eps",
       [](RunConfig& c, const std::string& v) { c.denoise.fit.adam_eps = parse_number<double>("adam_eps", v); }},
      {"clip_norm",
       [](RunConfig& c, const std::string& v) { c.denoise.fit.clip_norm = parse_number<double>("clip_norm", v); }},
      {"plateau_patience",
       [](RunConfig& c, const std::string& v) {
         c.denoise.fit.plateau_patience = parse_number<int>("plateau_patience", v);
       }},
      {"plateau_factor",
       [](RunConfig& c, const std::string& v) {
         c.denoise.fit.plateau_factor = parse_number<double>("plateau_factor", v);
       }},
      {"min_lr", [](RunConfig& c, const std::string& v) { c.denoise.fit.min_lr = parse_number<double>("min_lr", v); }},
      {"early_stop_tol",
       [](RunConfig& c, const std::string& v) {
         c.denoise.fit.early_stop_tol = parse_number<double>("early_stop_tol", v);
       }},
      {"seed",
       [](RunConfig& c, const std::string& v) {
         c.denoise.seed = parse_number<std::uint64_t>("seed", v);
         c.noise.seed = c.denoise.seed;
       }},
      {"workers", [](RunConfig& c, const std::string& v) { c.denoise.workers = parse_number<int>("workers", v); }},
      {"noise_sigma",
       [](RunConfig& c, const std::string& v) { c.noise.sigma = parse_number<double>("noise_sigma", v); }},
      {"input", [](RunConfig& c, const std::string& v) { c.input = v; }},
      {"output", [](RunConfig& c, const std::string& v) { c.output = v; }},
      {"trace", [](RunConfig& c, const std::string& v) { c.trace = parse_bool("trace", v); }},
  };
  return keys;
}

inline void set_config_value(RunConfig& cfg, std::string key, const std::string& value) {
  std::replace(key.begin(), key.end(), '-', '_');
  const auto& keys = config_keys();
  const auto it = keys.find(key);
  if (it == keys.end()) throw ArgumentError("unknown configuration key '" + key + "'");
  it->second(cfg, value);
}

// Applies `key = value` lines; '#' starts a comment.
inline void apply_config_text(RunConfig& cfg, std::istream& in, const std::string& source = "config") {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ArgumentError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    try {
      set_config_value(cfg, key, value);
    } catch (const ArgumentError& e) {
      throw ArgumentError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path.string() + "'");
  apply_config_text(cfg, in, path.string());
}

}  // namespace bmsmoe
