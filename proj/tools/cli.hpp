#pragma once

// Command-line front end. Exit codes: 0 success, 1 I/O or processing
// failure, 2 invalid arguments or configuration. Machine-readable output
// goes to `out`; diagnostics go to `err`.

#include <charconv>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bmsmoe/bmsmoe.hpp"

namespace bmsmoe::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitConfig = 2;

inline const std::vector<double> kDemoCenters{0.12, 0.55, 0.65};

// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {

// Options mapped onto RunConfig keys, applied after the config file.
struct KeyOptions {
  std::optional<std::string> config_file;
  std::deque<std::pair<std::string, std::string>> values;  // key, value; stable addresses
  std::vector<std::pair<std::string, CLI::Option*>> options;
  bool trace = false;
};

inline std::string flag_names(const std::string& key) {
  if (key == "k") return "-k,--patch-size";
  std::string dashed = key;
  std::replace(dashed.begin(), dashed.end(), '_', '-');
  return dashed == key ? "--" + key : "--" + dashed + ",--" + key;
}

inline void register_keys(CLI::App& app, KeyOptions& opts, const std::vector<std::string>& keys) {
  app.add_option("--config", opts.config_file, "key = value configuration file");
  for (const auto& key : keys) {
    opts.values.emplace_back(key, std::string{});
    opts.options.emplace_back(key, app.add_option(flag_names(key), opts.values.back().second, key));
  }
}

// defaults < config file < flags
inline RunConfig resolve(const KeyOptions& opts) {
  RunConfig cfg;
  if (opts.config_file) apply_config_file(cfg, *opts.config_file);
  for (std::size_t i = 0; i < opts.options.size(); ++i) {
    if (opts.options[i].second->count() > 0) set_config_value(cfg, opts.values[i].first, opts.values[i].second);
  }
  if (opts.trace) cfg.trace = true;
  return cfg;
}

inline const std::vector<std::string>& denoise_keys() {
  static const std::vector<std::string> keys = {
      "k",         "stride",     "search_radius", "n_hard",     "tau_hard",       "match_sigma",
      "lambda_2d", "kernels",    "fusion",        "lambda_mse", "lambda_ssim",    "max_iters",
      "lr0",       "adam_beta1", "adam_beta2",    "adam_eps",   "clip_norm",      "plateau_patience",
      "plateau_factor", "min_lr", "early_stop_tol", "seed",     "workers"};
  return keys;
}

inline const std::vector<std::string>& match_keys() {
  static const std::vector<std::string> keys = {"k",           "stride",    "search_radius", "n_hard",
                                                "tau_hard",    "match_sigma", "lambda_2d",   "seed",
                                                "workers"};
  return keys;
}

inline void require_input(const std::filesystem::path& path) {
  if (path.empty()) throw ArgumentError("no input path given");
  if (!std::filesystem::is_regular_file(path)) throw IoError("input file '" + path.string() + "' does not exist");
}

inline void require_output(const std::filesystem::path& path) {
  if (path.empty()) throw ArgumentError("no output path given");
  const auto parent = path.parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent)) {
    throw IoError("output directory '" + parent.string() + "' does not exist");
  }
}

inline int report(std::ostream& err, int code, const std::string& message) {
  err << "error: " << message << '\n';
  return code;
}

// Runs `body`, translating library errors into exit codes.
template <typename Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const ArgumentError& e) {
    return report(err, kExitConfig, e.what());
  } catch (const BoundsError& e) {
    return report(err, kExitConfig, e.what());
  } catch (const Error& e) {
    return report(err, kExitIo, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return report(err, kExitIo, e.what());
  }
}

}  // namespace detail

// Resolves configuration; config-phase failures (including a missing config
// file) are configuration errors.
template <typename Body>
int with_config(std::ostream& err, const detail::KeyOptions& opts, Body&& body) {
  RunConfig cfg;
  try {
    cfg = detail::resolve(opts);
    cfg.denoise.validate();
  } catch (const Error& e) {
    return detail::report(err, kExitConfig, e.what());
  }
  return detail::guarded(err, [&] { return body(cfg); });
}

inline int cmd_denoise(const RunConfig& cfg, std::ostream& err) {
  detail::require_input(cfg.input);
  detail::require_output(cfg.output);
  const ImageBuffer noisy = load_image(cfg.input);
  std::vector<TraceRow> trace;
  const auto result = denoise_image(noisy, cfg.denoise, cfg.trace ? &trace : nullptr);
  save_image(result.image, cfg.output);

  const std::filesystem::path stats_path = cfg.output.string() + ".stats.json";
  std::ofstream stats(stats_path);
  if (!stats) throw IoError("cannot write '" + stats_path.string() + "'");
  stats << to_json(result.stats).dump() << '\n';

  if (cfg.trace) {
    const std::filesystem::path trace_path = cfg.output.string() + ".trace.csv";
    std::ofstream tr(trace_path);
    if (!tr) throw IoError("cannot write '" + trace_path.string() + "'");
    tr << "iter,loss,lr,grad_norm\n";
    for (const auto& row : trace) {
      tr << row.iter << ',' << format_double(row.loss) << ',' << format_double(row.lr) << ','
         << format_double(row.grad_norm) << '\n';
    }
  }
  err << "denoised " << cfg.input.string() << " -> " << cfg.output.string() << " (" << result.stats.groups
      << " groups, " << result.stats.patches << " fits, " << result.stats.encode_s << " s fitting)\n";
  return kExitOk;
}

inline int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  detail::require_input(cfg.input);
  detail::require_output(cfg.output);
  if (!(cfg.noise.sigma >= 0.0)) throw ArgumentError("noise sigma must be nonnegative");
  const ImageBuffer clean = load_image(cfg.input);
  const ImageBuffer noisy = add_speckle(clean, cfg.noise);
  save_image(noisy, cfg.output);
  // Score what was written, after 8-bit quantization.
  const ImageBuffer written = load_image(cfg.output);
  nlohmann::ordered_json j;
  j["psnr"] = psnr_to_json(psnr(written, clean));
  out << j.dump() << '\n';
  err << "wrote " << cfg.output.string() << " (sigma " << cfg.noise.sigma << ", seed " << cfg.noise.seed << ")\n";
  return kExitOk;
}

inline int cmd_evaluate(const std::filesystem::path& a, const std::filesystem::path& b, std::ostream& out) {
  detail::require_input(a);
  detail::require_input(b);
  const ImageBuffer ia = load_image(a);
  const ImageBuffer ib = load_image(b);
  out << to_json(evaluate_quality(ia, ib)).dump() << '\n';
  return kExitOk;
}

inline int cmd_demo_1d(const std::filesystem::path& out_csv, double precision, const std::vector<double>& weights,
                       std::ostream& err) {
  if (weights.size() != kDemoCenters.size()) throw ArgumentError("--weights needs exactly 3 values");
  if (!(precision > 0.0)) throw ArgumentError("--precision must be positive");
  detail::require_output(out_csv);
  const std::vector<double> precisions(kDemoCenters.size(), precision);
  const auto xs = unit_grid_1d();
  const auto t = evaluate_1d(kDemoCenters, precisions, weights, xs);

  std::ofstream csv(out_csv);
  if (!csv) throw IoError("cannot write '" + out_csv.string() + "'");
  csv << "x,k1,k2,k3,g1,g2,g3,y\n";
  for (std::size_t s = 0; s < xs.size(); ++s) {
    csv << format_double(xs[s]);
    for (const auto& k : t.kernels) csv << ',' << format_double(k[s]);
    for (const auto& g : t.gates) csv << ',' << format_double(g[s]);
    csv << ',' << format_double(t.y[s]) << '\n';
  }
  if (!csv) throw IoError("error while writing '" + out_csv.string() + "'");
  err << "wrote " << xs.size() << " samples to " << out_csv.string() << '\n';
  return kExitOk;
}

inline void write_match_csv(std::ostream& os, const PatchStack& stack) {
  os << "ref_x,ref_y,member_x,member_y,distance\n";
  for (const auto& m : stack.members) {
    os << stack.reference.x << ',' << stack.reference.y << ',' << m.origin.x << ',' << m.origin.y << ','
       << format_double(m.distance) << '\n';
  }
}

inline int cmd_match_dump(const RunConfig& cfg, Pixel ref, const std::filesystem::path& out_csv, std::ostream& out) {
  detail::require_input(cfg.input);
  const ImageBuffer img = load_image(cfg.input);
  const PatchStack stack = match_block(img, ref, cfg.denoise.bm);
  if (out_csv.empty()) {
    write_match_csv(out, stack);
  } else {
    detail::require_output(out_csv);
    std::ofstream csv(out_csv);
    if (!csv) throw IoError("cannot write '" + out_csv.string() + "'");
    write_match_csv(csv, stack);
  }
  return kExitOk;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Block-matching steered-mixture-of-experts speckle denoiser"};
  app.require_subcommand(1);

  // denoise
  auto* denoise = app.add_subcommand("denoise", "Denoise a grayscale image");
  detail::KeyOptions denoise_opts;
  std::string denoise_in, denoise_out;
  denoise->add_option("input", denoise_in, "noisy input image (PGM or PNG)");
  denoise->add_option("output", denoise_out, "denoised output image");
  detail::register_keys(*denoise, denoise_opts, detail::denoise_keys());
  denoise->add_flag("--trace", denoise_opts.trace, "write <output>.trace.csv for the first reference fit");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Add multiplicative speckle to a clean image");
  detail::KeyOptions sim_opts;
  std::string sim_in, sim_out;
  simulate->add_option("input", sim_in, "clean input image");
  simulate->add_option("output", sim_out, "speckled output image");
  detail::register_keys(*simulate, sim_opts, {"seed"});
  sim_opts.values.emplace_back("noise_sigma", std::string{});
  sim_opts.options.emplace_back("noise_sigma",
                                simulate->add_option("--sigma,--noise-sigma,--noise_sigma", sim_opts.values.back().second,
                                                     "speckle standard deviation"));

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Full-reference quality metrics as JSON");
  std::string eval_a, eval_b;
  evaluate->add_option("reference", eval_a, "reference image")->required();
  evaluate->add_option("test", eval_b, "test image")->required();

  // demo-1d
  auto* demo = app.add_subcommand("demo-1d", "Three-kernel 1D regression demo as CSV");
  std::string demo_out;
  double demo_precision = 500.0;
  std::vector<double> demo_weights{0.2, 0.8, 0.4};
  demo->add_option("output", demo_out, "CSV output path")->required();
  demo->add_option("--precision", demo_precision, "kernel precision (inverse bandwidth)");
  demo->add_option("--weights", demo_weights, "expert weights w1,w2,w3")->delimiter(',')->expected(3);

  // match-dump
  auto* dump = app.add_subcommand("match-dump", "Block-matching group of one reference as CSV");
  detail::KeyOptions dump_opts;
  std::string dump_in, dump_out;
  int ref_x = 0, ref_y = 0;
  dump->add_option("input", dump_in, "input image")->required();
  dump->add_option("ref_x", ref_x, "reference x")->required();
  dump->add_option("ref_y", ref_y, "reference y")->required();
  dump->add_option("--out", dump_out, "CSV output path (default: standard output)");
  detail::register_keys(*dump, dump_opts, detail::match_keys());

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (denoise->parsed()) {
    return with_config(err, denoise_opts, [&](RunConfig cfg) {
      if (!denoise_in.empty()) cfg.input = denoise_in;
      if (!denoise_out.empty()) cfg.output = denoise_out;
      return cmd_denoise(cfg, err);
    });
  }
  if (simulate->parsed()) {
    return with_config(err, sim_opts, [&](RunConfig cfg) {
      if (!sim_in.empty()) cfg.input = sim_in;
      if (!sim_out.empty()) cfg.output = sim_out;
      return cmd_simulate(cfg, out, err);
    });
  }
  if (evaluate->parsed()) {
    return detail::guarded(err, [&] { return cmd_evaluate(eval_a, eval_b, out); });
  }
  if (demo->parsed()) {
    return detail::guarded(err, [&] { return cmd_demo_1d(demo_out, demo_precision, demo_weights, err); });
  }
  if (dump->parsed()) {
    return with_config(err, dump_opts, [&](RunConfig cfg) {
      cfg.input = dump_in;
      return cmd_match_dump(cfg, {ref_x, ref_y}, dump_out, out);
    });
  }
  return kExitConfig;
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"bmsmoe"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace bmsmoe::cli
