#pragma once

// End-to-end denoising: plan references, match blocks, fit one SMoE model
// per matched patch, fuse the member decodes and aggregate the fused patch
// back at every member position.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "bmsmoe/block_matching.hpp"
#include "bmsmoe/errors.hpp"
#include "bmsmoe/fitting.hpp"
#include "bmsmoe/image.hpp"
#include "bmsmoe/smoe.hpp"

namespace bmsmoe {

enum class FusionMode { average, loss_weighted };

inline std::string to_string(FusionMode mode) {
  return mode == FusionMode::average ? "average" : "loss-weighted";
}

inline FusionMode parse_fusion_mode(const std::string& name) {
  if (name == "average") return FusionMode::average;
  if (name == "loss-weighted" || name == "loss_weighted") return FusionMode::loss_weighted;
  throw ArgumentError("unknown fusion mode '" + name + "' (expected average or loss-weighted)");
}

struct DenoiseConfig {
  BlockMatchConfig bm;
  FitConfig fit;
  int kernels = 4;
  FusionMode fusion = FusionMode::average;
  std::uint64_t seed = 0;
  // 0 means one worker per hardware thread.
  int workers = 1;

  void validate() const {
    bm.validate();
    fit.validate();
    if (kernels < 1 || kernels > 16) throw ArgumentError("kernel count must lie in [1, 16]");
    if (workers < 0) throw ArgumentError("worker count must be nonnegative");
  }
};

struct DenoiseStats {
  std::size_t groups = 0;
  std::size_t patches = 0;
  double mean_loss = 0.0;
  double encode_s = 0.0;
  double decode_s = 0.0;
};

inline nlohmann::ordered_json to_json(const DenoiseStats& s) {
  return {{"groups", s.groups},
          {"patches", s.patches},
          {"mean_loss", s.mean_loss},
          {"encode_s", s.encode_s},
          {"decode_s", s.decode_s}};
}

// splitmix64 finalizer over (seed, x, y).
inline std::uint64_t derive_seed(std::uint64_t seed, int x, int y) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(seed);
  h = mix(h ^ static_cast<std::uint32_t>(x));
  h = mix(h ^ static_cast<std::uint32_t>(y));
  return h;
}

// Per-member fits of one group; failed members are empty.
struct GroupFits {
  PatchStack stack;
  std::vector<std::optional<FitResult>> fits;
};

struct GroupEstimate {
  Patch fused;
  std::vector<Pixel> positions;  // members that contributed
  std::vector<double> losses;
};

inline GroupFits fit_group(const ImageBuffer& img, const PatchStack& stack, const DenoiseConfig& cfg,
                           std::vector<TraceRow>* trace = nullptr) {
  GroupFits out{stack, {}};
  out.fits.reserve(stack.members.size());
  const std::uint64_t group_seed = derive_seed(cfg.seed, stack.reference.x, stack.reference.y);
  for (std::size_t m = 0; m < stack.members.size(); ++m) {
    const Patch noisy = extract_patch(img, stack.members[m].origin, stack.k);
    try {
      out.fits.emplace_back(
          fit_patch(noisy, cfg.kernels, cfg.fit, group_seed + m, m == 0 ? trace : nullptr));
    } catch (const FittingError&) {
      out.fits.emplace_back(std::nullopt);
    } catch (const NumericalError&) {
      out.fits.emplace_back(std::nullopt);
    }
  }
  return out;
}

// Multi-model fusion: convex combination of the member decodes.
inline GroupEstimate fuse_group(const GroupFits& group, const DenoiseConfig& cfg) {
  const SampleGrid grid(group.stack.k);
  GroupEstimate est;
  std::vector<Patch> decodes;
  for (std::size_t m = 0; m < group.fits.size(); ++m) {
    if (!group.fits[m]) continue;
    decodes.push_back(decode(group.fits[m]->model, grid));
    est.positions.push_back(group.stack.members[m].origin);
    est.losses.push_back(group.fits[m]->loss);
  }
  if (decodes.empty()) {
    throw FittingError("every member fit failed for reference " + to_string(group.stack.reference), 0);
  }

  std::vector<double> alpha(decodes.size(), 1.0 / static_cast<double>(decodes.size()));
  if (cfg.fusion == FusionMode::loss_weighted) {
    double total = 0.0;
    for (std::size_t m = 0; m < decodes.size(); ++m) {
      alpha[m] = 1.0 / (est.losses[m] + 1e-6);
      total += alpha[m];
    }
    for (double& a : alpha) a /= total;
  }

  est.fused = Patch(group.stack.k, group.stack.reference);
  for (std::size_t m = 0; m < decodes.size(); ++m) {
    for (std::size_t p = 0; p < est.fused.size(); ++p) est.fused.values[p] += alpha[m] * decodes[m].values[p];
  }
  return est;
}

inline GroupEstimate denoise_group(const ImageBuffer& img, const PatchStack& stack, const DenoiseConfig& cfg) {
  return fuse_group(fit_group(img, stack, cfg), cfg);
}

namespace detail {

inline int resolve_workers(int requested) {
  if (requested > 0) return requested;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

}  // namespace detail

struct DenoiseResult {
  ImageBuffer image;
  DenoiseStats stats;
};

// Output is independent of the worker count: groups are fitted in parallel
// into fixed slots and aggregated serially in reference order.
inline DenoiseResult denoise_image(const ImageBuffer& noisy, const DenoiseConfig& cfg,
                                   std::vector<TraceRow>* trace = nullptr) {
  cfg.validate();
  using Clock = std::chrono::steady_clock;
  const auto refs = plan_references(noisy.width(), noisy.height(), cfg.bm);

  const auto t0 = Clock::now();
  std::vector<GroupFits> groups(refs.size());
  std::vector<std::exception_ptr> errors(refs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < refs.size(); i = next++) {
      try {
        const PatchStack stack = match_block(noisy, refs[i], cfg.bm);
        groups[i] = fit_group(noisy, stack, cfg, i == 0 ? trace : nullptr);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n_workers = std::min<int>(detail::resolve_workers(cfg.workers), static_cast<int>(refs.size()));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      throw Error("reference " + to_string(refs[i]) + ": " + e.what());
    }
  }
  const auto t1 = Clock::now();

  DenoiseResult result;
  Accumulator acc(noisy.width(), noisy.height());
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    GroupEstimate est;
    try {
      est = fuse_group(groups[i], cfg);
    } catch (const std::exception& e) {
      throw Error("reference " + to_string(refs[i]) + ": " + e.what());
    }
    for (Pixel at : est.positions) acc.add(est.fused, at, 1.0);
    for (double l : est.losses) loss_sum += l;
    result.stats.patches += est.losses.size();
  }
  result.image = finalize(acc, noisy);
  const auto t2 = Clock::now();

  result.stats.groups = refs.size();
  result.stats.mean_loss = result.stats.patches ? loss_sum / static_cast<double>(result.stats.patches) : 0.0;
  result.stats.encode_s = std::chrono::duration<double>(t1 - t0).count();
  result.stats.decode_s = std::chrono::duration<double>(t2 - t1).count();
  return result;
}

}  // namespace bmsmoe
