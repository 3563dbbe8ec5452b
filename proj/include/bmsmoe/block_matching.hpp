#pragma once

// Block matching: groups each reference patch with its most similar
// neighbours under a hard-thresholded, per-pixel-normalized squared distance.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bmsmoe/errors.hpp"
#include "bmsmoe/image.hpp"

namespace bmsmoe {

struct BlockMatchConfig {
  int k = 8;
  int stride = 4;
  // Half-width of the square search window; 19 gives a 39x39 window.
  int search_radius = 19;
  int n_hard = 16;
  // 2500 in 8-bit units squared, rescaled to [0,1] intensities.
  double tau_hard = 2500.0 / (255.0 * 255.0);
  double sigma = 0.0;
  double lambda_2d = 0.0;

  void validate() const {
    if (k < 2) throw ArgumentError("patch size k must be >= 2, got " + std::to_string(k));
    if (stride < 1) throw ArgumentError("stride must be >= 1, got " + std::to_string(stride));
    if (search_radius < 0) throw ArgumentError("search radius must be >= 0");
    if (n_hard < 1) throw ArgumentError("n_hard must be >= 1, got " + std::to_string(n_hard));
    if (!(tau_hard > 0.0)) throw ArgumentError("tau_hard must be positive");
    if (!(sigma >= 0.0)) throw ArgumentError("sigma must be nonnegative");
    if (!(lambda_2d >= 0.0)) throw ArgumentError("lambda_2d must be nonnegative");
  }
};

struct MatchedPatch {
  Pixel origin;
  double distance = 0.0;

  friend bool operator==(const MatchedPatch&, const MatchedPatch&) = default;
};

// A matched group. members[0] is always the reference at distance 0; the rest
// follow in ascending distance, ties broken by raster order.
struct PatchStack {
  Pixel reference;
  int k = 0;
  std::vector<MatchedPatch> members;
};

inline Patch hard_threshold(const Patch& patch, double lambda_2d, double sigma) {
  const double level = lambda_2d * sigma;
  Patch out = patch;
  if (level <= 0.0) return out;
  for (double& v : out.values) {
    if (std::abs(v) < level) v = 0.0;
  }
  return out;
}

inline double patch_distance(const Patch& p, const Patch& q, const BlockMatchConfig& cfg) {
  if (p.k != q.k || p.size() != q.size()) {
    throw ArgumentError("patch sizes differ: " + std::to_string(p.k) + " vs " + std::to_string(q.k));
  }
  const Patch tp = hard_threshold(p, cfg.lambda_2d, cfg.sigma);
  const Patch tq = hard_threshold(q, cfg.lambda_2d, cfg.sigma);
  double sum = 0.0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    const double d = tp.values[i] - tq.values[i];
    sum += d * d;
  }
  return sum / static_cast<double>(tp.size());
}

namespace detail {

inline std::vector<int> axis_positions(int extent, int k, int stride) {
  std::vector<int> out;
  for (int p = 0; p + k <= extent; p += stride) out.push_back(p);
  if (out.back() != extent - k) out.push_back(extent - k);
  return out;
}

}  // namespace detail

// Reference origins on a stride grid, with the last row/column forced onto
// the image border. Row-major.
inline std::vector<Pixel> plan_references(int width, int height, const BlockMatchConfig& cfg) {
  cfg.validate();
  if (width < cfg.k || height < cfg.k) {
    throw ArgumentError("image " + std::to_string(width) + "x" + std::to_string(height) +
                        " is smaller than the patch size " + std::to_string(cfg.k));
  }
  const auto xs = detail::axis_positions(width, cfg.k, cfg.stride);
  const auto ys = detail::axis_positions(height, cfg.k, cfg.stride);
  std::vector<Pixel> refs;
  refs.reserve(xs.size() * ys.size());
  for (int y : ys) {
    for (int x : xs) refs.push_back({x, y});
  }
  return refs;
}

inline PatchStack match_block(const ImageBuffer& img, Pixel ref, const BlockMatchConfig& cfg) {
  cfg.validate();
  const int k = cfg.k;
  if (!patch_fits(img.width(), img.height(), ref, k)) {
    throw BoundsError("reference " + to_string(ref) + " is not a valid origin for a " + std::to_string(k) +
                      "x" + std::to_string(k) + " patch in a " + std::to_string(img.width()) + "x" +
                      std::to_string(img.height()) + " image");
  }

  const Patch ref_patch = hard_threshold(extract_patch(img, ref, k), cfg.lambda_2d, cfg.sigma);
  const bool thresholded = cfg.lambda_2d * cfg.sigma > 0.0;
  const double norm = 1.0 / (static_cast<double>(k) * k);

  const int x0 = std::max(0, ref.x - cfg.search_radius);
  const int x1 = std::min(img.width() - k, ref.x + cfg.search_radius);
  const int y0 = std::max(0, ref.y - cfg.search_radius);
  const int y1 = std::min(img.height() - k, ref.y + cfg.search_radius);

  std::vector<MatchedPatch> candidates;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (x == ref.x && y == ref.y) continue;
      double sum = 0.0;
      if (thresholded) {
        const Patch cand = hard_threshold(extract_patch(img, {x, y}, k), cfg.lambda_2d, cfg.sigma);
        for (std::size_t i = 0; i < cand.size(); ++i) {
          const double d = ref_patch.values[i] - cand.values[i];
          sum += d * d;
        }
      } else {
        for (int j = 0; j < k; ++j) {
          for (int i = 0; i < k; ++i) {
            const double d = ref_patch(i, j) - img(x + i, y + j);
            sum += d * d;
          }
        }
      }
      const double distance = sum * norm;
      if (distance <= cfg.tau_hard) candidates.push_back({{x, y}, distance});
    }
  }

  // Candidates were generated in raster order, so a stable sort on distance
  // alone realizes the (distance, y, x) order.
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const MatchedPatch& a, const MatchedPatch& b) { return a.distance < b.distance; });

  PatchStack stack{ref, k, {}};
  const std::size_t keep = std::min(candidates.size(), static_cast<std::size_t>(cfg.n_hard - 1));
  stack.members.reserve(keep + 1);
  stack.members.push_back({ref, 0.0});
  stack.members.insert(stack.members.end(), candidates.begin(), candidates.begin() + static_cast<long>(keep));
  return stack;
}

}  // namespace bmsmoe
