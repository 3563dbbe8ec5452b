#pragma once

// Speckle simulation and full-reference quality metrics. All metrics assume
// unit peak intensity.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bmsmoe/errors.hpp"
#include "bmsmoe/image.hpp"

namespace bmsmoe {

struct NoiseConfig {
  enum class Distribution { gaussian };

  double sigma = 0.2;
  std::uint64_t seed = 0;
  Distribution distribution = Distribution::gaussian;
};

// Multiplicative speckle x * (1 + eps), eps ~ N(0, sigma^2), clamped to [0,1].
inline ImageBuffer add_speckle(const ImageBuffer& img, const NoiseConfig& cfg) {
  if (!(cfg.sigma >= 0.0)) throw ArgumentError("speckle sigma must be nonnegative");
  ImageBuffer out = img;
  if (cfg.sigma == 0.0) return out;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> eps(0.0, cfg.sigma);
  for (double& v : out.data()) v = std::clamp(v * (1.0 + eps(rng)), 0.0, 1.0);
  return out;
}

namespace detail {

inline void require_same_shape(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_shape(b)) {
    throw ArgumentError("image dimensions differ: " + std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                        " vs " + std::to_string(b.width()) + "x" + std::to_string(b.height()));
  }
}

}  // namespace detail

inline double mean_squared_error(const ImageBuffer& a, const ImageBuffer& b) {
  detail::require_same_shape(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

// Peak 1.0. Identical images give +infinity.
inline double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  const double err = mean_squared_error(a, b);
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / err);
}

// Mean SSIM over all fully contained 11x11 Gaussian windows (sigma 1.5).
inline double ssim_image(const ImageBuffer& a, const ImageBuffer& b) {
  detail::require_same_shape(a, b);
  constexpr int kWin = 11;
  if (a.width() < kWin || a.height() < kWin) {
    throw ArgumentError("ssim_image needs at least 11x11 pixels; use ssim_block for small patches");
  }
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;

  std::vector<double> w(kWin);
  double wsum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    wsum += w[static_cast<std::size_t>(i)];
  }
  for (double& v : w) v /= wsum;

  const int ow = a.width() - kWin + 1;
  const int oh = a.height() - kWin + 1;
  double total = 0.0;
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double ma = 0.0, mb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
      for (int j = 0; j < kWin; ++j) {
        for (int i = 0; i < kWin; ++i) {
          const double wt = w[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(j)];
          const double va = a(x + i, y + j);
          const double vb = b(x + i, y + j);
          ma += wt * va;
          mb += wt * vb;
          saa += wt * (va * va);
          sbb += wt * (vb * vb);
          sab += wt * (va * vb);
        }
      }
      const double var_a = saa - ma * ma;
      const double var_b = sbb - mb * mb;
      const double cov = sab - ma * mb;
      // Every term is symmetric in (a, b), and equals its partner exactly when
      // a == b, so ssim(a, b) == ssim(b, a) and ssim(a, a) == 1 hold bitwise.
      total += ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) /
               ((ma * ma + mb * mb + kC1) * (var_a + var_b + kC2));
    }
  }
  return total / (static_cast<double>(ow) * oh);
}

namespace detail {

// Prewitt gradient magnitude over interior pixels, kernels scaled by 1/3.
inline std::vector<double> prewitt_magnitude(const ImageBuffer& img) {
  const int w = img.width();
  const int h = img.height();
  std::vector<double> mag;
  mag.reserve(static_cast<std::size_t>(w - 2) * (h - 2));
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      double gx = 0.0, gy = 0.0;
      for (int d = -1; d <= 1; ++d) {
        gx += img(x + 1, y + d) - img(x - 1, y + d);
        gy += img(x + d, y + 1) - img(x + d, y - 1);
      }
      gx /= 3.0;
      gy /= 3.0;
      mag.push_back(std::sqrt(gx * gx + gy * gy));
    }
  }
  return mag;
}

}  // namespace detail

// Gradient magnitude similarity deviation; 0 for identical images, lower is
// better. c = 0.0026 is the unit-intensity form of the 8-bit constant 170.
inline double gmsd(const ImageBuffer& a, const ImageBuffer& b) {
  detail::require_same_shape(a, b);
  if (a.width() < 3 || a.height() < 3) throw ArgumentError("gmsd needs at least 3x3 pixels");
  constexpr double kC = 0.0026;
  const auto ma = detail::prewitt_magnitude(a);
  const auto mb = detail::prewitt_magnitude(b);
  std::vector<double> sim(ma.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < ma.size(); ++i) {
    sim[i] = (2.0 * ma[i] * mb[i] + kC) / (ma[i] * ma[i] + mb[i] * mb[i] + kC);
    mean += sim[i];
  }
  mean /= static_cast<double>(sim.size());
  double var = 0.0;
  for (double s : sim) var += (s - mean) * (s - mean);
  return std::sqrt(var / static_cast<double>(sim.size()));
}

struct QualityReport {
  double psnr = 0.0;
  double ssim = 0.0;
  double gmsd = 0.0;
};

inline QualityReport evaluate_quality(const ImageBuffer& a, const ImageBuffer& b) {
  return {psnr(a, b), ssim_image(a, b), gmsd(a, b)};
}

// Infinite PSNR is encoded as the string "inf".
inline nlohmann::ordered_json psnr_to_json(double value) {
  if (std::isinf(value) && value > 0) return "inf";
  return value;
}

inline nlohmann::ordered_json to_json(const QualityReport& r) {
  nlohmann::ordered_json j;
  j["psnr"] = psnr_to_json(r.psnr);
  j["ssim"] = r.ssim;
  j["gmsd"] = r.gmsd;
  return j;
}

}  // namespace bmsmoe
