#pragma once

// Test-only helpers and independent oracles. Nothing here calls the code
// path it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <bmsmoe/block_matching.hpp>
#include <bmsmoe/fitting.hpp>
#include <bmsmoe/image.hpp>
#include <bmsmoe/smoe.hpp>

namespace bmsmoe::testing {

inline ImageBuffer random_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageBuffer img(w, h);
  for (double& v : img.data()) v = u(rng);
  return img;
}

// 8-bit valued random image, so many exact ties occur in matching.
inline ImageBuffer random_quantized_image(int w, int h, std::uint64_t seed, int levels) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> u(0, levels - 1);
  ImageBuffer img(w, h);
  for (double& v : img.data()) v = u(rng) / static_cast<double>(levels - 1);
  return img;
}

inline Patch random_patch(int k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Patch p(k, {0, 0});
  for (double& v : p.values) v = u(rng);
  return p;
}

inline SmoeModel random_model(int count, int k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(0.0, 1.0);
  std::uniform_real_distribution<double> logp(0.5, 2.5);
  std::uniform_real_distribution<double> shear(-3.0, 3.0);
  std::uniform_real_distribution<double> level(0.0, 1.0);
  std::uniform_real_distribution<double> logit(-1.0, 1.0);
  SmoeModel m;
  m.k = k;
  for (int i = 0; i < count; ++i) {
    m.kernels.push_back({pos(rng), pos(rng), logp(rng), shear(rng), logp(rng), level(rng), logit(rng)});
  }
  return m;
}

// Exhaustive matcher: scores every origin in the clipped window with a
// direct sum, then orders (reference first, distance, y, x).
inline PatchStack brute_force_match(const ImageBuffer& img, Pixel ref, const BlockMatchConfig& cfg) {
  const int k = cfg.k;
  const double level = cfg.lambda_2d * cfg.sigma;
  auto gamma = [level](double v) { return std::abs(v) < level ? 0.0 : v; };
  std::vector<std::tuple<int, double, int, int>> all;  // (is_not_ref, d, y, x)
  for (int y = 0; y + k <= img.height(); ++y) {
    for (int x = 0; x + k <= img.width(); ++x) {
      if (std::abs(x - ref.x) > cfg.search_radius || std::abs(y - ref.y) > cfg.search_radius) continue;
      double sum = 0.0;
      for (int j = 0; j < k; ++j) {
        for (int i = 0; i < k; ++i) {
          const double d = gamma(img(ref.x + i, ref.y + j)) - gamma(img(x + i, y + j));
          sum += d * d;
        }
      }
      const double dist = sum / (k * k);
      const bool is_ref = x == ref.x && y == ref.y;
      if (is_ref || dist <= cfg.tau_hard) all.emplace_back(is_ref ? 0 : 1, is_ref ? 0.0 : dist, y, x);
    }
  }
  std::sort(all.begin(), all.end());
  PatchStack out{ref, k, {}};
  for (std::size_t n = 0; n < all.size() && n < static_cast<std::size_t>(cfg.n_hard); ++n) {
    out.members.push_back({{std::get<3>(all[n]), std::get<2>(all[n])}, std::get<1>(all[n])});
  }
  return out;
}

// Loss evaluated straight from the definitions, independent of the
// gradient code's forward pass.
inline double direct_loss(const SmoeModel& model, const Patch& target, const FitConfig& cfg) {
  const int k = target.k;
  const std::size_t n = target.size();
  std::vector<double> pred(n);
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < k; ++i) {
      const double x = (i + 0.5) / k;
      const double y = (j + 0.5) / k;
      double num = 0.0, den = 0.0;
      double logit_max = -1e300;
      for (const auto& kern : model.kernels) logit_max = std::max(logit_max, kern.prior_logit);
      double prior_sum = 0.0;
      for (const auto& kern : model.kernels) prior_sum += std::exp(kern.prior_logit - logit_max);
      for (const auto& kern : model.kernels) {
        // Sigma^-1 = L L^T built explicitly.
        const double l11 = std::exp(kern.a), l21 = kern.b, l22 = std::exp(kern.c);
        const double p11 = l11 * l11, p12 = l11 * l21, p22 = l21 * l21 + l22 * l22;
        const double dx = x - kern.mu_x, dy = y - kern.mu_y;
        const double q = p11 * dx * dx + 2.0 * p12 * dx * dy + p22 * dy * dy;
        const double pik = std::exp(kern.prior_logit - logit_max) / prior_sum * std::exp(-0.5 * q);
        num += kern.w * pik;
        den += pik;
      }
      pred[static_cast<std::size_t>(j * k + i)] = num / den;
    }
  }
  double mu_p = 0, mu_t = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mu_p += pred[i];
    mu_t += target.values[i];
  }
  mu_p /= n;
  mu_t /= n;
  double vp = 0, vt = 0, cv = 0, se = 0;
  for (std::size_t i = 0; i < n; ++i) {
    vp += (pred[i] - mu_p) * (pred[i] - mu_p);
    vt += (target.values[i] - mu_t) * (target.values[i] - mu_t);
    cv += (pred[i] - mu_p) * (target.values[i] - mu_t);
    se += (pred[i] - target.values[i]) * (pred[i] - target.values[i]);
  }
  vp /= n;
  vt /= n;
  cv /= n;
  const double c1 = 1e-4, c2 = 9e-4;
  const double ssim = (2 * mu_p * mu_t + c1) * (2 * cv + c2) / ((mu_p * mu_p + mu_t * mu_t + c1) * (vp + vt + c2));
  return cfg.lambda_mse * se / n + cfg.lambda_ssim * (1.0 - ssim);
}

inline std::vector<double> finite_difference_gradient(const SmoeModel& model, const Patch& target,
                                                      const FitConfig& cfg, double h = 1e-5) {
  std::vector<double> params = to_params(model);
  std::vector<double> grad(params.size());
  SmoeModel probe = model;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    assign_params(probe, params);
    const double up = direct_loss(probe, target, cfg);
    params[i] = saved - h;
    assign_params(probe, params);
    const double down = direct_loss(probe, target, cfg);
    params[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

// |a - b| <= max(rel * max(|a|, |b|), abs_floor)
inline bool close_rel(double a, double b, double rel, double abs_floor) {
  return std::abs(a - b) <= std::max(rel * std::max(std::abs(a), std::abs(b)), abs_floor);
}

// Per-test scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("bmsmoe_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace bmsmoe::testing
