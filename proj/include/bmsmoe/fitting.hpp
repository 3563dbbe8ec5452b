#pragma once

// Per-patch SMoE parameter estimation: Adam on the composite MSE + (1 - SSIM)
// loss with global-norm gradient clipping and a reduce-on-plateau schedule.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "bmsmoe/errors.hpp"
#include "bmsmoe/image.hpp"
#include "bmsmoe/smoe.hpp"

namespace bmsmoe {

// SSIM stabilizers for unit peak intensity.
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

struct FitConfig {
  double lambda_mse = 0.5;
  double lambda_ssim = 0.5;
  int max_iters = 300;
  double lr0 = 1e-2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;
  int plateau_patience = 20;
  double plateau_factor = 0.5;
  double min_lr = 1e-5;
  // Zero disables early stopping.
  double early_stop_tol = 1e-7;

  void validate() const {
    if (!(lambda_mse >= 0.0) || !(lambda_ssim >= 0.0)) throw ArgumentError("loss weights must be nonnegative");
    if (!(lambda_mse + lambda_ssim > 0.0)) throw ArgumentError("at least one loss weight must be positive");
    if (max_iters < 0) throw ArgumentError("max_iters must be nonnegative");
    if (!(lr0 > 0.0)) throw ArgumentError("lr0 must be positive");
    if (!(min_lr > 0.0) || min_lr > lr0) throw ArgumentError("min_lr must lie in (0, lr0]");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
      throw ArgumentError("Adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw ArgumentError("adam_eps must be positive");
    if (!(clip_norm > 0.0)) throw ArgumentError("clip_norm must be positive");
    if (plateau_patience < 1) throw ArgumentError("plateau_patience must be >= 1");
    if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw ArgumentError("plateau_factor must lie in (0, 1)");
    if (!(early_stop_tol >= 0.0)) throw ArgumentError("early_stop_tol must be nonnegative");
  }
};

struct FitState {
  std::size_t iteration = 0;
  std::vector<double> m;
  std::vector<double> v;
  double lr = 0.0;
  double best_loss = std::numeric_limits<double>::infinity();
  // Reset whenever the scheduler reduces lr.
  int stall = 0;
  // Only reset by a real improvement; drives early stopping.
  int since_improvement = 0;

  FitState() = default;
  FitState(std::size_t n_params, const FitConfig& cfg) : m(n_params, 0.0), v(n_params, 0.0), lr(cfg.lr0) {}
};

struct TraceRow {
  std::size_t iter = 0;
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
};

struct FitResult {
  SmoeModel model;
  double loss = 0.0;
  double initial_loss = 0.0;
  std::size_t iterations = 0;
};

namespace detail {

inline void require_same_size(const Patch& a, const Patch& b) {
  if (a.k != b.k || a.size() != b.size()) {
    throw ArgumentError("patch sizes differ: " + std::to_string(a.k) + " vs " + std::to_string(b.k));
  }
}

struct SsimTerms {
  double mu_a, mu_b, var_a, var_b, cov;
  double a1, a2, b1, b2;
  double value() const { return (a1 * a2) / (b1 * b2); }
};

inline SsimTerms ssim_terms(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  double mu_a = 0.0, mu_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mu_a += a[i];
    mu_b += b[i];
  }
  mu_a /= n;
  mu_b /= n;
  double var_a = 0.0, var_b = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - mu_a;
    const double db = b[i] - mu_b;
    var_a += da * da;
    var_b += db * db;
    cov += da * db;
  }
  var_a /= n;
  var_b /= n;
  cov /= n;
  return {mu_a,
          mu_b,
          var_a,
          var_b,
          cov,
          2.0 * mu_a * mu_b + kSsimC1,
          2.0 * cov + kSsimC2,
          mu_a * mu_a + mu_b * mu_b + kSsimC1,
          var_a + var_b + kSsimC2};
}

}  // namespace detail

// Whole-patch single-window SSIM with population moments.
inline double ssim_block(const Patch& a, const Patch& b) {
  detail::require_same_size(a, b);
  return detail::ssim_terms(a.values, b.values).value();
}

inline double mse(const Patch& a, const Patch& b) {
  detail::require_same_size(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

inline double composite_loss(const Patch& pred, const Patch& target, const FitConfig& cfg) {
  return cfg.lambda_mse * mse(pred, target) + cfg.lambda_ssim * (1.0 - ssim_block(pred, target));
}

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> grad;
};

// Loss and its exact gradient with respect to the flat parameter vector
// (layout of to_params).
inline LossAndGradient loss_and_gradient(const SmoeModel& model, const Patch& target, const SampleGrid& grid,
                                         const FitConfig& cfg) {
  if (target.k != grid.k()) throw ArgumentError("target patch and sample grid sizes differ");
  if (model.kernels.empty()) throw ArgumentError("model has no kernels");
  const std::size_t n_px = grid.size();
  const std::size_t n_k = model.kernels.size();
  const double n = static_cast<double>(n_px);

  // Forward pass, keeping the gates and the per-kernel whitened offsets.
  std::vector<double> gates(n_px * n_k);
  std::vector<double> u1(n_px * n_k), u2(n_px * n_k);
  std::vector<double> ea(n_k), ec(n_k);
  for (std::size_t i = 0; i < n_k; ++i) {
    ea[i] = std::exp(model.kernels[i].a);
    ec[i] = std::exp(model.kernels[i].c);
  }
  std::vector<double> pred(n_px);
  for (std::size_t p = 0; p < n_px; ++p) {
    const Position x = grid[p];
    double* g = gates.data() + p * n_k;
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n_k; ++i) {
      const auto& kern = model.kernels[i];
      const double dx = x.x - kern.mu_x;
      const double dy = x.y - kern.mu_y;
      const double v1 = ea[i] * dx + kern.b * dy;
      const double v2 = ec[i] * dy;
      u1[p * n_k + i] = v1;
      u2[p * n_k + i] = v2;
      g[i] = kern.prior_logit - 0.5 * (v1 * v1 + v2 * v2);
      top = std::max(top, g[i]);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n_k; ++i) {
      g[i] = std::exp(g[i] - top);
      total += g[i];
    }
    double y = 0.0;
    for (std::size_t i = 0; i < n_k; ++i) {
      g[i] /= total;
      y += model.kernels[i].w * g[i];
    }
    pred[p] = y;
  }

  // dL/dy per pixel.
  const auto st = detail::ssim_terms(pred, target.values);
  const double ssim = st.value();
  double sq = 0.0;
  for (std::size_t p = 0; p < n_px; ++p) sq += (pred[p] - target.values[p]) * (pred[p] - target.values[p]);
  LossAndGradient out;
  out.loss = cfg.lambda_mse * sq / n + cfg.lambda_ssim * (1.0 - ssim);

  std::vector<double> dy(n_px);
  const double den = st.b1 * st.b2;
  for (std::size_t p = 0; p < n_px; ++p) {
    const double da1 = 2.0 * st.mu_b / n;
    const double da2 = 2.0 * (target.values[p] - st.mu_b) / n;
    const double db1 = 2.0 * st.mu_a / n;
    const double db2 = 2.0 * (pred[p] - st.mu_a) / n;
    const double dssim = ((da1 * st.a2 + st.a1 * da2) * den - st.a1 * st.a2 * (db1 * st.b2 + st.b1 * db2)) / (den * den);
    dy[p] = cfg.lambda_mse * 2.0 * (pred[p] - target.values[p]) / n - cfg.lambda_ssim * dssim;
  }

  // Backward through gating, Mahalanobis form and Cholesky parameters.
  out.grad.assign(n_k * Kernel2D::kParamCount, 0.0);
  for (std::size_t p = 0; p < n_px; ++p) {
    const Position x = grid[p];
    const double* g = gates.data() + p * n_k;
    for (std::size_t i = 0; i < n_k; ++i) {
      const auto& kern = model.kernels[i];
      double* gi = out.grad.data() + i * Kernel2D::kParamCount;
      const double ds = dy[p] * g[i] * (kern.w - pred[p]);
      const double dq = -0.5 * ds;
      const double v1 = u1[p * n_k + i];
      const double v2 = u2[p * n_k + i];
      const double ddx = x.x - kern.mu_x;
      const double ddy = x.y - kern.mu_y;
      gi[0] += dq * (-2.0 * v1 * ea[i]);
      gi[1] += dq * (-2.0 * v1 * kern.b - 2.0 * v2 * ec[i]);
      gi[2] += dq * (2.0 * v1 * ea[i] * ddx);
      gi[3] += dq * (2.0 * v1 * ddy);
      gi[4] += dq * (2.0 * v2 * ec[i] * ddy);
      gi[5] += dy[p] * g[i];
      gi[6] += ds;
    }
  }
  return out;
}

inline std::vector<double> loss_gradient(const SmoeModel& model, const Patch& target, const SampleGrid& grid,
                                         const FitConfig& cfg) {
  auto result = loss_and_gradient(model, target, grid, cfg);
  for (double v : result.grad) {
    if (!std::isfinite(v)) throw NumericalError("non-finite gradient component; the fit diverged");
  }
  return std::move(result.grad);
}

inline double l2_norm(std::span<const double> g) {
  double sum = 0.0;
  for (double v : g) sum += v * v;
  return std::sqrt(sum);
}

inline std::vector<double> clip_gradients(std::span<const double> g, double clip_norm) {
  if (!(clip_norm > 0.0)) throw ArgumentError("clip_norm must be positive");
  std::vector<double> out(g.begin(), g.end());
  const double norm = l2_norm(g);
  if (norm > clip_norm) {
    const double scale = clip_norm / norm;
    for (double& v : out) v *= scale;
  }
  return out;
}

// Reduce-on-plateau: returns the learning rate to use from now on.
inline double scheduler_step(FitState& state, double loss, const FitConfig& cfg) {
  if (loss < state.best_loss - cfg.early_stop_tol) {
    state.best_loss = loss;
    state.stall = 0;
    state.since_improvement = 0;
  } else {
    ++state.stall;
    ++state.since_improvement;
    if (state.stall >= cfg.plateau_patience) {
      state.lr = std::max(state.lr * cfg.plateau_factor, cfg.min_lr);
      state.stall = 0;
    }
  }
  return state.lr;
}

inline void adam_update(std::span<double> params, std::span<const double> grad, FitState& state,
                        const FitConfig& cfg) {
  ++state.iteration;
  const double t = static_cast<double>(state.iteration);
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.adam_beta1 * state.m[i] + (1.0 - cfg.adam_beta1) * grad[i];
    state.v[i] = cfg.adam_beta2 * state.v[i] + (1.0 - cfg.adam_beta2) * grad[i] * grad[i];
    params[i] -= state.lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + cfg.adam_eps);
  }
}

// Fits `count` kernels to one patch and returns the lowest-loss model seen.
// The optimizer itself is deterministic; `seed` is part of the signature so
// callers can derive per-patch streams, but initialization uses none.
inline FitResult fit_patch(const Patch& patch, int count, const FitConfig& cfg, std::uint64_t seed = 0,
                           std::vector<TraceRow>* trace = nullptr) {
  (void)seed;
  cfg.validate();
  const SampleGrid grid(patch.k);
  Patch target = patch;
  target.origin = {0, 0};

  FitResult result;
  result.model = init_model(target, count);
  result.initial_loss = composite_loss(decode(result.model, grid), target, cfg);
  result.loss = result.initial_loss;
  if (!std::isfinite(result.loss)) throw FittingError("non-finite initial loss", 0);
  if (cfg.max_iters == 0) return result;

  SmoeModel current = result.model;
  std::vector<double> params = to_params(current);
  FitState state(params.size(), cfg);
  result.loss = std::numeric_limits<double>::infinity();

  std::size_t iter = 0;
  for (; iter < static_cast<std::size_t>(cfg.max_iters); ++iter) {
    auto lg = loss_and_gradient(current, target, grid, cfg);
    if (!std::isfinite(lg.loss)) throw FittingError("non-finite loss", iter);
    for (double v : lg.grad) {
      if (!std::isfinite(v)) throw FittingError("non-finite gradient", iter);
    }
    if (lg.loss < result.loss) {
      result.loss = lg.loss;
      result.model = current;
    }
    const double gnorm = l2_norm(lg.grad);
    if (trace) trace->push_back({iter, lg.loss, state.lr, gnorm});

    const auto clipped = clip_gradients(lg.grad, cfg.clip_norm);
    adam_update(params, clipped, state, cfg);
    assign_params(current, params);
    scheduler_step(state, lg.loss, cfg);
    if (cfg.early_stop_tol > 0.0 && state.since_improvement >= 2 * cfg.plateau_patience) {
      ++iter;
      break;
    }
  }

  // The last update has not been scored yet.
  const double last = composite_loss(decode(current, grid), target, cfg);
  if (!std::isfinite(last)) throw FittingError("non-finite loss", iter);
  if (last < result.loss) {
    result.loss = last;
    result.model = current;
  }
  result.iterations = iter;
  return result;
}

}  // namespace bmsmoe
