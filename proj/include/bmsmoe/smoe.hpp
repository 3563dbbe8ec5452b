#pragma once

// Steered mixture of experts: 2D Gaussian kernels with full (steering)
// covariance, softmax-prior gating and constant experts.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "bmsmoe/errors.hpp"
#include "bmsmoe/image.hpp"

namespace bmsmoe {

// Point in normalized patch coordinates [0,1]^2.
struct Position {
  double x = 0.0;
  double y = 0.0;
};

// Symmetric 2x2 matrix stored as its three distinct entries.
struct Sym2 {
  double xx = 0.0;
  double xy = 0.0;
  double yy = 0.0;
};

// One expert. The inverse covariance is L*L^T with L = [[e^a, 0], [b, e^c]],
// which keeps it symmetric positive definite for any raw (a, b, c).
struct Kernel2D {
  double mu_x = 0.5;
  double mu_y = 0.5;
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double w = 0.0;
  double prior_logit = 0.0;

  static constexpr std::size_t kParamCount = 7;

  Sym2 precision() const noexcept {
    const double ea = std::exp(a);
    const double ec = std::exp(c);
    return {ea * ea, b * ea, b * b + ec * ec};
  }

  // (x-mu)^T Sigma^-1 (x-mu), evaluated as |L^T (x-mu)|^2.
  double mahalanobis(Position p) const noexcept {
    const double dx = p.x - mu_x;
    const double dy = p.y - mu_y;
    const double u1 = std::exp(a) * dx + b * dy;
    const double u2 = std::exp(c) * dy;
    return u1 * u1 + u2 * u2;
  }

  friend bool operator==(const Kernel2D&, const Kernel2D&) = default;
};

inline double kernel_eval(const Kernel2D& kernel, Position x) noexcept {
  return std::exp(-0.5 * kernel.mahalanobis(x));
}

struct SmoeModel {
  int k = 8;
  std::vector<Kernel2D> kernels;

  std::size_t size() const noexcept { return kernels.size(); }
  std::size_t param_count() const noexcept { return kernels.size() * Kernel2D::kParamCount; }

  // Softmax of the prior logits.
  std::vector<double> priors() const {
    std::vector<double> pi(kernels.size());
    double top = -std::numeric_limits<double>::infinity();
    for (const auto& kern : kernels) top = std::max(top, kern.prior_logit);
    double total = 0.0;
    for (std::size_t i = 0; i < kernels.size(); ++i) {
      pi[i] = std::exp(kernels[i].prior_logit - top);
      total += pi[i];
    }
    for (double& v : pi) v /= total;
    return pi;
  }

  friend bool operator==(const SmoeModel&, const SmoeModel&) = default;
};

// Flat parameter vector, per kernel: mu_x, mu_y, a, b, c, w, prior_logit.
inline std::vector<double> to_params(const SmoeModel& model) {
  std::vector<double> p;
  p.reserve(model.param_count());
  for (const auto& kern : model.kernels) {
    p.insert(p.end(), {kern.mu_x, kern.mu_y, kern.a, kern.b, kern.c, kern.w, kern.prior_logit});
  }
  return p;
}

inline void assign_params(SmoeModel& model, std::span<const double> p) {
  if (p.size() != model.param_count()) {
    throw ArgumentError("parameter vector has " + std::to_string(p.size()) + " entries, model needs " +
                        std::to_string(model.param_count()));
  }
  for (std::size_t i = 0; i < model.kernels.size(); ++i) {
    const double* q = p.data() + i * Kernel2D::kParamCount;
    model.kernels[i] = {q[0], q[1], q[2], q[3], q[4], q[5], q[6]};
  }
}

// Writes log(pi_i) + log(k_i(x)) up to a shared constant into `scores`, then
// normalizes in place to the gate values. Working in the log domain means
// the gates stay well defined even when every pi_i * k_i(x) underflows.
inline void gates_into(const SmoeModel& model, Position x, std::span<double> gates) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < model.kernels.size(); ++i) {
    const auto& kern = model.kernels[i];
    gates[i] = kern.prior_logit - 0.5 * kern.mahalanobis(x);
    top = std::max(top, gates[i]);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < model.kernels.size(); ++i) {
    gates[i] = std::exp(gates[i] - top);
    total += gates[i];
  }
  for (std::size_t i = 0; i < model.kernels.size(); ++i) gates[i] /= total;
}

inline std::vector<double> gates_eval(const SmoeModel& model, Position x) {
  if (model.kernels.empty()) throw ArgumentError("model has no kernels");
  std::vector<double> g(model.kernels.size());
  gates_into(model, x, g);
  return g;
}

// Pixel-center sample positions of a k x k patch: column i, row j map to
// ((i + 0.5) / k, (j + 0.5) / k).
class SampleGrid {
 public:
  explicit SampleGrid(int k) : k_(k) {
    if (k < 1) throw ArgumentError("grid size must be positive");
    points_.reserve(static_cast<std::size_t>(k) * k);
    for (int j = 0; j < k; ++j) {
      for (int i = 0; i < k; ++i) points_.push_back({(i + 0.5) / k, (j + 0.5) / k});
    }
  }

  int k() const noexcept { return k_; }
  std::size_t size() const noexcept { return points_.size(); }
  Position operator[](std::size_t n) const noexcept { return points_[n]; }
  std::span<const Position> points() const noexcept { return points_; }

 private:
  int k_;
  std::vector<Position> points_;
};

// Regression output sum_i w_i g_i(x) at every grid point. Not clamped.
inline Patch decode(const SmoeModel& model, const SampleGrid& grid) {
  if (model.kernels.empty()) throw ArgumentError("model has no kernels");
  Patch out(grid.k(), {0, 0});
  std::vector<double> g(model.kernels.size());
  for (std::size_t n = 0; n < grid.size(); ++n) {
    gates_into(model, grid[n], g);
    double y = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) y += model.kernels[i].w * g[i];
    out.values[n] = y;
  }
  return out;
}

// Centers on a near-square grid, isotropic bandwidth of about one grid cell,
// expert levels read from the patch at the pixel nearest each center and
// uniform priors.
inline SmoeModel init_model(const Patch& patch, int count) {
  if (count < 1) throw ArgumentError("kernel count must be >= 1, got " + std::to_string(count));
  if (patch.k < 1) throw ArgumentError("patch is empty");
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(count))));
  const int rows = (count + cols - 1) / cols;
  const double log_precision = std::log(std::sqrt(static_cast<double>(count)) * 2.0);

  SmoeModel model;
  model.k = patch.k;
  model.kernels.reserve(static_cast<std::size_t>(count));
  for (int r = 0; r < rows; ++r) {
    const int in_row = std::min(cols, count - r * cols);
    for (int c = 0; c < in_row; ++c) {
      Kernel2D kern;
      kern.mu_x = (c + 0.5) / in_row;
      kern.mu_y = (r + 0.5) / rows;
      kern.a = log_precision;
      kern.c = log_precision;
      const int px = std::clamp(static_cast<int>(std::floor(kern.mu_x * patch.k)), 0, patch.k - 1);
      const int py = std::clamp(static_cast<int>(std::floor(kern.mu_y * patch.k)), 0, patch.k - 1);
      kern.w = patch(px, py);
      model.kernels.push_back(kern);
    }
  }
  return model;
}

// Plain-text model format, one kernel per line: mu_x mu_y a b c w prior_logit.
inline void write_model(std::ostream& os, const SmoeModel& model) {
  const auto old_precision = os.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& kern : model.kernels) {
    os << kern.mu_x << ' ' << kern.mu_y << ' ' << kern.a << ' ' << kern.b << ' ' << kern.c << ' ' << kern.w
       << ' ' << kern.prior_logit << '\n';
  }
  os.precision(old_precision);
}

inline SmoeModel read_model(std::istream& is, int k) {
  SmoeModel model;
  model.k = k;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') {
      continue;
    }
    std::istringstream fields(line);
    Kernel2D kern;
    if (!(fields >> kern.mu_x >> kern.mu_y >> kern.a >> kern.b >> kern.c >> kern.w >> kern.prior_logit)) {
      throw FormatError("model line " + std::to_string(line_no) + ": expected 7 numbers");
    }
    std::string extra;
    if (fields >> extra) throw FormatError("model line " + std::to_string(line_no) + ": trailing data");
    model.kernels.push_back(kern);
  }
  if (model.kernels.empty()) throw FormatError("model contains no kernels");
  return model;
}

// ---------------------------------------------------------------------------
// One-dimensional variant: k_i = exp(-s_i (x - mu_i)^2), g_i = k_i / sum k_j.

struct Smoe1dTrace {
  std::vector<std::vector<double>> kernels;  // [kernel][sample]
  std::vector<std::vector<double>> gates;    // [kernel][sample]
  std::vector<double> y;
};

// Sample positions 0, 1e-4, ..., 1 (10001 points).
inline std::vector<double> unit_grid_1d(int steps = 10000) {
  std::vector<double> xs(static_cast<std::size_t>(steps) + 1);
  for (int i = 0; i <= steps; ++i) xs[static_cast<std::size_t>(i)] = static_cast<double>(i) / steps;
  return xs;
}

inline Smoe1dTrace evaluate_1d(std::span<const double> centers, std::span<const double> precisions,
                               std::span<const double> weights, std::span<const double> samples) {
  const std::size_t n = centers.size();
  if (n == 0) throw ArgumentError("1D model needs at least one kernel");
  if (precisions.size() != n || weights.size() != n) {
    throw ArgumentError("1D parameter lists must have equal length");
  }
  Smoe1dTrace t;
  t.kernels.assign(n, std::vector<double>(samples.size()));
  t.gates.assign(n, std::vector<double>(samples.size()));
  t.y.assign(samples.size(), 0.0);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      const double d = samples[s] - centers[i];
      const double log_k = -precisions[i] * d * d;
      t.kernels[i][s] = std::exp(log_k);
      t.gates[i][s] = log_k;
      top = std::max(top, log_k);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      t.gates[i][s] = std::exp(t.gates[i][s] - top);
      total += t.gates[i][s];
    }
    for (std::size_t i = 0; i < n; ++i) {
      t.gates[i][s] /= total;
      t.y[s] += weights[i] * t.gates[i][s];
    }
  }
  return t;
}

inline std::vector<double> decode_1d(std::span<const double> centers, std::span<const double> precisions,
                                     std::span<const double> weights, std::span<const double> samples) {
  return evaluate_1d(centers, precisions, weights, samples).y;
}

}  // namespace bmsmoe
