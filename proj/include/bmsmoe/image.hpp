#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bmsmoe/errors.hpp"

namespace bmsmoe {

// Integer pixel coordinate, x = column, y = row.
struct Pixel {
  int x = 0;
  int y = 0;

  friend bool operator==(const Pixel&, const Pixel&) = default;
};

inline std::string to_string(Pixel p) {
  return "(" + std::to_string(p.x) + "," + std::to_string(p.y) + ")";
}

// Row-major grayscale image with intensities in [0,1].
class ImageBuffer {
 public:
  ImageBuffer() = default;

  ImageBuffer(int width, int height, double fill = 0.0)
      : width_(width), height_(height) {
    if (width < 1 || height < 1) {
      throw ArgumentError("image dimensions must be positive, got " +
                          std::to_string(width) + "x" + std::to_string(height));
    }
    data_.assign(static_cast<std::size_t>(width) * height, fill);
  }

  ImageBuffer(int width, int height, std::vector<double> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (width < 1 || height < 1) {
      throw ArgumentError("image dimensions must be positive, got " +
                          std::to_string(width) + "x" + std::to_string(height));
    }
    if (data_.size() != static_cast<std::size_t>(width) * height) {
      throw ArgumentError("image data length " + std::to_string(data_.size()) +
                          " does not match " + std::to_string(width) + "x" +
                          std::to_string(height));
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double operator()(int x, int y) const noexcept {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  double& operator()(int x, int y) noexcept {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  bool same_shape(const ImageBuffer& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

// Square k x k block of intensities with its top-left origin in the source
// image. Values are not clamped: decoded model outputs may leave [0,1].
struct Patch {
  int k = 0;
  Pixel origin;
  std::vector<double> values;

  Patch() = default;
  Patch(int size, Pixel at, double fill = 0.0)
      : k(size), origin(at), values(static_cast<std::size_t>(size) * size, fill) {}

  double operator()(int x, int y) const noexcept { return values[static_cast<std::size_t>(y) * k + x]; }
  double& operator()(int x, int y) noexcept { return values[static_cast<std::size_t>(y) * k + x]; }

  std::size_t size() const noexcept { return values.size(); }
};

inline bool patch_fits(int width, int height, Pixel origin, int k) noexcept {
  return k >= 1 && origin.x >= 0 && origin.y >= 0 && origin.x + k <= width &&
         origin.y + k <= height;
}

inline Patch extract_patch(const ImageBuffer& img, Pixel origin, int k) {
  if (k < 1) throw ArgumentError("patch size must be positive, got " + std::to_string(k));
  if (origin.x < 0 || origin.x + k > img.width()) {
    throw BoundsError("patch x origin " + std::to_string(origin.x) + " with size " +
                      std::to_string(k) + " exceeds image width " + std::to_string(img.width()));
  }
  if (origin.y < 0 || origin.y + k > img.height()) {
    throw BoundsError("patch y origin " + std::to_string(origin.y) + " with size " +
                      std::to_string(k) + " exceeds image height " + std::to_string(img.height()));
  }
  Patch patch(k, origin);
  for (int y = 0; y < k; ++y) {
    for (int x = 0; x < k; ++x) patch(x, y) = img(origin.x + x, origin.y + y);
  }
  return patch;
}

// Weighted-mean aggregation of overlapping patch estimates.
class Accumulator {
 public:
  Accumulator(int width, int height)
      : width_(width),
        height_(height),
        numerator_(static_cast<std::size_t>(width) * height, 0.0),
        denominator_(static_cast<std::size_t>(width) * height, 0.0) {
    if (width < 1 || height < 1) throw ArgumentError("accumulator dimensions must be positive");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  void add(const Patch& patch, double weight) { add(patch, patch.origin, weight); }

  // Adds the patch values at an explicit position (the patch's own origin is ignored).
  void add(const Patch& patch, Pixel at, double weight) {
    if (!(weight >= 0.0)) throw ArgumentError("accumulation weight must be nonnegative");
    if (!patch_fits(width_, height_, at, patch.k)) {
      throw BoundsError("patch at " + to_string(at) + " with size " + std::to_string(patch.k) +
                        " is outside the accumulator");
    }
    for (int y = 0; y < patch.k; ++y) {
      const std::size_t row = static_cast<std::size_t>(at.y + y) * width_ + at.x;
      for (int x = 0; x < patch.k; ++x) {
        numerator_[row + x] += weight * patch(x, y);
        denominator_[row + x] += weight;
      }
    }
  }

  bool covered(int x, int y) const noexcept {
    return denominator_[static_cast<std::size_t>(y) * width_ + x] > 0.0;
  }

  std::span<const double> numerator() const noexcept { return numerator_; }
  std::span<const double> denominator() const noexcept { return denominator_; }

 private:
  int width_;
  int height_;
  std::vector<double> numerator_;
  std::vector<double> denominator_;
};

inline void accumulate(Accumulator& acc, const Patch& patch, double weight) { acc.add(patch, weight); }

// Covered pixels become numerator/denominator clamped to [0,1]; uncovered
// pixels are copied from the fallback.
inline ImageBuffer finalize(const Accumulator& acc, const ImageBuffer& fallback) {
  if (acc.width() != fallback.width() || acc.height() != fallback.height()) {
    throw ArgumentError("fallback image dimensions do not match the accumulator");
  }
  ImageBuffer out = fallback;
  auto num = acc.numerator();
  auto den = acc.denominator();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (den[i] > 0.0) dst[i] = std::clamp(num[i] / den[i], 0.0, 1.0);
  }
  return out;
}

}  // namespace bmsmoe
