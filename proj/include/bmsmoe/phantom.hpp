#pragma once

#include "bmsmoe/image.hpp"

namespace bmsmoe {

// Piecewise-constant test image with levels 0.2, 0.5 and 0.8: the triangle
// below the anti-diagonal x + y >= width is 0.8, the rest is split by a
// horizontal edge at mid-height into 0.2 (top) and 0.5 (bottom).
inline ImageBuffer synthetic_phantom(int width, int height) {
  ImageBuffer img(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (x + y >= width) {
        img(x, y) = 0.8;
      } else {
        img(x, y) = y < height / 2 ? 0.2 : 0.5;
      }
    }
  }
  return img;
}

}  // namespace bmsmoe
