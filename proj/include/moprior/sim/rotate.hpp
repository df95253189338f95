#pragma once

#include <cmath>
#include <numbers>

#include "moprior/core/image.hpp"

namespace moprior {

/// Rotates an image about its center (bilinear interpolation, zero fill
/// outside the support). An angle of exactly 0 returns the input unchanged.
/// The image center ((h-1)/2, (w-1)/2) is a fixed point of the resampling.
template <typename T>
Image2D<T> rotate_2d(const Image2D<T>& img, double angle_deg) {
  if (angle_deg == 0.0) return img;

  const int h = img.height;
  const int w = img.width;
  const double th = angle_deg * std::numbers::pi / 180.0;
  const double ct = std::cos(th);
  const double st = std::sin(th);
  const double cy = 0.5 * (h - 1);
  const double cx = 0.5 * (w - 1);

  Image2D<T> out(h, w, T(0));
  for (int r = 0; r < h; ++r) {
    const double dy = r - cy;
    for (int c = 0; c < w; ++c) {
      const double dx = c - cx;
      // Inverse mapping: sample the source at R(-angle) * (dx, dy).
      const double sx = cx + ct * dx + st * dy;
      const double sy = cy - st * dx + ct * dy;

      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0;
      const double fy = sy - y0;

      double acc = 0.0;
      const double w00 = (1.0 - fy) * (1.0 - fx);
      const double w01 = (1.0 - fy) * fx;
      const double w10 = fy * (1.0 - fx);
      const double w11 = fy * fx;
      if (y0 >= 0 && y0 < h) {
        if (x0 >= 0 && x0 < w) acc += w00 * static_cast<double>(img.at(y0, x0));
        if (x0 + 1 >= 0 && x0 + 1 < w) acc += w01 * static_cast<double>(img.at(y0, x0 + 1));
      }
      if (y0 + 1 >= 0 && y0 + 1 < h) {
        if (x0 >= 0 && x0 < w) acc += w10 * static_cast<double>(img.at(y0 + 1, x0));
        if (x0 + 1 >= 0 && x0 + 1 < w) acc += w11 * static_cast<double>(img.at(y0 + 1, x0 + 1));
      }
      out.at(r, c) = static_cast<T>(acc);
    }
  }
  return out;
}

} // namespace moprior
