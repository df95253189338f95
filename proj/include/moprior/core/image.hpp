#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "moprior/core/error.hpp"

namespace moprior {

/// Dense row-major 2D array.
template <typename T>
struct Image2D {
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Image2D() = default;
  Image2D(int h, int w, T fill = T(0))
      : height(h), width(w), data(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {
    if (h < 0 || w < 0) throw ShapeError("Image2D: negative dimensions");
  }

  std::size_t numel() const { return data.size(); }

  T& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
  const T& at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }

  T* row(int r) { return data.data() + static_cast<std::size_t>(r) * width; }
  const T* row(int r) const { return data.data() + static_cast<std::size_t>(r) * width; }

  bool same_shape(const Image2D& o) const { return height == o.height && width == o.width; }
};

template <typename To, typename From>
Image2D<To> image_cast(const Image2D<From>& in) {
  Image2D<To> out(in.height, in.width);
  for (std::size_t i = 0; i < in.data.size(); ++i)
    out.data[i] = static_cast<To>(in.data[i]);
  return out;
}

template <typename T>
bool all_finite(const Image2D<T>& img) {
  for (const T v : img.data)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

template <typename T>
T min_value(const Image2D<T>& img) {
  return *std::min_element(img.data.begin(), img.data.end());
}

template <typename T>
T max_value(const Image2D<T>& img) {
  return *std::max_element(img.data.begin(), img.data.end());
}

template <typename T>
double mean_value(const Image2D<T>& img) {
  double s = 0.0;
  for (const T v : img.data) s += static_cast<double>(v);
  return img.data.empty() ? 0.0 : s / static_cast<double>(img.data.size());
}

template <typename T>
void clamp01_inplace(Image2D<T>& img) {
  for (T& v : img.data) v = std::clamp(v, T(0), T(1));
}

/// Fraction of pixels whose value exceeds `threshold`.
template <typename T>
double foreground_fraction(const Image2D<T>& img, double threshold) {
  if (img.data.empty()) return 0.0;
  std::size_t n = 0;
  for (const T v : img.data)
    if (static_cast<double>(v) > threshold) ++n;
  return static_cast<double>(n) / static_cast<double>(img.data.size());
}

template <typename T>
double max_abs_difference(const Image2D<T>& a, const Image2D<T>& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_difference: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
  return m;
}

} // namespace moprior
