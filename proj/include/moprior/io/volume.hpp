#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "moprior/core/error.hpp"
#include "moprior/core/image.hpp"

namespace moprior {

enum class Contrast { T1, T2, PD, unknown };

inline const char* to_string(Contrast c) {
  switch (c) {
  case Contrast::T1: return "T1";
  case Contrast::T2: return "T2";
  case Contrast::PD: return "PD";
  case Contrast::unknown: return "unknown";
  }
  return "unknown";
}

inline Contrast contrast_from_string(const std::string& s) {
  if (s == "T1") return Contrast::T1;
  if (s == "T2") return Contrast::T2;
  if (s == "PD") return Contrast::PD;
  if (s == "unknown" || s.empty()) return Contrast::unknown;
  throw ConfigError("unknown contrast label: " + s);
}

/// A 3D scalar image. Data is float32 in C order for shape (nx, ny, nz):
/// element (x, y, z) lives at (x*ny + y)*nz + z.
struct Volume {
  std::array<int, 3> shape{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  Contrast contrast = Contrast::unknown;
  std::string subject_id;
  bool normalized = false;
  std::vector<float> data;

  Volume() = default;
  Volume(int nx, int ny, int nz, float fill = 0.0f)
      : shape{nx, ny, nz},
        data(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz),
             fill) {}

  std::size_t numel() const { return data.size(); }

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(x) * shape[1] + static_cast<std::size_t>(y)) * shape[2] +
           static_cast<std::size_t>(z);
  }

  float& at(int x, int y, int z) { return data[index(x, y, z)]; }
  float at(int x, int y, int z) const { return data[index(x, y, z)]; }

  /// Checks the type invariants: extents match, finite values, [0,1] when
  /// flagged normalized. Throws on violation.
  void validate() const {
    const std::size_t expect = static_cast<std::size_t>(shape[0]) * shape[1] * shape[2];
    if (shape[0] <= 0 || shape[1] <= 0 || shape[2] <= 0 || data.size() != expect)
      throw ShapeError("Volume: shape does not match data extents");
    for (int a = 0; a < 3; ++a)
      if (!(spacing[static_cast<std::size_t>(a)] > 0.0))
        throw ConfigError("Volume: spacing must be positive");
    for (const float v : data) {
      if (!std::isfinite(v)) throw IoError(IoErrc::non_finite_data, "volume contains NaN/Inf");
      if (normalized && (v < 0.0f || v > 1.0f))
        throw ConfigError("Volume: flagged normalized but values leave [0,1]");
    }
  }
};

struct NormalizeSpec {
  enum class Mode { minmax, percentile };
  Mode mode = Mode::percentile;
  double p_lo = 0.0;
  double p_hi = 99.5;
};

namespace detail {

/// Linear-interpolated quantile of a sorted vector, p in [0, 100].
inline double sorted_quantile(const std::vector<float>& sorted, double p) {
  if (sorted.empty()) return 0.0;
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double f = h - static_cast<double>(lo);
  return (1.0 - f) * sorted[lo] + f * sorted[hi];
}

} // namespace detail

/// Maps intensities to [0, 1]; minmax is an affine map of the full range,
/// percentile clips at the given percentiles first. Constant input maps to
/// all-zeros. Re-normalizing is allowed (minmax on a [0,1] volume is a no-op).
inline Volume normalize(const Volume& v, NormalizeSpec spec = {}) {
  v.validate();
  Volume out = v;
  double lo = 0.0;
  double hi = 0.0;
  if (spec.mode == NormalizeSpec::Mode::minmax) {
    const auto [mn, mx] = std::minmax_element(v.data.begin(), v.data.end());
    lo = *mn;
    hi = *mx;
  } else {
    if (!(spec.p_lo >= 0.0 && spec.p_hi <= 100.0 && spec.p_lo <= spec.p_hi))
      throw ConfigError("normalize: need 0 <= p_lo <= p_hi <= 100");
    std::vector<float> sorted = v.data;
    std::sort(sorted.begin(), sorted.end());
    lo = detail::sorted_quantile(sorted, spec.p_lo);
    hi = detail::sorted_quantile(sorted, spec.p_hi);
  }
  if (hi <= lo) {
    std::fill(out.data.begin(), out.data.end(), 0.0f);
  } else {
    const double scale = 1.0 / (hi - lo);
    for (float& x : out.data) {
      const double t = (static_cast<double>(x) - lo) * scale;
      x = static_cast<float>(std::clamp(t, 0.0, 1.0));
    }
  }
  out.normalized = true;
  return out;
}

/// 2D cross-section at index `idx` along `axis`. The two remaining axes keep
/// their order: axis 0 -> (ny, nz), axis 1 -> (nx, nz), axis 2 -> (nx, ny).
inline Image2D<float> extract_slice(const Volume& v, int axis, int idx) {
  if (axis < 0 || axis > 2) throw ConfigError("extract_slice: axis must be 0, 1, or 2");
  if (idx < 0 || idx >= v.shape[static_cast<std::size_t>(axis)])
    throw ShapeError("extract_slice: index out of range");
  if (axis == 0) {
    Image2D<float> s(v.shape[1], v.shape[2]);
    for (int y = 0; y < v.shape[1]; ++y)
      for (int z = 0; z < v.shape[2]; ++z) s.at(y, z) = v.at(idx, y, z);
    return s;
  }
  if (axis == 1) {
    Image2D<float> s(v.shape[0], v.shape[2]);
    for (int x = 0; x < v.shape[0]; ++x)
      for (int z = 0; z < v.shape[2]; ++z) s.at(x, z) = v.at(x, idx, z);
    return s;
  }
  Image2D<float> s(v.shape[0], v.shape[1]);
  for (int x = 0; x < v.shape[0]; ++x)
    for (int y = 0; y < v.shape[1]; ++y) s.at(x, y) = v.at(x, y, idx);
  return s;
}

inline void insert_slice(Volume& v, int axis, int idx, const Image2D<float>& s) {
  if (axis == 0) {
    for (int y = 0; y < v.shape[1]; ++y)
      for (int z = 0; z < v.shape[2]; ++z) v.at(idx, y, z) = s.at(y, z);
  } else if (axis == 1) {
    for (int x = 0; x < v.shape[0]; ++x)
      for (int z = 0; z < v.shape[2]; ++z) v.at(x, idx, z) = s.at(x, z);
  } else {
    for (int x = 0; x < v.shape[0]; ++x)
      for (int y = 0; y < v.shape[1]; ++y) v.at(x, y, idx) = s.at(x, y);
  }
}

/// Slices for indices in the half-open range [lo, hi), order preserved.
inline std::vector<Image2D<float>> extract_slices(const Volume& v, int axis, int lo, int hi) {
  if (axis < 0 || axis > 2) throw ConfigError("extract_slices: axis must be 0, 1, or 2");
  if (lo < 0 || hi > v.shape[static_cast<std::size_t>(axis)] || lo > hi)
    throw ShapeError("extract_slices: index range out of bounds");
  std::vector<Image2D<float>> out;
  out.reserve(static_cast<std::size_t>(hi - lo));
  for (int i = lo; i < hi; ++i) out.push_back(extract_slice(v, axis, i));
  return out;
}

inline int n_slices(const Volume& v, int axis) {
  if (axis < 0 || axis > 2) throw ConfigError("n_slices: axis must be 0, 1, or 2");
  return v.shape[static_cast<std::size_t>(axis)];
}

} // namespace moprior
