#pragma once

#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "moprior/core/rng.hpp"
#include "moprior/io/volume.hpp"

namespace moprior {

struct PhantomSpec {
  int nx = 64;
  int ny = 64;
  int nz = 8;
  int n_shapes = 8;

  void validate() const {
    // the through-plane axis may be shallow for slice-wise desk datasets
    if (nx < 16 || ny < 16) throw ConfigError("PhantomSpec: in-plane size must be >= 16");
    if (nz < 1) throw ConfigError("PhantomSpec: depth must be >= 1");
    if (n_shapes < 0) throw ConfigError("PhantomSpec: n_shapes must be >= 0");
  }
};

namespace phantom_detail {

struct Ellipsoid {
  double cx, cy, cz;    // voxel coordinates
  double ax, ay, az;    // half axes
  double theta;         // in-plane rotation
  double shading;       // radial intensity falloff inside the shape
};

/// Band-limited value noise: a coarse random lattice sampled trilinearly.
/// Irregular fine structure shared by all contrasts (it belongs to the
/// geometry), which is what bulk-motion ghosting scrambles in real anatomy.
class ValueNoise {
public:
  ValueNoise(Pcg32& rng, int nx, int ny, int nz, double cell)
      : cell_(cell), gx_(static_cast<int>(nx / cell) + 2), gy_(static_cast<int>(ny / cell) + 2),
        gz_(static_cast<int>(nz / cell) + 2),
        grid_(static_cast<std::size_t>(gx_) * gy_ * gz_) {
    for (double& v : grid_) v = rng.next_double();
  }

  double at(double x, double y, double z) const {
    const double fx = x / cell_;
    const double fy = y / cell_;
    const double fz = z / cell_;
    const int x0 = std::clamp(static_cast<int>(fx), 0, gx_ - 2);
    const int y0 = std::clamp(static_cast<int>(fy), 0, gy_ - 2);
    const int z0 = std::clamp(static_cast<int>(fz), 0, gz_ - 2);
    const double tx = std::clamp(fx - x0, 0.0, 1.0);
    const double ty = std::clamp(fy - y0, 0.0, 1.0);
    const double tz = std::clamp(fz - z0, 0.0, 1.0);
    const auto g = [&](int i, int j, int k) {
      return grid_[(static_cast<std::size_t>(i) * gy_ + j) * gz_ + k];
    };
    const double c00 = g(x0, y0, z0) * (1 - tx) + g(x0 + 1, y0, z0) * tx;
    const double c01 = g(x0, y0, z0 + 1) * (1 - tx) + g(x0 + 1, y0, z0 + 1) * tx;
    const double c10 = g(x0, y0 + 1, z0) * (1 - tx) + g(x0 + 1, y0 + 1, z0) * tx;
    const double c11 = g(x0, y0 + 1, z0 + 1) * (1 - tx) + g(x0 + 1, y0 + 1, z0 + 1) * tx;
    const double c0 = c00 * (1 - ty) + c10 * ty;
    const double c1 = c01 * (1 - ty) + c11 * ty;
    return c0 * (1 - tz) + c1 * tz;
  }

private:
  double cell_;
  int gx_, gy_, gz_;
  std::vector<double> grid_;
};

inline bool inside(const Ellipsoid& e, double x, double y, double z, double& r2) {
  const double dx = x - e.cx;
  const double dy = y - e.cy;
  const double dz = z - e.cz;
  const double ct = std::cos(e.theta);
  const double st = std::sin(e.theta);
  const double rx = ct * dx + st * dy;
  const double ry = -st * dx + ct * dy;
  const double u = rx / e.ax;
  const double v = ry / e.ay;
  const double w = dz / e.az;
  r2 = u * u + v * v + w * w;
  return r2 < 1.0;
}

} // namespace phantom_detail

/// Synthetic multi-contrast phantom: one random ellipsoid geometry shared by
/// all three contrasts (so the contrasts are co-registered by construction),
/// with per-contrast intensities drawn from independent streams. Shape 0 is
/// the enclosing "head"; later shapes are smaller structures painted on top.
/// n_shapes == 0 yields background-only volumes. All outputs are normalized.
inline std::map<Contrast, Volume> generate_phantom(std::uint64_t seed, const PhantomSpec& spec,
                                                   const std::string& subject_id) {
  using phantom_detail::Ellipsoid;
  spec.validate();

  Pcg32 geom(derive_seed(seed, "phantom-geometry"));
  std::vector<Ellipsoid> shapes;
  shapes.reserve(static_cast<std::size_t>(spec.n_shapes));
  for (int s = 0; s < spec.n_shapes; ++s) {
    Ellipsoid e{};
    if (s == 0) {
      e.cx = 0.5 * (spec.nx - 1) + geom.uniform(-0.02, 0.02) * spec.nx;
      e.cy = 0.5 * (spec.ny - 1) + geom.uniform(-0.02, 0.02) * spec.ny;
      e.cz = 0.5 * (spec.nz - 1);
      e.ax = geom.uniform(0.36, 0.42) * spec.nx;
      e.ay = geom.uniform(0.30, 0.38) * spec.ny;
      e.az = geom.uniform(0.65, 0.85) * std::max(spec.nz, 2);
      e.theta = geom.uniform(0.0, std::numbers::pi);
      e.shading = geom.uniform(0.2, 0.4);
    } else {
      e.cx = 0.5 * (spec.nx - 1) + geom.uniform(-0.22, 0.22) * spec.nx;
      e.cy = 0.5 * (spec.ny - 1) + geom.uniform(-0.22, 0.22) * spec.ny;
      e.cz = 0.5 * (spec.nz - 1) + geom.uniform(-0.2, 0.2) * spec.nz;
      e.ax = geom.uniform(0.05, 0.16) * spec.nx;
      e.ay = geom.uniform(0.05, 0.16) * spec.ny;
      e.az = geom.uniform(0.3, 0.55) * std::max(spec.nz, 2);
      e.theta = geom.uniform(0.0, std::numbers::pi);
      e.shading = geom.uniform(0.0, 0.3);
    }
    shapes.push_back(e);
  }

  // fine irregular texture shared by every contrast
  const double tex_amp = spec.n_shapes > 0 ? geom.uniform(0.45, 0.6) : 0.0;
  const phantom_detail::ValueNoise noise(geom, spec.nx, spec.ny, spec.nz, 2.5);

  std::map<Contrast, Volume> out;
  for (const Contrast c : {Contrast::T1, Contrast::T2, Contrast::PD}) {
    Pcg32 intensity(derive_seed(seed, std::string("phantom-intensity-") + to_string(c)));
    std::vector<double> levels;
    levels.reserve(shapes.size());
    for (std::size_t s = 0; s < shapes.size(); ++s)
      levels.push_back(s == 0 ? intensity.uniform(0.15, 0.45) : intensity.uniform(0.25, 1.0));

    Volume v(spec.nx, spec.ny, spec.nz);
    v.contrast = c;
    v.subject_id = subject_id;
    for (int x = 0; x < spec.nx; ++x) {
      for (int y = 0; y < spec.ny; ++y) {
        for (int z = 0; z < spec.nz; ++z) {
          double val = 0.0;
          for (std::size_t s = 0; s < shapes.size(); ++s) {
            double r2 = 0.0;
            if (phantom_detail::inside(shapes[s], x, y, z, r2))
              val = levels[s] * (1.0 - shapes[s].shading * r2);
          }
          if (val > 0.0) val *= 1.0 - tex_amp + tex_amp * noise.at(x, y, z);
          v.at(x, y, z) = static_cast<float>(std::clamp(val, 0.0, 1.0));
        }
      }
    }
    v.normalized = true;
    v.validate();
    out.emplace(c, std::move(v));
  }
  return out;
}

} // namespace moprior
