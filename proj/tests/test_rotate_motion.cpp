#include <catch2/catch.hpp>

#include <set>

#include "moprior/io/phantom.hpp"
#include "moprior/metrics/ssim.hpp"
#include "moprior/sim/motion.hpp"
#include "moprior/sim/rotate.hpp"
#include "support/oracles.hpp"

using namespace moprior;

namespace {

Image2D<float> centered_disk(int n, double radius_frac) {
  Image2D<float> img(n, n, 0.0f);
  const double c = 0.5 * (n - 1);
  const double r = radius_frac * n;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      if ((y - c) * (y - c) + (x - c) * (x - c) < r * r) img.at(y, x) = 1.0f;
  return img;
}

Image2D<float> phantom_slice(std::uint64_t seed, int n = 64) {
  // a central slice; the cap slices near the z extremes are mostly empty
  PhantomSpec spec;
  spec.nx = spec.ny = n;
  spec.nz = 8;
  spec.n_shapes = 10;
  const auto vols = generate_phantom(seed, spec, "P");
  return extract_slice(vols.at(Contrast::T2), 2, 3);
}

} // namespace

TEST_CASE("rotate_2d by zero returns the identical image", "[sim]") {
  const auto img = oracles::structured_image(32, 32, 1);
  const auto out = rotate_2d(img, 0.0);
  REQUIRE(out.data == img.data);
}

TEST_CASE("the image center is a fixed point of rotation", "[sim]") {
  Image2D<float> img(33, 33, 0.0f);
  img.at(16, 16) = 1.0f;
  for (const double angle : {17.0, 90.0, -33.3, 1.75}) {
    const auto out = rotate_2d(img, angle);
    REQUIRE(out.at(16, 16) == Approx(1.0f).margin(1e-6));
  }
}

TEST_CASE("rotating a disk by +90 then -90 nearly recovers it", "[sim]") {
  const auto disk = centered_disk(64, 0.3);
  const auto back = rotate_2d(rotate_2d(disk, 90.0), -90.0);
  REQUIRE(max_abs_difference(disk, back) < 0.02);
}

TEST_CASE("rotation fills out-of-support samples with zero", "[sim]") {
  Image2D<float> img(32, 32, 1.0f);
  const auto out = rotate_2d(img, 45.0);
  REQUIRE(out.at(0, 0) == 0.0f); // corner leaves the support
  REQUIRE(out.at(16, 16) == Approx(1.0f).margin(1e-6));
}

TEST_CASE("draw_motion_params matches the configured movement model", "[sim]") {
  MotionConfig cfg;
  cfg.n_movements = 10;
  cfg.rot_lo_deg = -1.75;
  cfg.rot_hi_deg = 1.75;
  Pcg32 rng(3);
  const MotionTrace t = draw_motion_params(cfg, 64, 64, rng);

  REQUIRE(t.angles_deg.size() == 10);
  for (const double a : t.angles_deg) {
    REQUIRE(a >= -1.75);
    REQUIRE(a <= 1.75);
  }
  REQUIRE(t.cuts.size() == 10);
  for (std::size_t i = 0; i < t.cuts.size(); ++i) {
    REQUIRE(t.cuts[i] > 0);
    REQUIRE(t.cuts[i] < 64);
    if (i > 0) REQUIRE(t.cuts[i] > t.cuts[i - 1]);
  }
}

TEST_CASE("zero rotation range draws exactly zero angles", "[sim]") {
  MotionConfig cfg;
  cfg.rot_lo_deg = cfg.rot_hi_deg = 0.0;
  Pcg32 rng(4);
  const MotionTrace t = draw_motion_params(cfg, 64, 64, rng);
  for (const double a : t.angles_deg) REQUIRE(a == 0.0);
}

TEST_CASE("draw_motion_params is deterministic for a fixed rng state", "[sim]") {
  MotionConfig cfg;
  Pcg32 a(5), b(5);
  const MotionTrace ta = draw_motion_params(cfg, 64, 64, a);
  const MotionTrace tb = draw_motion_params(cfg, 64, 64, b);
  REQUIRE(ta.angles_deg == tb.angles_deg);
  REQUIRE(ta.cuts == tb.cuts);
  REQUIRE(ta.axis == tb.axis);
}

TEST_CASE("too few k-space lines is rejected", "[sim]") {
  MotionConfig cfg;
  cfg.n_movements = 10;
  cfg.axis_choice = AxisChoice::y;
  Pcg32 rng(6);
  REQUIRE_THROWS_AS(draw_motion_params(cfg, 8, 64, rng), ConfigError);
}

TEST_CASE("trace JSON round trip", "[sim]") {
  MotionConfig cfg;
  Pcg32 rng(8);
  const MotionTrace t = draw_motion_params(cfg, 48, 48, rng);
  const MotionTrace r = MotionTrace::from_json(t.to_json());
  REQUIRE(r.angles_deg == t.angles_deg);
  REQUIRE(r.cuts == t.cuts);
  REQUIRE(r.axis == t.axis);
  REQUIRE(r.seed == t.seed);
}

TEST_CASE("all-zero angles reproduce the input through the k-space path", "[sim]") {
  const auto img = phantom_slice(11);
  MotionConfig cfg;
  cfg.rot_lo_deg = cfg.rot_hi_deg = 0.0;
  Pcg32 rng(12);
  const MotionTrace t = draw_motion_params(cfg, img.height, img.width, rng);
  const auto out = corrupt_slice(img, t);
  REQUIRE(max_abs_difference(img, out) < 1e-5);
}

TEST_CASE("a single movement owning all lines equals the plain rotation", "[sim]") {
  const auto img = phantom_slice(13);
  MotionTrace t;
  t.axis = MotionAxis::Y;
  t.angles_deg = {1.2};
  t.cuts = {0}; // hand-built: movement 1 owns every line
  const auto out = corrupt_slice(img, t);
  auto expect = rotate_2d(img, 1.2);
  clamp01_inplace(expect);
  REQUIRE(max_abs_difference(expect, out) < 1e-5);
}

TEST_CASE("every composite line is bit-identical to the owner's line", "[sim]") {
  MotionConfig cfg;
  for (int rep = 0; rep < 5; ++rep) {
    const auto img = phantom_slice(100 + static_cast<std::uint64_t>(rep));
    Pcg32 rng(200 + static_cast<std::uint64_t>(rep));
    const MotionTrace t = draw_motion_params(cfg, img.height, img.width, rng);

    const auto posed = posed_images(img, t);
    std::vector<KSpace> spectra;
    for (const auto& p : posed) spectra.push_back(fft_2d(p));
    const KSpace composite = compose_kspace(spectra, t);

    const int n_lines = n_lines_for(t, img.height, img.width);
    const auto owners = line_owners(t, n_lines);
    for (int line = 0; line < n_lines; ++line) {
      const KSpace& src = spectra[static_cast<std::size_t>(owners[static_cast<std::size_t>(line)])];
      if (t.axis == MotionAxis::Y) {
        for (int c = 0; c < composite.width; ++c)
          REQUIRE(composite.at(line, c) == src.at(line, c));
      } else {
        for (int r = 0; r < composite.height; ++r)
          REQUIRE(composite.at(r, line) == src.at(r, line));
      }
    }
  }
}

TEST_CASE("the DC line is identity-owned for drawn traces", "[sim]") {
  MotionConfig cfg;
  for (int rep = 0; rep < 20; ++rep) {
    Pcg32 rng(300 + static_cast<std::uint64_t>(rep));
    const MotionTrace t = draw_motion_params(cfg, 64, 64, rng);
    const auto owners = line_owners(t, 64);
    // unshifted index 0 is DC; it sits in the center segment, which is
    // reassigned to the identity transform
    REQUIRE(owners[0] == 0);
  }
}

TEST_CASE("composite k-space energy obeys the per-segment bound", "[sim]") {
  const auto img = phantom_slice(17);
  MotionConfig cfg;
  Pcg32 rng(18);
  const MotionTrace t = draw_motion_params(cfg, img.height, img.width, rng);

  const auto posed = posed_images(img, t);
  std::vector<KSpace> spectra;
  for (const auto& p : posed) spectra.push_back(fft_2d(p));
  const KSpace composite = compose_kspace(spectra, t);

  const int n_lines = n_lines_for(t, img.height, img.width);
  const auto line_energy = [&](const KSpace& k, int line) {
    double e = 0.0;
    if (t.axis == MotionAxis::Y)
      for (int c = 0; c < k.width; ++c) e += std::norm(k.at(line, c));
    else
      for (int r = 0; r < k.height; ++r) e += std::norm(k.at(r, line));
    return e;
  };

  double composite_energy = 0.0;
  double bound = 0.0;
  for (int line = 0; line < n_lines; ++line) {
    composite_energy += line_energy(composite, line);
    double best = 0.0;
    for (const KSpace& s : spectra) best = std::max(best, line_energy(s, line));
    bound += best;
  }
  REQUIRE(composite_energy <= bound * (1.0 + 1e-12));
  REQUIRE(kspace_energy(composite) == Approx(composite_energy).epsilon(1e-9));
}

TEST_CASE("corrupt_slice output is finite, non-negative and in [0,1]", "[sim]") {
  const auto img = phantom_slice(19);
  MotionConfig cfg;
  Pcg32 rng(20);
  const MotionTrace t = draw_motion_params(cfg, img.height, img.width, rng);
  const auto out = corrupt_slice(img, t);
  REQUIRE(out.height == img.height);
  REQUIRE(out.width == img.width);
  REQUIRE(all_finite(out));
  REQUIRE(min_value(out) >= 0.0f);
  REQUIRE(max_value(out) <= 1.0f);
}

TEST_CASE("trace with out-of-range cuts is rejected", "[sim]") {
  const auto img = phantom_slice(21);
  MotionTrace t;
  t.axis = MotionAxis::Y;
  t.angles_deg = {0.5};
  t.cuts = {64};
  REQUIRE_THROWS_AS(corrupt_slice(img, t), ShapeError);
}

TEST_CASE("paper settings visibly corrupt structured slices", "[sim]") {
  MotionConfig cfg; // 10 movements, +-1.75 degrees, random X/Y
  int below = 0;
  const int n = 25;
  for (int rep = 0; rep < n; ++rep) {
    const auto img = phantom_slice(400 + static_cast<std::uint64_t>(rep));
    Pcg32 rng(500 + static_cast<std::uint64_t>(rep));
    const MotionTrace t = draw_motion_params(cfg, img.height, img.width, rng);
    const auto out = corrupt_slice(img, t);
    if (ssim_mean(out, img) < 0.98) ++below;
  }
  REQUIRE(below >= (n * 9) / 10);
}

TEST_CASE("corrupt_volume is deterministic and slice-independent", "[sim]") {
  PhantomSpec spec;
  spec.nx = spec.ny = 32;
  spec.nz = 6;
  Volume v = generate_phantom(600, spec, "P").at(Contrast::T2);

  MotionConfig cfg;
  cfg.seed = 9;
  const auto [a, ta] = corrupt_volume(v, cfg);
  const auto [b, tb] = corrupt_volume(v, cfg);
  REQUIRE(a.data == b.data);
  REQUIRE(ta.size() == 6);

  // distinct slices draw distinct traces
  std::set<std::vector<double>> angle_sets;
  for (const auto& t : ta) angle_sets.insert(t.angles_deg);
  REQUIRE(angle_sets.size() == ta.size());
}

TEST_CASE("per-slice traces stay distinct across a deep stack", "[sim]") {
  PhantomSpec spec;
  spec.nx = spec.ny = 32;
  spec.nz = 100;
  Volume v = generate_phantom(601, spec, "P").at(Contrast::T2);
  MotionConfig cfg;
  cfg.n_movements = 8;
  cfg.seed = 10;
  const auto [out, traces] = corrupt_volume(v, cfg);
  REQUIRE(traces.size() == 100);
  std::set<std::vector<double>> angle_sets;
  for (const auto& t : traces) angle_sets.insert(t.angles_deg);
  REQUIRE(angle_sets.size() >= 99);
}

TEST_CASE("corrupt_volume with zero range reproduces the volume", "[sim]") {
  PhantomSpec spec;
  spec.nx = spec.ny = 32;
  spec.nz = 4;
  Volume v = generate_phantom(601, spec, "P").at(Contrast::T2);
  MotionConfig cfg;
  cfg.rot_lo_deg = cfg.rot_hi_deg = 0.0;
  const auto [out, traces] = corrupt_volume(v, cfg);
  for (std::size_t i = 0; i < v.data.size(); ++i)
    REQUIRE(std::abs(out.data[i] - v.data[i]) < 1e-5f);
}

TEST_CASE("corrupt_volume requires a normalized volume", "[sim]") {
  Volume v(32, 32, 4, 0.5f);
  v.normalized = false;
  MotionConfig cfg;
  REQUIRE_THROWS_AS(corrupt_volume(v, cfg), ConfigError);
}
