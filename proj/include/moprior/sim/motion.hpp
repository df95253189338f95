#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "moprior/core/error.hpp"
#include "moprior/core/image.hpp"
#include "moprior/core/rng.hpp"
#include "moprior/io/volume.hpp"
#include "moprior/sim/fft.hpp"
#include "moprior/sim/rotate.hpp"

namespace moprior {

/// Phase-encode direction along which k-space lines are segmented:
/// X segments column indices, Y segments row indices.
enum class MotionAxis { X, Y };

enum class AxisChoice { random_xy, x, y };

inline const char* to_string(MotionAxis a) { return a == MotionAxis::X ? "X" : "Y"; }
inline const char* to_string(AxisChoice a) {
  switch (a) {
  case AxisChoice::random_xy: return "random_xy";
  case AxisChoice::x: return "x";
  case AxisChoice::y: return "y";
  }
  return "random_xy";
}

inline AxisChoice axis_choice_from_string(const std::string& s) {
  if (s == "random_xy") return AxisChoice::random_xy;
  if (s == "x") return AxisChoice::x;
  if (s == "y") return AxisChoice::y;
  throw ConfigError("unknown axis choice: " + s);
}

/// Bulk rotational motion settings. Translation is identically zero in this
/// simulator.
struct MotionConfig {
  int n_movements = 10;
  double rot_lo_deg = -1.75;
  double rot_hi_deg = 1.75;
  AxisChoice axis_choice = AxisChoice::random_xy;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_movements < 1) throw ConfigError("MotionConfig: n_movements must be >= 1");
    if (!(rot_lo_deg <= rot_hi_deg)) throw ConfigError("MotionConfig: rotation range lo > hi");
  }
};

/// Ground-truth corruption record for one slice. Cut indices live in
/// fftshifted line coordinates (DC at n_lines/2): segment 0 is [0, cuts[0])
/// and is owned by the identity transform, segment k >= 1 starts at
/// cuts[k-1] and is owned by movement k.
struct MotionTrace {
  std::vector<double> angles_deg;
  MotionAxis axis = MotionAxis::Y;
  std::vector<int> cuts;
  std::uint64_t seed = 0;

  int n_movements() const { return static_cast<int>(angles_deg.size()); }

  nlohmann::json to_json() const {
    return nlohmann::json{{"angles_deg", angles_deg},
                          {"axis", to_string(axis)},
                          {"cuts", cuts},
                          {"seed", seed}};
  }

  static MotionTrace from_json(const nlohmann::json& j) {
    MotionTrace t;
    t.angles_deg = j.at("angles_deg").get<std::vector<double>>();
    const auto axis = j.at("axis").get<std::string>();
    if (axis == "X") t.axis = MotionAxis::X;
    else if (axis == "Y") t.axis = MotionAxis::Y;
    else throw ConfigError("MotionTrace: bad axis " + axis);
    t.cuts = j.at("cuts").get<std::vector<int>>();
    t.seed = j.at("seed").get<std::uint64_t>();
    return t;
  }
};

inline int n_lines_for(const MotionTrace& t, int h, int w) {
  return t.axis == MotionAxis::X ? w : h;
}

/// Draws one trace: axis uniform over {X, Y} when requested, angles uniform
/// in the configured range, cuts sampled without replacement from interior
/// line indices and sorted. Draw order is fixed (axis, angles, cuts) so a
/// given rng state always yields the same trace.
inline MotionTrace draw_motion_params(const MotionConfig& cfg, int h, int w, Pcg32& rng) {
  cfg.validate();
  MotionTrace t;
  t.seed = cfg.seed;
  switch (cfg.axis_choice) {
  case AxisChoice::x: t.axis = MotionAxis::X; break;
  case AxisChoice::y: t.axis = MotionAxis::Y; break;
  case AxisChoice::random_xy: t.axis = rng.next_below(2) == 0 ? MotionAxis::X : MotionAxis::Y; break;
  }

  const int n_lines = n_lines_for(t, h, w);
  if (n_lines < cfg.n_movements + 2)
    throw ConfigError("draw_motion_params: too few k-space lines (" + std::to_string(n_lines) +
                      ") for " + std::to_string(cfg.n_movements) + " movements");

  t.angles_deg.resize(static_cast<std::size_t>(cfg.n_movements));
  for (double& a : t.angles_deg) a = rng.uniform(cfg.rot_lo_deg, cfg.rot_hi_deg);

  std::vector<int> cuts = rng.sample_indices(n_lines - 1, cfg.n_movements);
  for (int& c : cuts) c += 1; // interior indices 1 .. n_lines-1
  std::sort(cuts.begin(), cuts.end());
  t.cuts = std::move(cuts);
  return t;
}

/// Owner (0 = identity, k = movement k) of each k-space line in natural DFT
/// order. Segmentation happens in fftshifted coordinates; the segment that
/// contains the center line (shifted index n_lines/2, i.e. DC) is reassigned
/// to the identity transform so the dominant contrast stays anchored to the
/// unmoved image. The reassignment is skipped when the identity segment is
/// empty (cuts[0] == 0, only possible for hand-built traces), in which case
/// the single owning movement keeps the whole spectrum.
inline std::vector<int> line_owners(const MotionTrace& t, int n_lines) {
  if (n_lines < 2) throw ShapeError("line_owners: need at least 2 lines");
  if (t.cuts.size() != t.angles_deg.size())
    throw ConfigError("line_owners: cuts/angles count mismatch");
  for (std::size_t i = 0; i < t.cuts.size(); ++i) {
    if (t.cuts[i] < 0 || t.cuts[i] >= n_lines)
      throw ShapeError("line_owners: cut index out of range");
    if (i > 0 && t.cuts[i] <= t.cuts[i - 1])
      throw ConfigError("line_owners: cuts must be strictly increasing");
  }

  const auto segment_of = [&](int shifted) {
    return static_cast<int>(std::upper_bound(t.cuts.begin(), t.cuts.end(), shifted) -
                            t.cuts.begin());
  };

  const int center = n_lines / 2;
  const int center_segment = segment_of(center);
  const bool reassign = !t.cuts.empty() && t.cuts.front() > 0;

  std::vector<int> owners(static_cast<std::size_t>(n_lines));
  for (int j = 0; j < n_lines; ++j) {
    const int shifted = (j + n_lines / 2) % n_lines;
    int seg = segment_of(shifted);
    if (reassign && seg == center_segment) seg = 0;
    owners[static_cast<std::size_t>(j)] = seg;
  }
  return owners;
}

/// The identity image plus one rotated copy per movement, in ownership order.
template <typename T>
std::vector<Image2D<T>> posed_images(const Image2D<T>& img, const MotionTrace& t) {
  std::vector<Image2D<T>> posed;
  posed.reserve(t.angles_deg.size() + 1);
  posed.push_back(img);
  for (const double a : t.angles_deg) posed.push_back(rotate_2d(img, a));
  return posed;
}

/// Assembles the composite spectrum: every k-space line is copied verbatim
/// from the transform that owns it, so each composite line is bit-identical
/// to the owning spectrum's line.
inline KSpace compose_kspace(const std::vector<KSpace>& spectra, const MotionTrace& t) {
  if (spectra.size() != t.angles_deg.size() + 1)
    throw ShapeError("compose_kspace: expected one spectrum per movement plus identity");
  const int h = spectra.front().height;
  const int w = spectra.front().width;
  for (const KSpace& s : spectra)
    if (s.height != h || s.width != w) throw ShapeError("compose_kspace: spectra shape mismatch");

  const int n_lines = n_lines_for(t, h, w);
  const std::vector<int> owners = line_owners(t, n_lines);

  KSpace out(h, w);
  if (t.axis == MotionAxis::Y) {
    for (int r = 0; r < h; ++r) {
      const KSpace& src = spectra[static_cast<std::size_t>(owners[static_cast<std::size_t>(r)])];
      std::copy(src.row(r), src.row(r) + w, out.row(r));
    }
  } else {
    for (int c = 0; c < w; ++c) {
      const KSpace& src = spectra[static_cast<std::size_t>(owners[static_cast<std::size_t>(c)])];
      for (int r = 0; r < h; ++r) out.at(r, c) = src.at(r, c);
    }
  }
  return out;
}

/// Corrupts one normalized slice: rotate per movement, transform everything
/// to k-space, splice lines by segment ownership, inverse-transform and take
/// the magnitude (the composite spectrum is not conjugate-symmetric). The
/// result is clipped to [0, 1] so downstream sample invariants hold.
template <typename T>
Image2D<T> corrupt_slice(const Image2D<T>& img, const MotionTrace& trace) {
  const int n_lines = n_lines_for(trace, img.height, img.width);
  if (n_lines < 2) throw ShapeError("corrupt_slice: image too small");

  const std::vector<Image2D<T>> posed = posed_images(img, trace);
  const std::vector<int> owners = line_owners(trace, n_lines);

  // Only transform poses that actually own lines.
  std::vector<char> used(posed.size(), 0);
  for (const int o : owners) used[static_cast<std::size_t>(o)] = 1;
  std::vector<KSpace> spectra(posed.size());
  for (std::size_t i = 0; i < posed.size(); ++i)
    if (used[i]) spectra[i] = fft_2d(posed[i]);
    else spectra[i] = KSpace(img.height, img.width);

  const KSpace composite = compose_kspace(spectra, trace);
  const KSpace rec = ifft_2d(composite);

  Image2D<T> out(img.height, img.width);
  for (std::size_t i = 0; i < rec.data.size(); ++i) {
    const double m = std::abs(rec.data[i]);
    out.data[i] = static_cast<T>(std::clamp(m, 0.0, 1.0));
  }
  return out;
}

/// Corrupts every slice along `slice_axis` independently. The per-slice rng
/// is derived from (cfg.seed, slice index), so results do not depend on
/// processing order and individual slices can be replayed.
inline std::pair<Volume, std::vector<MotionTrace>> corrupt_volume(const Volume& v,
                                                                  const MotionConfig& cfg,
                                                                  int slice_axis = 2) {
  cfg.validate();
  v.validate();
  if (!v.normalized) throw ConfigError("corrupt_volume: volume must be normalized first");

  Volume out = v;
  std::vector<MotionTrace> traces;
  const int n = n_slices(v, slice_axis);
  traces.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Pcg32 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    const Image2D<float> clean = extract_slice(v, slice_axis, i);
    MotionTrace t = draw_motion_params(cfg, clean.height, clean.width, rng);
    insert_slice(out, slice_axis, i, corrupt_slice(clean, t));
    traces.push_back(std::move(t));
  }
  return {std::move(out), std::move(traces)};
}

/// Trace-set JSON written next to each corrupted volume, sufficient for
/// exact replay.
inline nlohmann::json traces_to_json(const std::vector<MotionTrace>& traces,
                                     const MotionConfig& cfg, int slice_axis) {
  nlohmann::json j;
  j["n_movements"] = cfg.n_movements;
  j["rot_range_deg"] = {cfg.rot_lo_deg, cfg.rot_hi_deg};
  j["axis_choice"] = to_string(cfg.axis_choice);
  j["seed"] = cfg.seed;
  j["slice_axis"] = slice_axis;
  auto& arr = j["slices"] = nlohmann::json::array();
  for (const MotionTrace& t : traces) arr.push_back(t.to_json());
  return j;
}

inline std::vector<MotionTrace> traces_from_json(const nlohmann::json& j) {
  std::vector<MotionTrace> traces;
  for (const auto& tj : j.at("slices")) traces.push_back(MotionTrace::from_json(tj));
  return traces;
}

} // namespace moprior
