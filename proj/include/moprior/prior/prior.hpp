#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "moprior/core/rng.hpp"
#include "moprior/io/manifest.hpp"
#include "moprior/io/volume_io.hpp"
#include "moprior/sim/motion.hpp"

namespace moprior {

/// The two prior regimes: k same-contrast slices from other subjects, or
/// other contrasts of the same subject. `none` disables priors (baselines).
struct PriorMode {
  enum class Kind { none, similar_slices, contrasts };
  Kind kind = Kind::none;
  int k = 10;
  std::vector<Contrast> contrasts = {Contrast::T1, Contrast::PD};
  bool redraw_each_epoch = true; // similar_slices only

  int n_prior() const {
    switch (kind) {
    case Kind::none: return 0;
    case Kind::similar_slices: return k;
    case Kind::contrasts: return static_cast<int>(contrasts.size());
    }
    return 0;
  }

  void validate(Contrast target) const {
    if (kind == Kind::similar_slices && k < 1)
      throw ConfigError("PriorMode: similar_slices needs k >= 1");
    if (kind == Kind::contrasts) {
      if (contrasts.empty()) throw ConfigError("PriorMode: contrast list must be non-empty");
      for (const Contrast c : contrasts)
        if (c == target)
          throw ConfigError("PriorMode: prior contrasts must exclude the target contrast");
    }
  }

  static const char* kind_name(Kind k) {
    switch (k) {
    case Kind::none: return "none";
    case Kind::similar_slices: return "similar_slices";
    case Kind::contrasts: return "contrasts";
    }
    return "none";
  }

  nlohmann::json to_json() const {
    nlohmann::json cs = nlohmann::json::array();
    for (const Contrast c : contrasts) cs.push_back(to_string(c));
    return nlohmann::json{{"kind", kind_name(kind)},
                          {"k", k},
                          {"contrasts", cs},
                          {"redraw_each_epoch", redraw_each_epoch}};
  }

  static PriorMode from_json(const nlohmann::json& j) {
    PriorMode m;
    if (j.contains("kind")) {
      const auto s = j["kind"].get<std::string>();
      if (s == "none") m.kind = Kind::none;
      else if (s == "similar_slices") m.kind = Kind::similar_slices;
      else if (s == "contrasts") m.kind = Kind::contrasts;
      else throw ConfigError("PriorMode: unknown kind " + s);
    }
    if (j.contains("k")) m.k = j["k"].get<int>();
    if (j.contains("contrasts")) {
      m.contrasts.clear();
      for (const auto& c : j["contrasts"]) m.contrasts.push_back(contrast_from_string(c.get<std::string>()));
    }
    if (j.contains("redraw_each_epoch")) m.redraw_each_epoch = j["redraw_each_epoch"].get<bool>();
    return m;
  }
};

/// One training/evaluation example. Priors are always motion-free.
struct SliceSample {
  Image2D<float> corrupted;
  std::vector<Image2D<float>> priors;
  Image2D<float> target;
  std::string subject_id;
  int slice_index = 0;
  std::string trace_ref;

  void validate() const {
    if (!corrupted.same_shape(target)) throw ShapeError("SliceSample: corrupted/target shape mismatch");
    for (const auto& p : priors)
      if (!p.same_shape(target)) throw ShapeError("SliceSample: prior shape mismatch");
  }
};

/// Loads volumes on demand, normalizing when needed, and hands out slices.
/// Clean paths come from the manifest; corrupted volumes follow the
/// simulate-output convention <subject>-<contrast>-corrupted.nii.
class SliceStore {
public:
  SliceStore(DatasetManifest manifest, std::filesystem::path clean_root,
             std::filesystem::path corrupted_root, Contrast target, int slice_axis = 2,
             NormalizeSpec norm = {})
      : manifest_(std::move(manifest)), clean_root_(std::move(clean_root)),
        corrupted_root_(std::move(corrupted_root)), target_(target), axis_(slice_axis),
        norm_(norm) {}

  const DatasetManifest& manifest() const { return manifest_; }
  Contrast target_contrast() const { return target_; }
  int slice_axis() const { return axis_; }

  int n_slices(const std::string& subject, Contrast c) {
    return moprior::n_slices(clean_volume(subject, c), axis_);
  }

  int n_slices_corrupted(const std::string& subject) {
    return moprior::n_slices(corrupted_volume(subject), axis_);
  }

  Image2D<float> clean_slice(const std::string& subject, Contrast c, int index) {
    return extract_slice(clean_volume(subject, c), axis_, index);
  }

  /// Slice of another volume at the position fractionally matching
  /// target index `index` out of `n_target` slices.
  Image2D<float> matched_slice(const std::string& subject, Contrast c, int index, int n_target) {
    const Volume& v = clean_volume(subject, c);
    const int n_donor = moprior::n_slices(v, axis_);
    int idx = index;
    if (n_donor != n_target) {
      const double frac = static_cast<double>(index) / static_cast<double>(n_target);
      idx = static_cast<int>(std::lround(frac * n_donor));
      idx = std::clamp(idx, 0, n_donor - 1);
    }
    return extract_slice(v, axis_, idx);
  }

  Image2D<float> corrupted_slice(const std::string& subject, int index) {
    return extract_slice(corrupted_volume(subject), axis_, index);
  }

  const Volume& clean_volume(const std::string& subject, Contrast c) {
    const SubjectFiles* e = manifest_.find(subject);
    if (e == nullptr) throw ConfigError("SliceStore: unknown subject " + subject);
    const auto it = e->files.find(c);
    if (it == e->files.end())
      throw ConfigError("SliceStore: subject " + subject + " lacks contrast " + to_string(c));
    return cached(clean_root_ / it->second);
  }

  const Volume& corrupted_volume(const std::string& subject) {
    if (corrupted_root_.empty())
      throw ConfigError("SliceStore: no corrupted volume directory configured");
    const std::string name = subject + "-" + to_string(target_) + "-corrupted.nii";
    return cached(corrupted_root_ / name);
  }

private:
  const Volume& cached(const std::filesystem::path& path) {
    const std::string key = path.string();
    const auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    Volume v = read_volume(path);
    if (!v.normalized) v = normalize(v, norm_);
    return cache_.emplace(key, std::move(v)).first->second;
  }

  DatasetManifest manifest_;
  std::filesystem::path clean_root_;
  std::filesystem::path corrupted_root_;
  Contrast target_;
  int axis_;
  NormalizeSpec norm_;
  std::map<std::string, Volume> cache_;
};

/// k motion-free slices at the matching slice position, drawn without
/// replacement from k distinct donor subjects of the same split and the
/// same contrast as the target; the target subject is never a donor.
inline std::vector<Image2D<float>> sample_similar_slices(SliceStore& store,
                                                         const std::string& subject,
                                                         int slice_index, int k, Pcg32& rng,
                                                         std::vector<std::string>* donors_out = nullptr) {
  const DatasetManifest& m = store.manifest();
  const auto split = m.split_of(subject);
  const Contrast target = store.target_contrast();

  std::vector<std::string> pool;
  for (const std::string& s : m.subjects()) {
    if (s == subject) continue;
    if (split.has_value() && m.split_of(s) != split) continue;
    if (!m.has_contrast(s, target)) continue;
    pool.push_back(s);
  }
  std::sort(pool.begin(), pool.end());
  if (static_cast<int>(pool.size()) < k)
    throw ConfigError("sample_similar_slices: insufficient donor subjects (" +
                      std::to_string(pool.size()) + " < " + std::to_string(k) + ")");

  const int n_target = store.n_slices(subject, target);
  const std::vector<int> picks = rng.sample_indices(static_cast<int>(pool.size()), k);

  std::vector<Image2D<float>> out;
  out.reserve(static_cast<std::size_t>(k));
  for (const int idx : picks) {
    const std::string& donor = pool[static_cast<std::size_t>(idx)];
    out.push_back(store.matched_slice(donor, target, slice_index, n_target));
    if (donors_out != nullptr) donors_out->push_back(donor);
  }
  return out;
}

/// Same-subject slices of the listed contrasts, in the listed order.
inline std::vector<Image2D<float>> assemble_contrast_priors(SliceStore& store,
                                                            const std::string& subject,
                                                            int slice_index,
                                                            const std::vector<Contrast>& contrasts) {
  const int n_target = store.n_slices(subject, store.target_contrast());
  std::vector<Image2D<float>> out;
  out.reserve(contrasts.size());
  for (const Contrast c : contrasts)
    out.push_back(store.matched_slice(subject, c, slice_index, n_target));
  return out;
}

/// Builds one sample from a clean slice: corruption drawn from `rng`
/// (fresh trace), priors per mode, target = clean. The clean slice itself is
/// never modified.
inline SliceSample make_sample(const Image2D<float>& clean, const MotionConfig& motion_cfg,
                               const PriorMode& mode, SliceStore& store,
                               const std::string& subject, int slice_index, Pcg32& rng) {
  mode.validate(store.target_contrast());
  SliceSample s;
  s.subject_id = subject;
  s.slice_index = slice_index;
  s.target = clean;

  const MotionTrace trace = draw_motion_params(motion_cfg, clean.height, clean.width, rng);
  s.corrupted = corrupt_slice(clean, trace);

  switch (mode.kind) {
  case PriorMode::Kind::none: break;
  case PriorMode::Kind::similar_slices:
    s.priors = sample_similar_slices(store, subject, slice_index, mode.k, rng);
    break;
  case PriorMode::Kind::contrasts:
    s.priors = assemble_contrast_priors(store, subject, slice_index, mode.contrasts);
    break;
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// deterministic sample sources for training / evaluation
// ---------------------------------------------------------------------------

struct SampleRef {
  std::string subject;
  int slice_index = 0;
};

/// Abstract deterministic sample stream. `get(i, epoch)` must return the
/// same sample for the same (i, epoch) regardless of call order.
class SampleSource {
public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual int n_prior() const = 0;
  virtual SliceSample get(std::size_t i, int epoch) = 0;
};

/// Enumerates usable (subject, slice) pairs for a split: subjects must have
/// the target contrast and (for contrast priors) every prior contrast;
/// slices are restricted to the central `keep_fraction` of the stack and
/// must clear the foreground filter on the clean target slice.
inline std::vector<SampleRef> build_sample_refs(SliceStore& store, Split split,
                                                const PriorMode& mode, double keep_fraction = 0.6,
                                                double fg_threshold = 0.05,
                                                double fg_min_fraction = 0.05) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw ConfigError("build_sample_refs: keep_fraction must be in (0, 1]");
  const DatasetManifest& m = store.manifest();
  const Contrast target = store.target_contrast();

  std::vector<SampleRef> refs;
  for (const std::string& subject : m.subjects_in(split)) {
    if (!m.has_contrast(subject, target)) continue;
    if (mode.kind == PriorMode::Kind::contrasts && !m.has_all(subject, mode.contrasts))
      continue; // ineligible for contrast priors
    const int n = store.n_slices(subject, target);
    int lo = static_cast<int>(std::lround(0.5 * (1.0 - keep_fraction) * n));
    int hi = n - lo;
    lo = std::clamp(lo, 0, n - 1);
    hi = std::clamp(hi, lo + 1, n);
    for (int i = lo; i < hi; ++i) {
      const Image2D<float> clean = store.clean_slice(subject, target, i);
      if (foreground_fraction(clean, fg_threshold) < fg_min_fraction) continue;
      refs.push_back(SampleRef{subject, i});
    }
  }
  return refs;
}

/// Sample source backed by simulate-output corrupted volumes. Contrast
/// priors are fixed per subject; similar-slice donors are redrawn per epoch
/// when the mode asks for it, from per-(epoch, subject, slice) seeds.
class PrecorruptedSampleSource final : public SampleSource {
public:
  PrecorruptedSampleSource(SliceStore& store, PriorMode mode, std::vector<SampleRef> refs,
                           std::uint64_t prior_seed)
      : store_(store), mode_(std::move(mode)), refs_(std::move(refs)), prior_seed_(prior_seed) {
    mode_.validate(store_.target_contrast());
  }

  std::size_t size() const override { return refs_.size(); }
  int n_prior() const override { return mode_.n_prior(); }

  SliceSample get(std::size_t i, int epoch) override {
    const SampleRef& ref = refs_.at(i);
    SliceSample s;
    s.subject_id = ref.subject;
    s.slice_index = ref.slice_index;
    s.trace_ref = ref.subject + "#" + std::to_string(ref.slice_index);
    s.target = store_.clean_slice(ref.subject, store_.target_contrast(), ref.slice_index);
    s.corrupted = store_.corrupted_slice(ref.subject, ref.slice_index);

    switch (mode_.kind) {
    case PriorMode::Kind::none: break;
    case PriorMode::Kind::similar_slices: {
      const int e = mode_.redraw_each_epoch ? epoch : 0;
      Pcg32 rng(derive_seed(derive_seed(prior_seed_, static_cast<std::uint64_t>(e)),
                            ref.subject, static_cast<std::uint64_t>(ref.slice_index)));
      s.priors = sample_similar_slices(store_, ref.subject, ref.slice_index, mode_.k, rng);
      break;
    }
    case PriorMode::Kind::contrasts:
      s.priors = assemble_contrast_priors(store_, ref.subject, ref.slice_index, mode_.contrasts);
      break;
    }
    s.validate();
    return s;
  }

private:
  SliceStore& store_;
  PriorMode mode_;
  std::vector<SampleRef> refs_;
  std::uint64_t prior_seed_;
};

/// In-memory sample source (tests, small experiments).
class VectorSampleSource final : public SampleSource {
public:
  explicit VectorSampleSource(std::vector<SliceSample> samples, int n_prior)
      : samples_(std::move(samples)), n_prior_(n_prior) {}
  std::size_t size() const override { return samples_.size(); }
  int n_prior() const override { return n_prior_; }
  SliceSample get(std::size_t i, int) override { return samples_.at(i); }

private:
  std::vector<SliceSample> samples_;
  int n_prior_;
};

// ---------------------------------------------------------------------------
// sample-set persistence: raw float32 arrays + JSON index
// ---------------------------------------------------------------------------

namespace sample_io_detail {

inline void write_raw_image(const std::filesystem::path& path, const Image2D<float>& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoErrc::write_failed, path.string());
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size() * sizeof(float)));
  if (!out) throw IoError(IoErrc::write_failed, path.string());
}

inline Image2D<float> read_raw_image(const std::filesystem::path& path, int h, int w) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrc::unreadable, path.string());
  Image2D<float> img(h, w);
  in.read(reinterpret_cast<char*>(img.data.data()),
          static_cast<std::streamsize>(img.data.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(img.data.size() * sizeof(float)))
    throw IoError(IoErrc::unreadable, path.string() + " truncated");
  return img;
}

} // namespace sample_io_detail

inline void save_sample_set(const std::filesystem::path& dir,
                            const std::vector<SliceSample>& samples,
                            const PriorMode* mode = nullptr) {
  std::filesystem::create_directories(dir);
  nlohmann::json index;
  if (mode != nullptr) index["mode"] = mode->to_json();
  auto& arr = index["samples"] = nlohmann::json::array();
  char buf[32];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const SliceSample& s = samples[i];
    s.validate();
    std::snprintf(buf, sizeof(buf), "sample_%05zu", i);
    const std::string stem = buf;
    nlohmann::json entry;
    entry["subject"] = s.subject_id;
    entry["slice_index"] = s.slice_index;
    entry["trace_ref"] = s.trace_ref;
    entry["height"] = s.target.height;
    entry["width"] = s.target.width;
    entry["corrupted"] = stem + "_corrupted.raw";
    entry["target"] = stem + "_target.raw";
    auto& priors = entry["priors"] = nlohmann::json::array();
    sample_io_detail::write_raw_image(dir / (stem + "_corrupted.raw"), s.corrupted);
    sample_io_detail::write_raw_image(dir / (stem + "_target.raw"), s.target);
    for (std::size_t p = 0; p < s.priors.size(); ++p) {
      const std::string name = stem + "_prior" + std::to_string(p) + ".raw";
      sample_io_detail::write_raw_image(dir / name, s.priors[p]);
      priors.push_back(name);
    }
    arr.push_back(std::move(entry));
  }
  std::ofstream out(dir / "index.json", std::ios::trunc);
  if (!out) throw IoError(IoErrc::write_failed, (dir / "index.json").string());
  out << index.dump(2) << "\n";
}

inline std::vector<SliceSample> load_sample_set(const std::filesystem::path& dir,
                                                PriorMode* mode_out = nullptr) {
  std::ifstream in(dir / "index.json");
  if (!in) throw IoError(IoErrc::unreadable, (dir / "index.json").string());
  nlohmann::json index;
  try {
    in >> index;
  } catch (const std::exception& e) {
    throw IoError(IoErrc::unreadable, std::string("sample index: ") + e.what());
  }
  if (mode_out != nullptr && index.contains("mode")) *mode_out = PriorMode::from_json(index["mode"]);
  std::vector<SliceSample> out;
  for (const auto& entry : index.at("samples")) {
    SliceSample s;
    s.subject_id = entry.at("subject").get<std::string>();
    s.slice_index = entry.at("slice_index").get<int>();
    s.trace_ref = entry.value("trace_ref", std::string());
    const int h = entry.at("height").get<int>();
    const int w = entry.at("width").get<int>();
    s.corrupted = sample_io_detail::read_raw_image(dir / entry.at("corrupted").get<std::string>(), h, w);
    s.target = sample_io_detail::read_raw_image(dir / entry.at("target").get<std::string>(), h, w);
    for (const auto& p : entry.at("priors"))
      s.priors.push_back(sample_io_detail::read_raw_image(dir / p.get<std::string>(), h, w));
    s.validate();
    out.push_back(std::move(s));
  }
  return out;
}

} // namespace moprior
