#pragma once

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "moprior/cli/config.hpp"
#include "moprior/cli/pngplot.hpp"
#include "moprior/io/manifest.hpp"
#include "moprior/io/phantom.hpp"
#include "moprior/io/volume_io.hpp"
#include "moprior/metrics/report.hpp"
#include "moprior/nn/model.hpp"
#include "moprior/prior/prior.hpp"
#include "moprior/sim/motion.hpp"
#include "moprior/train/trainer.hpp"

namespace moprior {

namespace cmd_detail {

inline void warn(std::vector<std::string>* sink, const std::string& msg) {
  if (sink != nullptr) sink->push_back(msg);
  else std::fprintf(stderr, "warning: %s\n", msg.c_str());
}

inline std::string subject_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "PH%03d", i);
  return buf;
}

inline std::string sanitize_label(const std::string& s) {
  std::string out;
  for (const char c : s)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '-');
  return out;
}

inline DatasetManifest load_manifest_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw ConfigError("dataset directory not found: " + dir.string());
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path))
    throw ConfigError("manifest.json not found in " + dir.string());
  return DatasetManifest::load(manifest_path);
}

inline std::unique_ptr<SliceStore> make_store(const RunConfig& cfg) {
  if (cfg.dataset.clean_dir.empty()) throw ConfigError("dataset.clean_dir is not set");
  DatasetManifest manifest = load_manifest_dir(cfg.dataset.clean_dir);
  return std::make_unique<SliceStore>(std::move(manifest), cfg.dataset.clean_dir,
                                      cfg.dataset.corrupted_dir, cfg.dataset.target_contrast,
                                      cfg.dataset.slice_axis, cfg.dataset.normalize);
}

/// Consistency checks shared by train and eval: the prior section must be
/// able to feed the requested injection mode.
inline void check_model_prior(const RunConfig& cfg) {
  if (cfg.model.injection != nn::Injection::baseline) {
    if (cfg.prior.kind == PriorMode::Kind::none)
      throw ConfigError("model.injection=" + std::string(to_string(cfg.model.injection)) +
                        " requires a prior mode (prior.kind != none)");
    cfg.prior.validate(cfg.dataset.target_contrast);
  }
  cfg.model_config().validate();
}

/// Batched model predictor over SliceSamples, output clamped to [0, 1].
inline Predictor model_predictor(std::shared_ptr<nn::Model<float>> model) {
  return [model](const SliceSample& s) {
    const std::vector<SliceSample> batch{s};
    return train_detail::predict_batch(*model, batch).front();
  };
}

} // namespace cmd_detail

/// `phantom`: writes a synthetic multi-contrast dataset (NIfTI volumes plus
/// manifest with splits) usable by every other subcommand.
inline void cmd_phantom(const RunConfig& cfg, std::vector<std::string>* warnings = nullptr) {
  (void)warnings;
  cfg.phantom.spec.validate();
  if (cfg.phantom.n_subjects < 1) throw ConfigError("phantom.n_subjects must be >= 1");
  const int total_split = cfg.dataset.n_train + cfg.dataset.n_val + cfg.dataset.n_test;
  if (total_split > cfg.phantom.n_subjects)
    throw ConfigError("dataset.splits exceed phantom.n_subjects");
  if (cfg.out_dir.empty()) throw ConfigError("out_dir is not set");

  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);

  DatasetManifest manifest;
  for (int i = 1; i <= cfg.phantom.n_subjects; ++i) {
    const std::string subject = cmd_detail::subject_name(i);
    const auto vols = generate_phantom(derive_seed(cfg.seed, "phantom", static_cast<std::uint64_t>(i)),
                                       cfg.phantom.spec, subject);
    SubjectFiles entry;
    entry.subject_id = subject;
    for (const auto& [contrast, volume] : vols) {
      const std::string name = subject + "-" + to_string(contrast) + ".nii";
      write_volume(volume, out / name);
      entry.files[contrast] = name;
    }
    manifest.entries.push_back(std::move(entry));
  }
  manifest.sort_entries();
  manifest = split_subjects(manifest, cfg.dataset.n_train, cfg.dataset.n_val, cfg.dataset.n_test,
                            cfg.seed);
  manifest.save(out / "manifest.json");
  cfg.save(out / "resolved_config.json");
}

/// `simulate`: corrupts the target contrast of every subject in the input
/// dataset, writing corrupted volumes plus per-slice motion traces.
inline void cmd_simulate(const RunConfig& cfg, std::vector<std::string>* warnings = nullptr) {
  cfg.motion.validate();
  if (cfg.out_dir.empty()) throw ConfigError("out_dir is not set");
  DatasetManifest manifest = cmd_detail::load_manifest_dir(cfg.dataset.clean_dir);
  const Contrast target = cfg.dataset.target_contrast;

  std::vector<std::string> subjects;
  for (const std::string& s : manifest.subjects())
    if (manifest.has_contrast(s, target)) subjects.push_back(s);
  if (subjects.empty())
    throw ConfigError("no subject in " + cfg.dataset.clean_dir + " has contrast " +
                      to_string(target));

  const bool zero_range = cfg.motion.rot_lo_deg == 0.0 && cfg.motion.rot_hi_deg == 0.0;

  const std::filesystem::path in(cfg.dataset.clean_dir);
  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);
  manifest.save(out / "manifest.json");
  cfg.save(out / "resolved_config.json");

  bool spot_checked = false;
  for (const std::string& subject : subjects) {
    Volume v = read_volume(in / manifest.find(subject)->files.at(target));
    if (!v.normalized) v = normalize(v, cfg.dataset.normalize);

    MotionConfig mc = cfg.motion;
    mc.seed = derive_seed(derive_seed(cfg.seed, "motion"), subject);
    auto [corrupted, traces] = corrupt_volume(v, mc, cfg.dataset.slice_axis);
    corrupted.subject_id = subject;
    corrupted.contrast = target;

    const std::string stem = subject + "-" + std::string(to_string(target));
    write_volume(corrupted, out / (stem + "-corrupted.nii"));
    std::ofstream tj(out / (stem + "-traces.json"), std::ios::trunc);
    tj << traces_to_json(traces, mc, cfg.dataset.slice_axis).dump(2) << "\n";

    if (zero_range && !spot_checked) {
      spot_checked = true;
      const int mid = n_slices(v, cfg.dataset.slice_axis) / 2;
      const double s = ssim_mean(extract_slice(corrupted, cfg.dataset.slice_axis, mid),
                                 extract_slice(v, cfg.dataset.slice_axis, mid), cfg.ssim);
      cmd_detail::warn(warnings, "rot_range is (0, 0): corrupted output is near-identical to the "
                                 "clean input (spot-check SSIM " +
                                     std::to_string(s) + ")");
    }
  }
}

/// `train`: optimizes the configured model on precorrupted samples and
/// writes history.csv, best.ckpt and final.ckpt into out_dir.
inline void cmd_train(const RunConfig& cfg, std::vector<std::string>* warnings = nullptr) {
  (void)warnings;
  cmd_detail::check_model_prior(cfg);
  const TrainConfig tc = cfg.train_config();
  tc.validate();
  if (cfg.dataset.corrupted_dir.empty()) throw ConfigError("dataset.corrupted_dir is not set");
  if (!std::filesystem::is_directory(cfg.dataset.corrupted_dir))
    throw ConfigError("corrupted dataset directory not found: " + cfg.dataset.corrupted_dir);
  if (cfg.out_dir.empty()) throw ConfigError("out_dir is not set");

  auto store = cmd_detail::make_store(cfg);
  const PriorMode mode = cfg.model.injection == nn::Injection::baseline ? PriorMode{} : cfg.prior;
  auto train_refs = build_sample_refs(*store, Split::train, mode, cfg.dataset.keep_fraction,
                                      cfg.dataset.fg_threshold, cfg.dataset.fg_min_fraction);
  auto val_refs = build_sample_refs(*store, Split::val, mode, cfg.dataset.keep_fraction,
                                    cfg.dataset.fg_threshold, cfg.dataset.fg_min_fraction);
  if (train_refs.empty()) throw ConfigError("train split yields no usable slices");
  if (val_refs.empty()) throw ConfigError("val split yields no usable slices");

  const std::uint64_t prior_seed = derive_seed(cfg.seed, "priors");
  PrecorruptedSampleSource train_src(*store, mode, std::move(train_refs), prior_seed);
  PrecorruptedSampleSource val_src(*store, mode, std::move(val_refs),
                                   derive_seed(prior_seed, "val"));

  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);
  cfg.save(out / "resolved_config.json");

  nn::Model<float> model = nn::build_model<float>(cfg.model_config(), cfg.seed);
  train(model, train_src, val_src, tc, out);
}

/// `eval`: evaluates the identity (corrupted) baseline plus one report per
/// checkpoint on the test split; emits per-method JSON reports, the
/// comparison CSVs, a box plot and a clean|corrupted|corrected panel.
inline void cmd_eval(const RunConfig& cfg, const std::vector<std::filesystem::path>& checkpoints,
                     std::vector<std::string>* warnings = nullptr) {
  (void)warnings;
  cfg.ssim.validate();
  if (cfg.out_dir.empty()) throw ConfigError("out_dir is not set");
  if (cfg.dataset.corrupted_dir.empty()) throw ConfigError("dataset.corrupted_dir is not set");
  for (const auto& ck : checkpoints)
    if (!std::filesystem::exists(ck)) throw ConfigError("missing checkpoint: " + ck.string());

  auto store = cmd_detail::make_store(cfg);
  const PriorMode mode = cfg.prior;
  if (mode.kind != PriorMode::Kind::none) mode.validate(cfg.dataset.target_contrast);
  auto refs = build_sample_refs(*store, Split::test, mode, cfg.dataset.keep_fraction,
                                cfg.dataset.fg_threshold, cfg.dataset.fg_min_fraction);
  if (refs.empty()) throw ConfigError("test split yields no usable slices");

  PrecorruptedSampleSource src(*store, mode, std::move(refs), derive_seed(cfg.seed, "eval-priors"));
  std::vector<SliceSample> samples;
  for (std::size_t i = 0; i < src.size(); ++i) samples.push_back(src.get(i, 0));

  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);
  cfg.save(out / "resolved_config.json");

  std::vector<EvalReport> reports;
  reports.push_back(evaluate(identity_predictor(), samples, cfg.ssim, "corrupted"));

  std::vector<Predictor> predictors;
  std::vector<std::string> labels{"corrupted"};
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    nlohmann::json meta;
    auto model = std::make_shared<nn::Model<float>>(nn::load_model(checkpoints[i], &meta));
    if (model->config().injection != nn::Injection::baseline &&
        model->config().n_prior != mode.n_prior())
      throw ConfigError("checkpoint " + checkpoints[i].string() + " expects n_prior=" +
                        std::to_string(model->config().n_prior) + " but prior mode supplies " +
                        std::to_string(mode.n_prior()));
    std::string label = meta.value("label", std::string());
    if (label.empty()) label = "model" + std::to_string(i);
    int suffix = 2;
    std::string unique = label;
    while (std::find(labels.begin(), labels.end(), unique) != labels.end())
      unique = label + "-" + std::to_string(suffix++);
    labels.push_back(unique);
    auto predictor = cmd_detail::model_predictor(model);
    reports.push_back(evaluate(predictor, samples, cfg.ssim, unique));
    predictors.push_back(predictor);
  }

  for (const EvalReport& r : reports)
    r.save(out / ("report_" + cmd_detail::sanitize_label(r.method) + ".json"));

  const Comparison comparison = aggregate(reports);
  write_comparison_csv(comparison, out / "comparison.csv");
  write_median_diffs_csv(comparison, out / "median_diffs.csv");
  render_boxplot(comparison, out / "boxplot.png");

  std::ofstream legend(out / "boxplot_legend.txt", std::ios::trunc);
  for (std::size_t i = 0; i < comparison.rows.size(); ++i)
    legend << "M" << i << " = " << comparison.rows[i].method << "\n";

  // Fig-2-style example panel: clean | corrupted | one corrected image per method.
  std::vector<Image2D<float>> panels{samples.front().target, samples.front().corrupted};
  for (const auto& predictor : predictors) panels.push_back(predictor(samples.front()));
  render_panel(panels, out / "panel.png");

  std::ofstream panel_legend(out / "panel_legend.txt", std::ios::trunc);
  panel_legend << "clean | corrupted";
  for (std::size_t i = 1; i < labels.size(); ++i) panel_legend << " | " << labels[i];
  panel_legend << "\n";
}

/// `plot`: re-renders the box plot from an eval directory's comparison.csv.
inline void cmd_plot(const std::filesystem::path& in_dir, const std::filesystem::path& out_dir) {
  const auto csv = in_dir / "comparison.csv";
  if (!std::filesystem::exists(csv)) throw ConfigError("comparison.csv not found in " + in_dir.string());
  const Comparison comparison = read_comparison_csv(csv);
  std::filesystem::create_directories(out_dir);
  render_boxplot(comparison, out_dir / "boxplot.png");
  std::ofstream legend(out_dir / "boxplot_legend.txt", std::ios::trunc);
  for (std::size_t i = 0; i < comparison.rows.size(); ++i)
    legend << "M" << i << " = " << comparison.rows[i].method << "\n";
}

} // namespace moprior
