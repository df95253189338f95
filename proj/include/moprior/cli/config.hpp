#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "moprior/io/phantom.hpp"
#include "moprior/io/volume.hpp"
#include "moprior/metrics/ssim.hpp"
#include "moprior/nn/model.hpp"
#include "moprior/prior/prior.hpp"
#include "moprior/sim/motion.hpp"
#include "moprior/train/trainer.hpp"

namespace moprior {

/// One structured configuration document driving every subcommand; parsed
/// from JSON, overridable with --set section.key=value, and re-emitted in
/// full (resolved) form into each output directory.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::string label; // method label; derived from the model when empty

  struct Dataset {
    std::string clean_dir;
    std::string corrupted_dir;
    Contrast target_contrast = Contrast::T2;
    int slice_axis = 2;
    double keep_fraction = 0.6;
    double fg_threshold = 0.05;
    double fg_min_fraction = 0.05;
    int n_train = 8, n_val = 2, n_test = 2;
    NormalizeSpec normalize;
  } dataset;

  MotionConfig motion;
  PriorMode prior;

  struct ModelSection {
    nn::Arch arch = nn::Arch::unet;
    nn::Injection injection = nn::Injection::baseline;
    nn::Fusion fusion = nn::Fusion::add;
    int depth = 3;
    int base_features = 16;
    int res_blocks = 3;
    nn::NormKind norm = nn::NormKind::none;
  } model;

  struct TrainSection {
    LossKind loss = LossKind::l1;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    int batch_size = 4;
    int epochs = 1;
    int checkpoint_every = 0;
    bool log_walltime = true;
    std::string resume;
  } train;

  SsimParams ssim;

  struct Phantom {
    int n_subjects = 12;
    PhantomSpec spec;
  } phantom;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    j["label"] = label;
    j["dataset"] = {{"clean_dir", dataset.clean_dir},
                    {"corrupted_dir", dataset.corrupted_dir},
                    {"target_contrast", to_string(dataset.target_contrast)},
                    {"slice_axis", dataset.slice_axis},
                    {"keep_fraction", dataset.keep_fraction},
                    {"fg_threshold", dataset.fg_threshold},
                    {"fg_min_fraction", dataset.fg_min_fraction},
                    {"splits", {dataset.n_train, dataset.n_val, dataset.n_test}},
                    {"normalize",
                     {{"mode", dataset.normalize.mode == NormalizeSpec::Mode::minmax ? "minmax"
                                                                                     : "percentile"},
                      {"p_lo", dataset.normalize.p_lo},
                      {"p_hi", dataset.normalize.p_hi}}}};
    j["motion"] = {{"n_movements", motion.n_movements},
                   {"rot_range_deg", {motion.rot_lo_deg, motion.rot_hi_deg}},
                   {"axis_choice", to_string(motion.axis_choice)}};
    j["prior"] = prior.to_json();
    j["model"] = {{"arch", to_string(model.arch)},
                  {"injection", to_string(model.injection)},
                  {"fusion", to_string(model.fusion)},
                  {"depth", model.depth},
                  {"base_features", model.base_features},
                  {"res_blocks", model.res_blocks},
                  {"norm", to_string(model.norm)}};
    j["train"] = {{"loss", to_string(train.loss)},
                  {"lr", train.lr},
                  {"beta1", train.beta1},
                  {"beta2", train.beta2},
                  {"batch_size", train.batch_size},
                  {"epochs", train.epochs},
                  {"checkpoint_every", train.checkpoint_every},
                  {"log_walltime", train.log_walltime},
                  {"resume", train.resume}};
    j["ssim"] = {{"window", ssim.window},
                 {"sigma", ssim.sigma},
                 {"k1", ssim.k1},
                 {"k2", ssim.k2},
                 {"L", ssim.dynamic_range}};
    j["phantom"] = {{"n_subjects", phantom.n_subjects},
                    {"size", {phantom.spec.nx, phantom.spec.ny, phantom.spec.nz}},
                    {"n_shapes", phantom.spec.n_shapes}};
    return j;
  }

  static RunConfig from_json(const nlohmann::json& j) { return from_json(j, RunConfig()); }

  /// Overlays the fields present in `j` on top of the current values, so a
  /// partial config file works and to_json -> from_json is lossless.
  static RunConfig from_json(const nlohmann::json& j, RunConfig base) {
    RunConfig c = std::move(base);
    try {
      if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
      if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
      if (j.contains("label")) c.label = j["label"].get<std::string>();
      if (j.contains("dataset")) {
        const auto& d = j["dataset"];
        if (d.contains("clean_dir")) c.dataset.clean_dir = d["clean_dir"].get<std::string>();
        if (d.contains("corrupted_dir")) c.dataset.corrupted_dir = d["corrupted_dir"].get<std::string>();
        if (d.contains("target_contrast"))
          c.dataset.target_contrast = contrast_from_string(d["target_contrast"].get<std::string>());
        if (d.contains("slice_axis")) c.dataset.slice_axis = d["slice_axis"].get<int>();
        if (d.contains("keep_fraction")) c.dataset.keep_fraction = d["keep_fraction"].get<double>();
        if (d.contains("fg_threshold")) c.dataset.fg_threshold = d["fg_threshold"].get<double>();
        if (d.contains("fg_min_fraction"))
          c.dataset.fg_min_fraction = d["fg_min_fraction"].get<double>();
        if (d.contains("splits")) {
          const auto& s = d["splits"];
          if (s.size() != 3) throw ConfigError("dataset.splits must be [train, val, test]");
          c.dataset.n_train = s[0].get<int>();
          c.dataset.n_val = s[1].get<int>();
          c.dataset.n_test = s[2].get<int>();
        }
        if (d.contains("normalize")) {
          const auto& n = d["normalize"];
          if (n.contains("mode")) {
            const auto mode = n["mode"].get<std::string>();
            if (mode == "minmax") c.dataset.normalize.mode = NormalizeSpec::Mode::minmax;
            else if (mode == "percentile") c.dataset.normalize.mode = NormalizeSpec::Mode::percentile;
            else throw ConfigError("dataset.normalize.mode must be minmax or percentile");
          }
          if (n.contains("p_lo")) c.dataset.normalize.p_lo = n["p_lo"].get<double>();
          if (n.contains("p_hi")) c.dataset.normalize.p_hi = n["p_hi"].get<double>();
        }
      }
      if (j.contains("motion")) {
        const auto& m = j["motion"];
        if (m.contains("n_movements")) c.motion.n_movements = m["n_movements"].get<int>();
        if (m.contains("rot_range_deg")) {
          const auto& r = m["rot_range_deg"];
          if (r.size() != 2) throw ConfigError("motion.rot_range_deg must be [lo, hi]");
          c.motion.rot_lo_deg = r[0].get<double>();
          c.motion.rot_hi_deg = r[1].get<double>();
        }
        if (m.contains("axis_choice"))
          c.motion.axis_choice = axis_choice_from_string(m["axis_choice"].get<std::string>());
      }
      if (j.contains("prior")) c.prior = PriorMode::from_json(j["prior"]);
      if (j.contains("model")) {
        const auto& m = j["model"];
        if (m.contains("arch")) c.model.arch = nn::arch_from_string(m["arch"].get<std::string>());
        if (m.contains("injection"))
          c.model.injection = nn::injection_from_string(m["injection"].get<std::string>());
        if (m.contains("fusion")) c.model.fusion = nn::fusion_from_string(m["fusion"].get<std::string>());
        if (m.contains("depth")) c.model.depth = m["depth"].get<int>();
        if (m.contains("base_features")) c.model.base_features = m["base_features"].get<int>();
        if (m.contains("res_blocks")) c.model.res_blocks = m["res_blocks"].get<int>();
        if (m.contains("norm")) c.model.norm = nn::norm_from_string(m["norm"].get<std::string>());
      }
      if (j.contains("train")) {
        const auto& t = j["train"];
        if (t.contains("loss")) c.train.loss = loss_from_string(t["loss"].get<std::string>());
        if (t.contains("lr")) c.train.lr = t["lr"].get<double>();
        if (t.contains("beta1")) c.train.beta1 = t["beta1"].get<double>();
        if (t.contains("beta2")) c.train.beta2 = t["beta2"].get<double>();
        if (t.contains("batch_size")) c.train.batch_size = t["batch_size"].get<int>();
        if (t.contains("epochs")) c.train.epochs = t["epochs"].get<int>();
        if (t.contains("checkpoint_every")) c.train.checkpoint_every = t["checkpoint_every"].get<int>();
        if (t.contains("log_walltime")) c.train.log_walltime = t["log_walltime"].get<bool>();
        if (t.contains("resume")) c.train.resume = t["resume"].get<std::string>();
      }
      if (j.contains("ssim")) {
        const auto& s = j["ssim"];
        if (s.contains("window")) c.ssim.window = s["window"].get<int>();
        if (s.contains("sigma")) c.ssim.sigma = s["sigma"].get<double>();
        if (s.contains("k1")) c.ssim.k1 = s["k1"].get<double>();
        if (s.contains("k2")) c.ssim.k2 = s["k2"].get<double>();
        if (s.contains("L")) c.ssim.dynamic_range = s["L"].get<double>();
      }
      if (j.contains("phantom")) {
        const auto& p = j["phantom"];
        if (p.contains("n_subjects")) c.phantom.n_subjects = p["n_subjects"].get<int>();
        if (p.contains("size")) {
          const auto& s = p["size"];
          if (s.size() != 3) throw ConfigError("phantom.size must be [nx, ny, nz]");
          c.phantom.spec.nx = s[0].get<int>();
          c.phantom.spec.ny = s[1].get<int>();
          c.phantom.spec.nz = s[2].get<int>();
        }
        if (p.contains("n_shapes")) c.phantom.spec.n_shapes = p["n_shapes"].get<int>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
  }

  static RunConfig load(const std::filesystem::path& path) { return load(path, RunConfig()); }

  static RunConfig load(const std::filesystem::path& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
    return from_json(j, std::move(base));
  }

  /// Applies one --set override, e.g. "train.lr=0.001" or
  /// "prior.contrasts=[\"T1\",\"PD\"]". The value is parsed as JSON when
  /// possible and treated as a string otherwise.
  void apply_override(const std::string& spec) {
    const std::size_t eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("--set expects section.key=value, got: " + spec);
    const std::string key = spec.substr(0, eq);
    const std::string value = spec.substr(eq + 1);

    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(value);
    } catch (const nlohmann::json::exception&) {
      parsed = value; // plain string
    }

    nlohmann::json doc = to_json();
    nlohmann::json* cursor = &doc;
    std::size_t pos = 0;
    while (true) {
      const std::size_t dot = key.find('.', pos);
      const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
      if (part.empty()) throw ConfigError("--set: empty key segment in " + key);
      if (dot == std::string::npos) {
        if (!cursor->is_object() || !cursor->contains(part))
          throw ConfigError("--set: unknown config key " + key);
        (*cursor)[part] = parsed;
        break;
      }
      if (!cursor->is_object() || !cursor->contains(part))
        throw ConfigError("--set: unknown config section " + key.substr(0, dot));
      cursor = &(*cursor)[part];
      pos = dot + 1;
    }
    *this = from_json(doc);
  }

  /// Method label used in reports: explicit label, else derived from the
  /// model + prior sections.
  std::string method_label() const {
    if (!label.empty()) return label;
    std::string s = std::string(to_string(model.arch)) + "-" + to_string(model.injection);
    if (model.injection != nn::Injection::baseline)
      s += std::string("-") + PriorMode::kind_name(prior.kind);
    if (model.injection == nn::Injection::dualbranch)
      s += std::string("-") + to_string(model.fusion);
    return s;
  }

  nn::ModelConfig model_config() const {
    nn::ModelConfig mc;
    mc.arch = model.arch;
    mc.injection = model.injection;
    mc.fusion = model.fusion;
    mc.n_prior = model.injection == nn::Injection::baseline ? 0 : prior.n_prior();
    mc.depth = model.depth;
    mc.base_features = model.base_features;
    mc.res_blocks = model.res_blocks;
    mc.norm = model.norm;
    return mc;
  }

  TrainConfig train_config() const {
    TrainConfig tc;
    tc.loss = train.loss;
    tc.lr = train.lr;
    tc.beta1 = train.beta1;
    tc.beta2 = train.beta2;
    tc.batch_size = train.batch_size;
    tc.epochs = train.epochs;
    tc.checkpoint_every = train.checkpoint_every;
    tc.seed = derive_seed(seed, "train");
    tc.log_walltime = train.log_walltime;
    tc.resume = train.resume;
    tc.label = method_label();
    tc.ssim = ssim;
    return tc;
  }

  MotionConfig motion_config() const {
    MotionConfig mc = motion;
    mc.seed = derive_seed(seed, "motion");
    return mc;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(IoErrc::write_failed, path.string());
    out << to_json().dump(2) << "\n";
  }
};

} // namespace moprior
