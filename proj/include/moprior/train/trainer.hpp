#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "moprior/metrics/ssim.hpp"
#include "moprior/nn/model.hpp"
#include "moprior/prior/prior.hpp"
#include "moprior/train/adam.hpp"
#include "moprior/train/loss.hpp"

namespace moprior {

struct TrainConfig {
  LossKind loss = LossKind::l1;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int batch_size = 4;
  int epochs = 1;
  int checkpoint_every = 0; // 0 = only best + final
  std::uint64_t seed = 0;
  bool log_walltime = true; // false writes 0 seconds for byte-reproducible CSVs
  std::string resume;       // path to a final checkpoint to continue from
  std::string label;        // method label recorded in checkpoints
  SsimParams ssim;          // validation metric and optional ssim loss

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("TrainConfig: lr must be positive");
    if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
    if (checkpoint_every < 0) throw ConfigError("TrainConfig: checkpoint_every must be >= 0");
    ssim.validate();
  }
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_ssim = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> rows;

  static constexpr const char* csv_header = "epoch,train_loss,val_ssim,seconds\n";

  static std::string csv_row(const EpochStats& r) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.3f\n", r.epoch, r.train_loss, r.val_ssim,
                  r.seconds);
    return buf;
  }
};

struct TrainResult {
  TrainHistory history;
  std::filesystem::path best_checkpoint;
  std::filesystem::path final_checkpoint;
  double best_val_ssim = -2.0;
  int best_epoch = 0;
};

namespace train_detail {

template <typename T>
nn::NodePtr<T> batch_tensor(const std::vector<SliceSample>& batch, bool priors) {
  const int b = static_cast<int>(batch.size());
  const int h = batch.front().target.height;
  const int w = batch.front().target.width;
  const int c = priors ? static_cast<int>(batch.front().priors.size()) : 1;
  nn::Tensor<T> t(b, c, h, w);
  for (int i = 0; i < b; ++i) {
    if (priors) {
      for (int p = 0; p < c; ++p) {
        const auto& img = batch[static_cast<std::size_t>(i)].priors[static_cast<std::size_t>(p)];
        T* dst = t.plane(i, p);
        for (std::size_t j = 0; j < img.data.size(); ++j) dst[j] = static_cast<T>(img.data[j]);
      }
    } else {
      const auto& img = batch[static_cast<std::size_t>(i)].corrupted;
      T* dst = t.plane(i, 0);
      for (std::size_t j = 0; j < img.data.size(); ++j) dst[j] = static_cast<T>(img.data[j]);
    }
  }
  return nn::constant(std::move(t));
}

template <typename T>
nn::NodePtr<T> target_tensor(const std::vector<SliceSample>& batch) {
  const int b = static_cast<int>(batch.size());
  const int h = batch.front().target.height;
  const int w = batch.front().target.width;
  nn::Tensor<T> t(b, 1, h, w);
  for (int i = 0; i < b; ++i) {
    const auto& img = batch[static_cast<std::size_t>(i)].target;
    T* dst = t.plane(i, 0);
    for (std::size_t j = 0; j < img.data.size(); ++j) dst[j] = static_cast<T>(img.data[j]);
  }
  return nn::constant(std::move(t));
}

/// Model output for one sample batch, clamped to [0, 1], as float images.
template <typename T>
std::vector<Image2D<float>> predict_batch(const nn::Model<T>& model,
                                          const std::vector<SliceSample>& batch) {
  nn::NoGradGuard no_grad;
  auto x = batch_tensor<T>(batch, false);
  nn::NodePtr<T> p = nullptr;
  if (model.config().injection != nn::Injection::baseline) p = batch_tensor<T>(batch, true);
  const auto out = model.forward(x, p);
  std::vector<Image2D<float>> images;
  const int h = out->value.h;
  const int w = out->value.w;
  for (int i = 0; i < out->value.n; ++i) {
    Image2D<float> img(h, w);
    const T* src = out->value.plane(i, 0);
    for (std::size_t j = 0; j < img.data.size(); ++j)
      img.data[j] = std::clamp(static_cast<float>(src[j]), 0.0f, 1.0f);
    images.push_back(std::move(img));
  }
  return images;
}

template <typename T>
double validation_ssim(const nn::Model<T>& model, SampleSource& val_set, int epoch,
                       int batch_size, const SsimParams& sp) {
  double acc = 0.0;
  std::size_t count = 0;
  std::vector<SliceSample> batch;
  for (std::size_t i = 0; i < val_set.size(); i += static_cast<std::size_t>(batch_size)) {
    batch.clear();
    for (std::size_t j = i; j < std::min(val_set.size(), i + static_cast<std::size_t>(batch_size)); ++j)
      batch.push_back(val_set.get(j, epoch));
    const auto preds = predict_batch(model, batch);
    for (std::size_t j = 0; j < preds.size(); ++j) {
      acc += ssim_mean(preds[j], batch[j].target, sp);
      ++count;
    }
  }
  return count == 0 ? 0.0 : acc / static_cast<double>(count);
}

} // namespace train_detail

/// Minibatch training with Adam, per-epoch validation SSIM, best/final
/// checkpointing and CSV history. Deterministic given (model, data, seed):
/// data order, prior draws and optimizer math all derive from cfg.seed.
template <typename T>
TrainResult train(nn::Model<T>& model, SampleSource& train_set, SampleSource& val_set,
                  const TrainConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  if (train_set.size() == 0 || val_set.size() == 0)
    throw ConfigError("train: datasets must be non-empty");
  if (model.config().injection != nn::Injection::baseline &&
      model.config().n_prior != train_set.n_prior())
    throw ConfigError("train: model n_prior (" + std::to_string(model.config().n_prior) +
                      ") does not match dataset (" + std::to_string(train_set.n_prior()) + ")");

  std::filesystem::create_directories(out_dir);
  const std::filesystem::path history_path = out_dir / "history.csv";
  const std::filesystem::path best_path = out_dir / "best.ckpt";
  const std::filesystem::path final_path = out_dir / "final.ckpt";

  Adam<T> opt(cfg.lr, cfg.beta1, cfg.beta2);
  int start_epoch = 0;
  double best_val = -2.0;
  int best_epoch = 0;

  if (!cfg.resume.empty()) {
    const nn::LoadedCheckpoint ck = nn::read_checkpoint(cfg.resume);
    if (ck.config.to_json() != model.config().to_json())
      throw ConfigError("train: resume checkpoint config does not match model");
    if constexpr (std::is_same_v<T, float>) {
      nn::Model<float> loaded = nn::load_model(ck);
      for (const auto& name : model.param_names())
        model.param(name)->value = loaded.param(name)->value;
      opt.load_state(ck.opt_blobs, ck.meta.value("adam_step", std::int64_t(0)));
    } else {
      throw ConfigError("train: resume is only supported for float models");
    }
    start_epoch = ck.meta.value("epoch", 0);
    best_val = ck.meta.value("best_val_ssim", -2.0);
    best_epoch = ck.meta.value("best_epoch", 0);
  }

  const bool history_existed = std::filesystem::exists(history_path);
  std::ofstream history(history_path,
                        cfg.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!history) throw IoError(IoErrc::write_failed, history_path.string());
  if (cfg.resume.empty() || !history_existed) history << TrainHistory::csv_header;

  const auto save = [&](const std::filesystem::path& path, int epoch, double val,
                        bool with_opt_state) {
    if constexpr (std::is_same_v<T, float>) {
      nlohmann::json meta{{"epoch", epoch},
                          {"val_ssim", val},
                          {"best_val_ssim", best_val},
                          {"best_epoch", best_epoch},
                          {"label", cfg.label},
                          {"adam_step", opt.step_count()},
                          {"seed", cfg.seed}};
      nn::save_checkpoint(path, model, meta,
                          with_opt_state
                              ? opt.state_blobs()
                              : std::vector<std::pair<std::string, nn::Tensor<float>>>{});
    }
  };

  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const bool needs_priors = model.config().injection != nn::Injection::baseline;

  for (int e = start_epoch + 1; e <= start_epoch + cfg.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();

    Pcg32 shuffle_rng(derive_seed(cfg.seed, "order", static_cast<std::uint64_t>(e)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    std::vector<SliceSample> batch;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(cfg.batch_size)) {
      batch.clear();
      for (std::size_t j = i;
           j < std::min(order.size(), i + static_cast<std::size_t>(cfg.batch_size)); ++j)
        batch.push_back(train_set.get(order[j], e));

      auto x = train_detail::batch_tensor<T>(batch, false);
      nn::NodePtr<T> priors = nullptr;
      if (needs_priors) priors = train_detail::batch_tensor<T>(batch, true);
      auto target = train_detail::target_tensor<T>(batch);

      model.zero_grad();
      auto out = model.forward(x, priors);
      auto loss = compute_loss(out, target, cfg.loss, cfg.ssim);
      const double loss_value = static_cast<double>(loss->value.v[0]);
      if (!std::isfinite(loss_value))
        throw Error("train: non-finite loss at epoch " + std::to_string(e) +
                    " (diverged or bad input); aborting");
      nn::backward(loss);
      opt.step(model);

      loss_sum += loss_value * static_cast<double>(batch.size());
      seen += batch.size();
    }

    const double val = train_detail::validation_ssim(model, val_set, e, cfg.batch_size, cfg.ssim);
    const auto t1 = std::chrono::steady_clock::now();

    EpochStats row;
    row.epoch = e;
    row.train_loss = loss_sum / static_cast<double>(seen);
    row.val_ssim = val;
    row.seconds = cfg.log_walltime ? std::chrono::duration<double>(t1 - t0).count() : 0.0;
    result.history.rows.push_back(row);
    history << TrainHistory::csv_row(row);
    history.flush();

    if (val > best_val) {
      best_val = val;
      best_epoch = e;
      save(best_path, e, val, false);
    }
    if (cfg.checkpoint_every > 0 && e % cfg.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%04d.ckpt", e);
      save(out_dir / name, e, val, false);
    }
  }

  save(final_path, start_epoch + cfg.epochs, result.history.rows.back().val_ssim, true);
  result.best_checkpoint = best_path;
  result.final_checkpoint = final_path;
  result.best_val_ssim = best_val;
  result.best_epoch = best_epoch;
  return result;
}

/// Named sub-seeds fanned out from one root seed; every random stream in the
/// pipeline draws from one of these.
struct Seeds {
  std::uint64_t root = 0;
  std::uint64_t split = 0;
  std::uint64_t motion = 0;
  std::uint64_t model_init = 0;
  std::uint64_t train = 0;
  std::uint64_t priors = 0;
  std::uint64_t eval = 0;

  static Seeds from(std::uint64_t root) {
    Seeds s;
    s.root = root;
    s.split = derive_seed(root, "split");
    s.motion = derive_seed(root, "motion");
    s.model_init = derive_seed(root, "model-init");
    s.train = derive_seed(root, "train");
    s.priors = derive_seed(root, "priors");
    s.eval = derive_seed(root, "eval");
    return s;
  }
};

} // namespace moprior
