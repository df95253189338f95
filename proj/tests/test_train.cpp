#include <catch2/catch.hpp>

#include <fstream>

#include "moprior/metrics/ssim.hpp"
#include "moprior/train/adam.hpp"
#include "moprior/train/loss.hpp"
#include "moprior/train/trainer.hpp"
#include "support/oracles.hpp"

using namespace moprior;
using namespace moprior::nn;

namespace {

SliceSample synthetic_sample(std::uint64_t seed, int size = 16, int n_prior = 0) {
  SliceSample s;
  s.subject_id = "S" + std::to_string(seed);
  s.slice_index = static_cast<int>(seed % 5);
  s.target = oracles::structured_image(size, size, seed);
  Pcg32 rng(derive_seed(seed, "noise"));
  s.corrupted = s.target;
  for (float& v : s.corrupted.data)
    v = std::clamp(v + static_cast<float>(rng.uniform(-0.15, 0.15)), 0.0f, 1.0f);
  for (int p = 0; p < n_prior; ++p)
    s.priors.push_back(oracles::structured_image(size, size, derive_seed(seed, "prior", p)));
  return s;
}

std::vector<SliceSample> synthetic_set(int n, std::uint64_t seed0, int size = 16, int n_prior = 0) {
  std::vector<SliceSample> out;
  for (int i = 0; i < n; ++i)
    out.push_back(synthetic_sample(seed0 + static_cast<std::uint64_t>(i), size, n_prior));
  return out;
}

ModelConfig tiny_unet(Injection inj = Injection::baseline, int n_prior = 0) {
  ModelConfig cfg;
  cfg.arch = Arch::unet;
  cfg.injection = inj;
  cfg.n_prior = n_prior;
  cfg.depth = 2;
  cfg.base_features = 4;
  return cfg;
}

} // namespace

TEST_CASE("l1 and l2 losses on trivial inputs", "[train]") {
  auto a = constant(Tensor<double>(1, 1, 4, 4, 0.25));
  auto b = constant(Tensor<double>(1, 1, 4, 4, 0.25));
  REQUIRE(compute_loss(a, b, LossKind::l1)->value.v[0] == 0.0);
  REQUIRE(compute_loss(a, b, LossKind::l2)->value.v[0] == 0.0);

  auto c = constant(Tensor<double>(1, 1, 4, 4, 0.75));
  REQUIRE(compute_loss(c, b, LossKind::l1)->value.v[0] == Approx(0.5));
  REQUIRE(compute_loss(c, b, LossKind::l2)->value.v[0] == Approx(0.25));
}

TEST_CASE("l2 loss matches the brute-force mean of squared differences", "[train]") {
  Pcg32 rng(5);
  Tensor<double> at(2, 1, 8, 8), bt(2, 1, 8, 8);
  for (double& v : at.v) v = rng.uniform(0.0, 1.0);
  for (double& v : bt.v) v = rng.uniform(0.0, 1.0);
  double expect = 0.0;
  for (std::size_t i = 0; i < at.numel(); ++i)
    expect += (at.v[i] - bt.v[i]) * (at.v[i] - bt.v[i]);
  expect /= static_cast<double>(at.numel());
  const double got = compute_loss(constant(at), constant(bt), LossKind::l2)->value.v[0];
  REQUIRE(std::abs(got - expect) < 1e-7);
}

TEST_CASE("one_minus_ssim agrees with the metric and differentiates", "[train]") {
  const auto x_img = oracles::structured_image(24, 24, 1);
  const auto y_img = oracles::random_image(24, 24, 2);
  Tensor<double> xt = Tensor<double>::zeros_like(Tensor<double>(1, 1, 24, 24));
  Tensor<double> yt = Tensor<double>::zeros_like(xt);
  for (std::size_t i = 0; i < xt.numel(); ++i) {
    xt.v[i] = x_img.data[i];
    yt.v[i] = y_img.data[i];
  }
  auto x = parameter(xt, "x");
  auto y = constant(yt);

  auto loss = compute_loss(x, y, LossKind::one_minus_ssim);
  const double metric = ssim_mean(x_img, y_img);
  REQUIRE(loss->value.v[0] == Approx(1.0 - metric).margin(1e-6));
  REQUIRE(loss->value.v[0] >= 0.0);
  REQUIRE(loss->value.v[0] <= 2.0);

  // gradient check on a few elements
  backward(loss);
  Pcg32 pick(3);
  for (int s = 0; s < 8; ++s) {
    const std::size_t i = pick.next_below(static_cast<std::uint32_t>(xt.numel()));
    const double orig = x->value.v[i];
    const double h = 1e-5;
    double fp, fm;
    {
      NoGradGuard no_grad;
      x->value.v[i] = orig + h;
      fp = compute_loss(x, y, LossKind::one_minus_ssim)->value.v[0];
      x->value.v[i] = orig - h;
      fm = compute_loss(x, y, LossKind::one_minus_ssim)->value.v[0];
      x->value.v[i] = orig;
    }
    const double fd = (fp - fm) / (2.0 * h);
    const double analytic = x->grad.v[i];
    REQUIRE(std::abs(fd - analytic) / std::max({1e-3, std::abs(fd), std::abs(analytic)}) < 1e-5);
  }
}

TEST_CASE("loss rejects shape mismatches", "[train]") {
  auto a = constant(Tensor<double>(1, 1, 4, 4));
  auto b = constant(Tensor<double>(1, 1, 4, 5));
  REQUIRE_THROWS_AS(compute_loss(a, b, LossKind::l1), ShapeError);
}

TEST_CASE("Adam with lr=0 leaves parameters unchanged", "[train]") {
  auto model = build_model<float>(tiny_unet(), 1);
  const auto before = model.param("enc0.conv1.w")->value.v;

  const auto x = constant(Tensor<float>(1, 1, 16, 16, 0.5f));
  const auto t = constant(Tensor<float>(1, 1, 16, 16, 0.25f));
  model.zero_grad();
  auto loss = compute_loss(model.forward(x), t, LossKind::l2);
  backward(loss);

  Adam<float> opt(0.0);
  opt.step(model);
  REQUIRE(model.param("enc0.conv1.w")->value.v == before);

  Adam<float> opt2(1e-3);
  opt2.step(model);
  REQUIRE(model.param("enc0.conv1.w")->value.v != before);
}

TEST_CASE("one step on a dual-branch model updates auxiliary parameters", "[train]") {
  auto model = build_model<float>(
      [] {
        ModelConfig cfg;
        cfg.arch = Arch::unet;
        cfg.injection = Injection::dualbranch;
        cfg.n_prior = 2;
        cfg.depth = 2;
        cfg.base_features = 4;
        return cfg;
      }(),
      2);
  const auto before = model.param("aux.enc0.conv1.w")->value.v;

  Pcg32 rng(4);
  Tensor<float> xt(1, 1, 16, 16), pt(1, 2, 16, 16), tt(1, 1, 16, 16);
  for (float& v : xt.v) v = static_cast<float>(rng.uniform(0.0, 1.0));
  for (float& v : pt.v) v = static_cast<float>(rng.uniform(0.0, 1.0));
  for (float& v : tt.v) v = static_cast<float>(rng.uniform(0.0, 1.0));

  model.zero_grad();
  auto loss = compute_loss(model.forward(constant(xt), constant(pt)), constant(tt), LossKind::l1);
  backward(loss);
  Adam<float> opt(1e-3);
  opt.step(model);
  REQUIRE(model.param("aux.enc0.conv1.w")->value.v != before);
}

TEST_CASE("one epoch on four samples yields one history row", "[train]") {
  const auto dir = oracles::fresh_temp_dir("train1");
  VectorSampleSource train_src(synthetic_set(4, 10), 0);
  VectorSampleSource val_src(synthetic_set(2, 50), 0);
  auto model = build_model<float>(tiny_unet(), 3);

  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 2;
  cfg.seed = 1;
  const TrainResult res = train(model, train_src, val_src, cfg, dir);
  REQUIRE(res.history.rows.size() == 1);
  REQUIRE(std::isfinite(res.history.rows[0].train_loss));
  REQUIRE(std::filesystem::exists(res.best_checkpoint));
  REQUIRE(std::filesystem::exists(res.final_checkpoint));
  REQUIRE(std::filesystem::exists(dir / "history.csv"));
}

TEST_CASE("training twice with the same seed is bit-identical", "[train]") {
  const auto dir_a = oracles::fresh_temp_dir("trainA");
  const auto dir_b = oracles::fresh_temp_dir("trainB");
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.seed = 7;
  cfg.log_walltime = false;

  VectorSampleSource train_src(synthetic_set(6, 20), 0);
  VectorSampleSource val_src(synthetic_set(2, 60), 0);

  auto ma = build_model<float>(tiny_unet(), 9);
  auto mb = build_model<float>(tiny_unet(), 9);
  train(ma, train_src, val_src, cfg, dir_a);
  train(mb, train_src, val_src, cfg, dir_b);

  for (const auto& name : ma.param_names())
    REQUIRE(ma.param(name)->value.v == mb.param(name)->value.v);
  REQUIRE(oracles::read_file_bytes(dir_a / "history.csv") ==
          oracles::read_file_bytes(dir_b / "history.csv"));
  REQUIRE(oracles::read_file_bytes(dir_a / "final.ckpt") ==
          oracles::read_file_bytes(dir_b / "final.ckpt"));
}

TEST_CASE("overfitting a small set shrinks the training loss 4x", "[train][slow]") {
  const auto dir = oracles::fresh_temp_dir("overfit");
  VectorSampleSource train_src(synthetic_set(8, 30), 0);
  VectorSampleSource val_src(synthetic_set(2, 70), 0);

  ModelConfig mc = tiny_unet();
  mc.base_features = 8;
  auto model = build_model<float>(mc, 4);

  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 4;
  cfg.lr = 2e-3;
  cfg.seed = 5;
  const TrainResult res = train(model, train_src, val_src, cfg, dir);
  const double initial = res.history.rows.front().train_loss;
  const double final_loss = res.history.rows.back().train_loss;
  INFO("initial " << initial << " final " << final_loss);
  REQUIRE(final_loss < 0.25 * initial);
}

TEST_CASE("best checkpoint records the maximum validation ssim", "[train]") {
  const auto dir = oracles::fresh_temp_dir("best");
  VectorSampleSource train_src(synthetic_set(4, 40), 0);
  VectorSampleSource val_src(synthetic_set(2, 80), 0);
  auto model = build_model<float>(tiny_unet(), 6);

  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 2;
  cfg.lr = 1e-3;
  cfg.seed = 11;
  const TrainResult res = train(model, train_src, val_src, cfg, dir);

  double max_val = -2.0;
  for (const auto& r : res.history.rows) max_val = std::max(max_val, r.val_ssim);

  nlohmann::json meta;
  (void)load_model(res.best_checkpoint, &meta);
  REQUIRE(meta["val_ssim"].get<double>() == Approx(max_val).margin(1e-12));
  REQUIRE(res.best_val_ssim == Approx(max_val).margin(1e-12));
}

TEST_CASE("resume continues epoch numbering and appends history", "[train]") {
  const auto dir = oracles::fresh_temp_dir("resume");
  VectorSampleSource train_src(synthetic_set(4, 90), 0);
  VectorSampleSource val_src(synthetic_set(2, 95), 0);

  auto model = build_model<float>(tiny_unet(), 12);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.seed = 13;
  train(model, train_src, val_src, cfg, dir);

  auto model2 = build_model<float>(tiny_unet(), 999); // params come from the checkpoint
  TrainConfig cfg2 = cfg;
  cfg2.resume = (dir / "final.ckpt").string();
  const TrainResult res = train(model2, train_src, val_src, cfg2, dir);
  REQUIRE(res.history.rows.front().epoch == 3);
  REQUIRE(res.history.rows.back().epoch == 4);

  // resuming into a fresh directory still yields a well-formed CSV;
  // final.ckpt now sits at epoch 4, so the continuation starts at 5
  const auto dir2 = oracles::fresh_temp_dir("resume2");
  auto model3 = build_model<float>(tiny_unet(), 998);
  const TrainResult res2 = train(model3, train_src, val_src, cfg2, dir2);
  REQUIRE(res2.history.rows.front().epoch == 5);
  std::ifstream fresh(dir2 / "history.csv");
  std::string first;
  std::getline(fresh, first);
  REQUIRE(first == "epoch,train_loss,val_ssim,seconds");

  std::ifstream hist(dir / "history.csv");
  std::string line;
  int rows = 0;
  std::getline(hist, line); // header
  while (std::getline(hist, line))
    if (!line.empty()) ++rows;
  REQUIRE(rows == 4);
}

TEST_CASE("non-finite loss aborts with a diagnostic", "[train]") {
  const auto dir = oracles::fresh_temp_dir("nanloss");
  VectorSampleSource train_src(synthetic_set(2, 100), 0);
  VectorSampleSource val_src(synthetic_set(2, 105), 0);
  auto model = build_model<float>(tiny_unet(), 14);
  // poison a parameter
  model.param("enc0.conv1.w")->value.v[0] = std::numeric_limits<float>::quiet_NaN();

  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.seed = 15;
  REQUIRE_THROWS_WITH(train(model, train_src, val_src, cfg, dir),
                      Catch::Contains("non-finite"));
}

TEST_CASE("model/dataset channel mismatch is rejected", "[train]") {
  const auto dir = oracles::fresh_temp_dir("mismatch");
  VectorSampleSource train_src(synthetic_set(2, 110, 16, 2), 2);
  VectorSampleSource val_src(synthetic_set(2, 115, 16, 2), 2);
  auto model = build_model<float>(tiny_unet(Injection::multichannel, 3), 16);
  TrainConfig cfg;
  cfg.seed = 17;
  REQUIRE_THROWS_AS(train(model, train_src, val_src, cfg, dir), ConfigError);
}

TEST_CASE("Seeds fan out deterministically from the root", "[train]") {
  const Seeds a = Seeds::from(123);
  const Seeds b = Seeds::from(123);
  const Seeds c = Seeds::from(124);
  REQUIRE(a.model_init == b.model_init);
  REQUIRE(a.train == b.train);
  REQUIRE(a.motion != c.motion);
  REQUIRE(a.split != a.train);
  REQUIRE(a.priors != a.eval);
}
