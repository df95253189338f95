#include <catch2/catch.hpp>

#include <functional>

#include "moprior/nn/model.hpp"
#include "support/oracles.hpp"

using namespace moprior;
using namespace moprior::nn;

namespace {

Tensor<float> random_input(int n, int c, int h, int w, std::uint64_t seed) {
  Pcg32 rng(seed);
  Tensor<float> t(n, c, h, w);
  for (float& v : t.v) v = static_cast<float>(rng.uniform(0.0, 1.0));
  return t;
}

ModelConfig desk(Arch arch, Injection inj, int n_prior, Fusion fusion = Fusion::add) {
  ModelConfig cfg;
  cfg.arch = arch;
  cfg.injection = inj;
  cfg.n_prior = n_prior;
  cfg.fusion = fusion;
  cfg.depth = 2;
  cfg.base_features = 4;
  cfg.res_blocks = 2;
  return cfg;
}

} // namespace

TEST_CASE("first-layer channel contracts", "[models]") {
  const auto unet_base = build_model<float>(desk(Arch::unet, Injection::baseline, 0));
  REQUIRE(unet_base.param("enc0.conv1.w")->value.c == 1);

  const auto unet_mc = build_model<float>(desk(Arch::unet, Injection::multichannel, 10));
  REQUIRE(unet_mc.param("enc0.conv1.w")->value.c == 11);

  const auto resnet_mc = build_model<float>(desk(Arch::resnet, Injection::multichannel, 2));
  REQUIRE(resnet_mc.param("down1.w")->value.c == 3);

  const auto unet_db = build_model<float>(desk(Arch::unet, Injection::dualbranch, 10));
  REQUIRE(unet_db.param("enc0.conv1.w")->value.c == 1);
  REQUIRE(unet_db.param("aux.enc0.conv1.w")->value.c == 10);
}

TEST_CASE("forward preserves spatial shape for every configuration", "[models]") {
  const auto x = constant(random_input(2, 1, 32, 32, 1));
  const auto p2 = constant(random_input(2, 2, 32, 32, 2));

  for (const Arch arch : {Arch::unet, Arch::resnet}) {
    const auto base = build_model<float>(desk(arch, Injection::baseline, 0));
    const auto out = base.forward(x);
    REQUIRE(out->value.n == 2);
    REQUIRE(out->value.c == 1);
    REQUIRE(out->value.h == 32);
    REQUIRE(out->value.w == 32);

    const auto mc = build_model<float>(desk(arch, Injection::multichannel, 2));
    REQUIRE(mc.forward(x, p2)->value.same_shape(out->value));

    for (const Fusion fusion : {Fusion::add, Fusion::concat_conv}) {
      const auto db = build_model<float>(desk(arch, Injection::dualbranch, 2, fusion));
      REQUIRE(db.forward(x, p2)->value.same_shape(out->value));
    }
  }
}

TEST_CASE("forward rejects bad spatial sizes and missing priors", "[models]") {
  const auto model = build_model<float>(desk(Arch::unet, Injection::baseline, 0)); // depth 2 -> /4
  REQUIRE_THROWS_AS(model.forward(constant(random_input(1, 1, 30, 32, 3))), ShapeError);

  const auto mc = build_model<float>(desk(Arch::unet, Injection::multichannel, 2));
  REQUIRE_THROWS_AS(mc.forward(constant(random_input(1, 1, 32, 32, 4))), ShapeError);
  REQUIRE_THROWS_AS(mc.forward(constant(random_input(1, 1, 32, 32, 4)),
                               constant(random_input(1, 3, 32, 32, 5))),
                    ShapeError);
}

TEST_CASE("zeroed auxiliary branch reproduces the baseline exactly", "[models]") {
  for (const Arch arch : {Arch::unet, Arch::resnet}) {
    auto db = build_model<float>(desk(arch, Injection::dualbranch, 2, Fusion::add), 7);
    const auto base_cfg = desk(arch, Injection::baseline, 0);
    auto base = build_model<float>(base_cfg, 8);

    // share main-branch parameters, zero the auxiliary branch
    for (const auto& name : base.param_names())
      base.param(name)->value = db.param(name)->value;
    for (const auto& name : db.param_names())
      if (name.rfind("aux.", 0) == 0)
        std::fill(db.param(name)->value.v.begin(), db.param(name)->value.v.end(), 0.0f);

    for (int rep = 0; rep < 3; ++rep) {
      const auto x = constant(random_input(1, 1, 16, 16, 10 + static_cast<std::uint64_t>(rep)));
      const auto p = constant(random_input(1, 2, 16, 16, 20 + static_cast<std::uint64_t>(rep)));
      const auto out_db = db.forward(x, p);
      const auto out_base = base.forward(x);
      double m = 0.0;
      for (std::size_t i = 0; i < out_db->value.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(out_db->value.v[i]) - out_base->value.v[i]));
      REQUIRE(m <= 1e-6);
    }
  }
}

TEST_CASE("block-identity 1x1 fusion kernel reduces concat_conv to add-with-zero-aux", "[models]") {
  for (const Arch arch : {Arch::unet, Arch::resnet}) {
    auto cc = build_model<float>(desk(arch, Injection::dualbranch, 2, Fusion::concat_conv), 9);
    auto ad = build_model<float>(desk(arch, Injection::dualbranch, 2, Fusion::add), 10);
    for (const auto& name : ad.param_names())
      ad.param(name)->value = cc.param(name)->value;
    for (auto* m : {&cc, &ad})
      for (const auto& name : m->param_names())
        if (name.rfind("aux.", 0) == 0)
          std::fill(m->param(name)->value.v.begin(), m->param(name)->value.v.end(), 0.0f);

    // fuse.w: out channel c reads main channel c (identity), aux block zero
    auto& fw = cc.param("fuse.w")->value;
    std::fill(fw.v.begin(), fw.v.end(), 0.0f);
    for (int oc = 0; oc < fw.n; ++oc) fw.at(oc, oc, 0, 0) = 1.0f;
    std::fill(cc.param("fuse.b")->value.v.begin(), cc.param("fuse.b")->value.v.end(), 0.0f);

    const auto x = constant(random_input(1, 1, 16, 16, 30));
    const auto p = constant(random_input(1, 2, 16, 16, 31));
    const auto out_cc = cc.forward(x, p);
    const auto out_ad = ad.forward(x, p);
    double m = 0.0;
    for (std::size_t i = 0; i < out_cc->value.numel(); ++i)
      m = std::max(m, std::abs(static_cast<double>(out_cc->value.v[i]) - out_ad->value.v[i]));
    REQUIRE(m <= 1e-6);
  }
}

TEST_CASE("count_parameters matches analytic layer formulas exactly", "[models]") {
  for (const Arch arch : {Arch::unet, Arch::resnet}) {
    for (const auto& cfg :
         {desk(arch, Injection::baseline, 0), desk(arch, Injection::multichannel, 10),
          desk(arch, Injection::multichannel, 2), desk(arch, Injection::dualbranch, 2, Fusion::add),
          desk(arch, Injection::dualbranch, 10, Fusion::concat_conv)}) {
      const auto model = build_model<float>(cfg);
      REQUIRE(model.count_parameters() == oracles::analytic_model_count(cfg));
    }
  }
}

TEST_CASE("multichannel adds exactly base_features*3*3*n_prior first-conv weights", "[models]") {
  for (const Arch arch : {Arch::unet, Arch::resnet}) {
    const auto base = build_model<float>(desk(arch, Injection::baseline, 0));
    const auto mc = build_model<float>(desk(arch, Injection::multichannel, 10));
    const std::size_t f = 4; // desk base_features
    REQUIRE(mc.count_parameters() - base.count_parameters() == f * 3 * 3 * 10);
  }
}

TEST_CASE("dualbranch-add parameter count is baseline plus auxiliary encoder", "[models]") {
  const auto base_cfg = desk(Arch::unet, Injection::baseline, 0);
  const auto db_cfg = desk(Arch::unet, Injection::dualbranch, 3, Fusion::add);
  const auto base = build_model<float>(base_cfg);
  const auto db = build_model<float>(db_cfg);
  std::size_t aux = 0;
  for (const auto& name : db.param_names())
    if (name.rfind("aux.", 0) == 0) aux += db.param(name)->value.numel();
  REQUIRE(db.count_parameters() == base.count_parameters() + aux);
}

TEST_CASE("builds are deterministic in (config, seed)", "[models]") {
  const auto cfg = desk(Arch::resnet, Injection::dualbranch, 2, Fusion::concat_conv);
  const auto a = build_model<float>(cfg, 42);
  const auto b = build_model<float>(cfg, 42);
  const auto c = build_model<float>(cfg, 43);
  REQUIRE(a.count_parameters() == b.count_parameters());
  bool all_equal = true;
  bool any_differs = false;
  for (const auto& name : a.param_names()) {
    all_equal = all_equal && (a.param(name)->value.v == b.param(name)->value.v);
    any_differs = any_differs || (a.param(name)->value.v != c.param(name)->value.v);
  }
  REQUIRE(all_equal);
  REQUIRE(any_differs);
}

TEST_CASE("priors influence the output in multichannel and dualbranch modes only", "[models]") {
  const auto x = constant(random_input(1, 1, 16, 16, 50));
  const auto p = constant(random_input(1, 2, 16, 16, 51));
  auto p_perturbed_t = p->value;
  p_perturbed_t.v[7] += 0.25f;
  const auto p_perturbed = constant(std::move(p_perturbed_t));

  for (const Arch arch : {Arch::unet, Arch::resnet}) {
    for (const Injection inj : {Injection::multichannel, Injection::dualbranch}) {
      const auto model = build_model<float>(desk(arch, inj, 2), 60);
      const auto a = model.forward(x, p);
      const auto b = model.forward(x, p_perturbed);
      double m = 0.0;
      for (std::size_t i = 0; i < a->value.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a->value.v[i]) - b->value.v[i]));
      REQUIRE(m > 0.0);
    }
    const auto base = build_model<float>(desk(arch, Injection::baseline, 0), 61);
    const auto a = base.forward(x, p);
    const auto b = base.forward(x, p_perturbed);
    REQUIRE(a->value.v == b->value.v);
  }
}

TEST_CASE("whole-model gradient check against central differences", "[models][grad]") {
  // depth-2, 2-feature dual-branch UNet on an 8x8 input, double precision
  ModelConfig cfg;
  cfg.arch = Arch::unet;
  cfg.injection = Injection::dualbranch;
  cfg.fusion = Fusion::concat_conv;
  cfg.n_prior = 2;
  cfg.depth = 2;
  cfg.base_features = 2;
  auto model = build_model<double>(cfg, 3);

  Pcg32 data_rng(99);
  Tensor<double> xt(1, 1, 8, 8), pt(1, 2, 8, 8), tt(1, 1, 8, 8);
  for (double& v : xt.v) v = data_rng.uniform(0.0, 1.0);
  for (double& v : pt.v) v = data_rng.uniform(0.0, 1.0);
  for (double& v : tt.v) v = data_rng.uniform(0.0, 1.0);
  const auto x = constant(xt);
  const auto p = constant(pt);
  const auto target = constant(tt);

  const auto loss_of = [&] {
    auto out = model.forward(x, p);
    auto d = sub(out, target);
    return mean_all(mul(d, d));
  };

  model.zero_grad();
  auto loss = loss_of();
  backward(loss);

  // sample 20 random parameters across all arrays
  Pcg32 pick(123);
  for (int s = 0; s < 20; ++s) {
    const auto& name =
        model.param_names()[pick.next_below(static_cast<std::uint32_t>(model.param_names().size()))];
    auto& par = model.param(name);
    if (par->value.numel() == 0) continue;
    const std::size_t i = pick.next_below(static_cast<std::uint32_t>(par->value.numel()));

    const double orig = par->value.v[i];
    const double h = 1e-5;
    double fp, fm;
    {
      NoGradGuard no_grad;
      par->value.v[i] = orig + h;
      fp = loss_of()->value.v[0];
      par->value.v[i] = orig - h;
      fm = loss_of()->value.v[0];
      par->value.v[i] = orig;
    }
    const double fd = (fp - fm) / (2.0 * h);
    const double analytic = par->grad.same_shape(par->value) ? par->grad.v[i] : 0.0;
    const double rel = std::abs(fd - analytic) / std::max({1e-3, std::abs(fd), std::abs(analytic)});
    INFO(name << "[" << i << "] analytic " << analytic << " fd " << fd);
    REQUIRE(rel < 1e-6);
  }
}

TEST_CASE("instance-norm variants build, run and differentiate", "[models]") {
  ModelConfig cfg = desk(Arch::resnet, Injection::baseline, 0);
  cfg.norm = NormKind::instance;
  auto model = build_model<double>(cfg, 5);
  REQUIRE(model.has_param("down1.norm.g"));

  Pcg32 rng(7);
  Tensor<double> xt(1, 1, 8, 8);
  for (double& v : xt.v) v = rng.uniform(0.0, 1.0);
  const auto x = constant(xt);
  auto out = model.forward(x);
  REQUIRE(out->value.same_shape(xt));

  model.zero_grad();
  auto loss = mean_all(mul(out, out));
  backward(loss);
  REQUIRE(model.param("down1.norm.g")->grad.same_shape(model.param("down1.norm.g")->value));
}

TEST_CASE("checkpoints round-trip and reject mismatches", "[models]") {
  const auto dir = oracles::fresh_temp_dir("ckpt");
  const auto cfg = desk(Arch::unet, Injection::multichannel, 2);
  const auto model = build_model<float>(cfg, 11);

  nlohmann::json meta{{"label", "unet-mc"}, {"epoch", 3}};
  save_checkpoint(dir / "m.ckpt", model, meta);

  nlohmann::json loaded_meta;
  const auto loaded = load_model(dir / "m.ckpt", &loaded_meta);
  REQUIRE(loaded_meta["label"] == "unet-mc");
  REQUIRE(loaded.config().to_json() == cfg.to_json());
  for (const auto& name : model.param_names())
    REQUIRE(loaded.param(name)->value.v == model.param(name)->value.v);

  // tamper: claim a different depth in the stored config
  LoadedCheckpoint ck = read_checkpoint(dir / "m.ckpt");
  ck.config.depth = 3;
  REQUIRE_THROWS_AS(load_model(ck), ConfigError);

  // truncated file
  const auto bytes = oracles::read_file_bytes(dir / "m.ckpt");
  std::ofstream trunc(dir / "t.ckpt", std::ios::binary | std::ios::trunc);
  trunc.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  trunc.close();
  REQUIRE_THROWS_AS(read_checkpoint(dir / "t.ckpt"), IoError);
}
