#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "moprior/core/rng.hpp"
#include "moprior/nn/ops.hpp"
#include "moprior/nn/tensor.hpp"

namespace moprior::nn {

enum class Arch { unet, resnet };
enum class Injection { baseline, multichannel, dualbranch };
enum class Fusion { add, concat_conv };
enum class NormKind { none, instance };

inline const char* to_string(Arch a) { return a == Arch::unet ? "unet" : "resnet"; }
inline const char* to_string(Injection i) {
  switch (i) {
  case Injection::baseline: return "baseline";
  case Injection::multichannel: return "multichannel";
  case Injection::dualbranch: return "dualbranch";
  }
  return "baseline";
}
inline const char* to_string(Fusion f) { return f == Fusion::add ? "add" : "concat_conv"; }
inline const char* to_string(NormKind n) { return n == NormKind::none ? "none" : "instance"; }

inline Arch arch_from_string(const std::string& s) {
  if (s == "unet") return Arch::unet;
  if (s == "resnet") return Arch::resnet;
  throw ConfigError("unknown arch: " + s);
}
inline Injection injection_from_string(const std::string& s) {
  if (s == "baseline") return Injection::baseline;
  if (s == "multichannel") return Injection::multichannel;
  if (s == "dualbranch") return Injection::dualbranch;
  throw ConfigError("unknown injection mode: " + s);
}
inline Fusion fusion_from_string(const std::string& s) {
  if (s == "add") return Fusion::add;
  if (s == "concat_conv") return Fusion::concat_conv;
  throw ConfigError("unknown fusion mode: " + s);
}
inline NormKind norm_from_string(const std::string& s) {
  if (s == "none") return NormKind::none;
  if (s == "instance") return NormKind::instance;
  throw ConfigError("unknown norm kind: " + s);
}

struct ModelConfig {
  Arch arch = Arch::unet;
  Injection injection = Injection::baseline;
  Fusion fusion = Fusion::add; // dualbranch only
  int n_prior = 0;
  int depth = 3;          // unet contraction levels
  int base_features = 16;
  int res_blocks = 3;     // resnet residual blocks
  NormKind norm = NormKind::none;

  void validate() const {
    if (depth < 1 || depth > 8) throw ConfigError("ModelConfig: depth must be in [1, 8]");
    if (base_features < 1) throw ConfigError("ModelConfig: base_features must be >= 1");
    if (res_blocks < 1) throw ConfigError("ModelConfig: res_blocks must be >= 1");
    if (n_prior < 0) throw ConfigError("ModelConfig: n_prior must be >= 0");
    if (injection != Injection::baseline && n_prior < 1)
      throw ConfigError("ModelConfig: multichannel/dualbranch need n_prior >= 1");
  }

  /// Channels seen by the first layer of the main path.
  int in_channels() const { return injection == Injection::multichannel ? 1 + n_prior : 1; }

  /// Spatial divisibility demanded by the down/up sampling ladder.
  int spatial_multiple() const { return arch == Arch::unet ? (1 << depth) : 4; }

  nlohmann::json to_json() const {
    return nlohmann::json{{"arch", to_string(arch)},
                          {"injection", to_string(injection)},
                          {"fusion", to_string(fusion)},
                          {"n_prior", n_prior},
                          {"depth", depth},
                          {"base_features", base_features},
                          {"res_blocks", res_blocks},
                          {"norm", to_string(norm)}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    if (j.contains("arch")) c.arch = arch_from_string(j["arch"].get<std::string>());
    if (j.contains("injection")) c.injection = injection_from_string(j["injection"].get<std::string>());
    if (j.contains("fusion")) c.fusion = fusion_from_string(j["fusion"].get<std::string>());
    if (j.contains("n_prior")) c.n_prior = j["n_prior"].get<int>();
    if (j.contains("depth")) c.depth = j["depth"].get<int>();
    if (j.contains("base_features")) c.base_features = j["base_features"].get<int>();
    if (j.contains("res_blocks")) c.res_blocks = j["res_blocks"].get<int>();
    if (j.contains("norm")) c.norm = norm_from_string(j["norm"].get<std::string>());
    c.validate();
    return c;
  }
};

/// Latent fusion for the dual-branch variants: plain addition, or channel
/// concatenation followed by a learned 1x1 convolution back to the main
/// branch's channel count.
template <typename T>
NodePtr<T> fuse_latent(NodePtr<T> main, NodePtr<T> aux, Fusion fusion, NodePtr<T> fuse_w,
                       NodePtr<T> fuse_b) {
  if (!main->value.same_shape(aux->value)) throw ShapeError("fuse_latent: latent shape mismatch");
  if (fusion == Fusion::add) return add(main, aux);
  return conv2d(concat_channels(main, aux), fuse_w, fuse_b, 1, 0);
}

/// A built network: an ordered parameter list plus the forward graph builder.
template <typename T>
class Model {
public:
  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const ModelConfig& config() const { return cfg_; }

  const std::vector<std::string>& param_names() const { return names_; }

  NodePtr<T>& param(const std::string& name) {
    const auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("Model: no parameter named " + name);
    return params_[it->second];
  }

  const NodePtr<T>& param(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("Model: no parameter named " + name);
    return params_[it->second];
  }

  bool has_param(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t count_parameters() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  void add_param(const std::string& name, Tensor<T> value) {
    if (index_.count(name)) throw ConfigError("Model: duplicate parameter " + name);
    index_[name] = params_.size();
    params_.push_back(parameter<T>(std::move(value), name));
    names_.push_back(name);
  }

  /// Runs the network. `priors` may be null for baseline; multichannel
  /// concatenates them onto the input, dualbranch routes them through the
  /// auxiliary encoder whose latent is fused with the main latent. Skip
  /// connections always come from the main branch only.
  NodePtr<T> forward(NodePtr<T> corrupted, NodePtr<T> priors = nullptr) const {
    const Tensor<T>& x = corrupted->value;
    if (x.c != 1) throw ShapeError("forward: corrupted input must have 1 channel");
    const int mult = cfg_.spatial_multiple();
    if (x.h % mult != 0 || x.w % mult != 0)
      throw ShapeError("forward: spatial dims must be divisible by " + std::to_string(mult));
    if (cfg_.injection != Injection::baseline) {
      if (priors == nullptr) throw ShapeError("forward: priors required but absent");
      const Tensor<T>& p = priors->value;
      if (p.n != x.n || p.c != cfg_.n_prior || p.h != x.h || p.w != x.w)
        throw ShapeError("forward: priors must be (B, n_prior, H, W)");
    }

    if (cfg_.arch == Arch::unet) return forward_unet(corrupted, priors);
    return forward_resnet(corrupted, priors);
  }

private:
  NodePtr<T> conv_block(NodePtr<T> h, const std::string& prefix, int stride, int pad,
                        bool with_norm, bool with_relu) const {
    h = conv2d(h, param(prefix + ".w"), param(prefix + ".b"), stride, pad);
    if (with_norm && cfg_.norm == NormKind::instance)
      h = instance_norm(h, param(prefix + ".norm.g"), param(prefix + ".norm.b"));
    if (with_relu) h = relu(h);
    return h;
  }

  /// Contraction path + bottleneck. Returns the latent; fills `skips` when
  /// given (main branch only).
  NodePtr<T> unet_encoder(NodePtr<T> h, const std::string& prefix,
                          std::vector<NodePtr<T>>* skips) const {
    for (int i = 0; i < cfg_.depth; ++i) {
      const std::string enc = prefix + "enc" + std::to_string(i);
      h = conv_block(h, enc + ".conv1", 1, 1, true, true);
      h = conv_block(h, enc + ".conv2", 1, 1, true, true);
      if (skips != nullptr) skips->push_back(h);
      h = maxpool2(h);
    }
    h = conv_block(h, prefix + "bot.conv1", 1, 1, true, true);
    h = conv_block(h, prefix + "bot.conv2", 1, 1, true, true);
    return h;
  }

  NodePtr<T> forward_unet(NodePtr<T> corrupted, NodePtr<T> priors) const {
    NodePtr<T> input = corrupted;
    if (cfg_.injection == Injection::multichannel) input = concat_channels(corrupted, priors);

    std::vector<NodePtr<T>> skips;
    NodePtr<T> h = unet_encoder(input, "", &skips);

    if (cfg_.injection == Injection::dualbranch) {
      NodePtr<T> aux = unet_encoder(priors, "aux.", nullptr);
      NodePtr<T> fw = cfg_.fusion == Fusion::concat_conv ? param("fuse.w") : nullptr;
      NodePtr<T> fb = cfg_.fusion == Fusion::concat_conv ? param("fuse.b") : nullptr;
      h = fuse_latent(h, aux, cfg_.fusion, fw, fb);
    }

    for (int i = cfg_.depth - 1; i >= 0; --i) {
      const std::string dec = "dec" + std::to_string(i);
      h = upsample2(h);
      h = conv_block(h, dec + ".up", 1, 1, true, true);
      h = concat_channels(skips[static_cast<std::size_t>(i)], h);
      h = conv_block(h, dec + ".conv1", 1, 1, true, true);
      h = conv_block(h, dec + ".conv2", 1, 1, true, true);
    }
    return conv2d(h, param("out.w"), param("out.b"), 1, 0);
  }

  NodePtr<T> resnet_encoder(NodePtr<T> h, const std::string& prefix) const {
    h = conv_block(h, prefix + "down1", 2, 1, true, true);
    h = conv_block(h, prefix + "down2", 2, 1, true, true);
    return h;
  }

  NodePtr<T> forward_resnet(NodePtr<T> corrupted, NodePtr<T> priors) const {
    NodePtr<T> input = corrupted;
    if (cfg_.injection == Injection::multichannel) input = concat_channels(corrupted, priors);

    NodePtr<T> h = resnet_encoder(input, "");

    if (cfg_.injection == Injection::dualbranch) {
      NodePtr<T> aux = resnet_encoder(priors, "aux.");
      NodePtr<T> fw = cfg_.fusion == Fusion::concat_conv ? param("fuse.w") : nullptr;
      NodePtr<T> fb = cfg_.fusion == Fusion::concat_conv ? param("fuse.b") : nullptr;
      h = fuse_latent(h, aux, cfg_.fusion, fw, fb);
    }

    for (int j = 0; j < cfg_.res_blocks; ++j) {
      const std::string res = "res" + std::to_string(j);
      NodePtr<T> t = conv_block(h, res + ".conv1", 1, 1, true, true);
      t = conv_block(t, res + ".conv2", 1, 1, true, false);
      h = add(h, t);
    }

    h = upsample2(h);
    h = conv_block(h, "up1", 1, 1, true, true);
    h = upsample2(h);
    h = conv_block(h, "up2", 1, 1, true, true);
    return conv2d(h, param("out.w"), param("out.b"), 1, 1);
  }

  ModelConfig cfg_;
  std::vector<NodePtr<T>> params_;
  std::vector<std::string> names_;
  std::map<std::string, std::size_t> index_;
};

namespace model_detail {

/// Registers a conv parameter pair (+ optional norm affine pair), with
/// fan-in-scaled uniform weights and zero biases.
template <typename T>
void add_conv(Model<T>& m, Pcg32& rng, const std::string& prefix, int in_c, int out_c, int k,
              bool with_norm) {
  Tensor<T> w(out_c, in_c, k, k);
  const double bound = std::sqrt(6.0 / (static_cast<double>(in_c) * k * k));
  for (T& v : w.v) v = static_cast<T>(rng.uniform(-bound, bound));
  m.add_param(prefix + ".w", std::move(w));
  m.add_param(prefix + ".b", Tensor<T>(1, out_c, 1, 1, T(0)));
  if (with_norm) {
    m.add_param(prefix + ".norm.g", Tensor<T>(1, out_c, 1, 1, T(1)));
    m.add_param(prefix + ".norm.b", Tensor<T>(1, out_c, 1, 1, T(0)));
  }
}

template <typename T>
void add_unet_encoder(Model<T>& m, Pcg32& rng, const ModelConfig& cfg, const std::string& prefix,
                      int in_c) {
  const bool norm = cfg.norm == NormKind::instance;
  int ch = in_c;
  for (int i = 0; i < cfg.depth; ++i) {
    const int f = cfg.base_features << i;
    add_conv(m, rng, prefix + "enc" + std::to_string(i) + ".conv1", ch, f, 3, norm);
    add_conv(m, rng, prefix + "enc" + std::to_string(i) + ".conv2", f, f, 3, norm);
    ch = f;
  }
  const int fb = cfg.base_features << cfg.depth;
  add_conv(m, rng, prefix + "bot.conv1", ch, fb, 3, norm);
  add_conv(m, rng, prefix + "bot.conv2", fb, fb, 3, norm);
}

template <typename T>
void add_resnet_encoder(Model<T>& m, Pcg32& rng, const ModelConfig& cfg, const std::string& prefix,
                        int in_c) {
  const bool norm = cfg.norm == NormKind::instance;
  add_conv(m, rng, prefix + "down1", in_c, cfg.base_features, 3, norm);
  add_conv(m, rng, prefix + "down2", cfg.base_features, 2 * cfg.base_features, 3, norm);
}

} // namespace model_detail

/// Builds a model with seeded fan-in-scaled uniform initialization.
/// Parameter creation order is fixed, so equal (config, seed) pairs produce
/// bit-identical models.
template <typename T>
Model<T> build_model(const ModelConfig& cfg, std::uint64_t seed = 1) {
  cfg.validate();
  Model<T> m(cfg);
  Pcg32 rng(derive_seed(seed, "model-init"));
  const bool norm = cfg.norm == NormKind::instance;

  using model_detail::add_conv;
  if (cfg.arch == Arch::unet) {
    model_detail::add_unet_encoder(m, rng, cfg, "", cfg.in_channels());
    if (cfg.injection == Injection::dualbranch)
      model_detail::add_unet_encoder(m, rng, cfg, "aux.", cfg.n_prior);
    const int fb = cfg.base_features << cfg.depth;
    if (cfg.injection == Injection::dualbranch && cfg.fusion == Fusion::concat_conv)
      add_conv(m, rng, "fuse", 2 * fb, fb, 1, false);
    for (int i = cfg.depth - 1; i >= 0; --i) {
      const int f = cfg.base_features << i;
      const std::string dec = "dec" + std::to_string(i);
      add_conv(m, rng, dec + ".up", 2 * f, f, 3, norm);
      add_conv(m, rng, dec + ".conv1", 2 * f, f, 3, norm);
      add_conv(m, rng, dec + ".conv2", f, f, 3, norm);
    }
    add_conv(m, rng, "out", cfg.base_features, 1, 1, false);
  } else {
    model_detail::add_resnet_encoder(m, rng, cfg, "", cfg.in_channels());
    if (cfg.injection == Injection::dualbranch)
      model_detail::add_resnet_encoder(m, rng, cfg, "aux.", cfg.n_prior);
    const int latent = 2 * cfg.base_features;
    if (cfg.injection == Injection::dualbranch && cfg.fusion == Fusion::concat_conv)
      add_conv(m, rng, "fuse", 2 * latent, latent, 1, false);
    for (int j = 0; j < cfg.res_blocks; ++j) {
      add_conv(m, rng, "res" + std::to_string(j) + ".conv1", latent, latent, 3, norm);
      add_conv(m, rng, "res" + std::to_string(j) + ".conv2", latent, latent, 3, norm);
    }
    add_conv(m, rng, "up1", latent, cfg.base_features, 3, norm);
    add_conv(m, rng, "up2", cfg.base_features, cfg.base_features, 3, norm);
    add_conv(m, rng, "out", cfg.base_features, 1, 3, false);
  }
  return m;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

namespace ckpt_detail {

constexpr char MAGIC[8] = {'M', 'P', 'R', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& in, T& v, const char* what) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError(IoErrc::unreadable, std::string("checkpoint: truncated ") + what);
}

} // namespace ckpt_detail

/// Checkpoint: magic, JSON meta (model config + trainer metadata), then
/// named float32 arrays (model parameters first, optimizer state after,
/// prefixed "opt.").
inline void save_checkpoint(const std::filesystem::path& path, const Model<float>& model,
                            const nlohmann::json& extra_meta = nlohmann::json::object(),
                            const std::vector<std::pair<std::string, Tensor<float>>>& extra_blobs = {}) {
  using namespace ckpt_detail;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoErrc::write_failed, path.string());

  nlohmann::json meta = extra_meta;
  meta["config"] = model.config().to_json();
  meta["format"] = 1;
  const std::string meta_str = meta.dump();

  out.write(MAGIC, sizeof(MAGIC));
  write_pod(out, static_cast<std::uint32_t>(meta_str.size()));
  out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

  const auto& names = model.param_names();
  write_pod(out, static_cast<std::uint32_t>(names.size() + extra_blobs.size()));

  const auto write_array = [&](const std::string& name, const Tensor<float>& t) {
    write_pod(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(out, static_cast<std::int32_t>(t.n));
    write_pod(out, static_cast<std::int32_t>(t.c));
    write_pod(out, static_cast<std::int32_t>(t.h));
    write_pod(out, static_cast<std::int32_t>(t.w));
    write_pod(out, static_cast<std::uint64_t>(t.numel()));
    out.write(reinterpret_cast<const char*>(t.v.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
  };

  for (const auto& name : names) write_array(name, model.param(name)->value);
  for (const auto& [name, t] : extra_blobs) write_array("opt." + name, t);
  if (!out) throw IoError(IoErrc::write_failed, path.string());
}

struct LoadedCheckpoint {
  ModelConfig config;
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor<float>>> params;
  std::vector<std::pair<std::string, Tensor<float>>> opt_blobs;
};

inline LoadedCheckpoint read_checkpoint(const std::filesystem::path& path) {
  using namespace ckpt_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrc::unreadable, path.string());

  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, MAGIC, sizeof(MAGIC)) != 0)
    throw IoError(IoErrc::unreadable, path.string() + " is not a checkpoint");

  std::uint32_t meta_len = 0;
  read_pod(in, meta_len, "meta length");
  std::string meta_str(meta_len, '\0');
  in.read(meta_str.data(), meta_len);
  if (!in) throw IoError(IoErrc::unreadable, "checkpoint: truncated meta");

  LoadedCheckpoint ck;
  try {
    ck.meta = nlohmann::json::parse(meta_str);
    ck.config = ModelConfig::from_json(ck.meta.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoErrc::unreadable, std::string("checkpoint meta: ") + e.what());
  }

  std::uint32_t n_arrays = 0;
  read_pod(in, n_arrays, "array count");
  for (std::uint32_t i = 0; i < n_arrays; ++i) {
    std::uint16_t name_len = 0;
    read_pod(in, name_len, "name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    std::int32_t d[4];
    for (auto& x : d) read_pod(in, x, "dims");
    std::uint64_t count = 0;
    read_pod(in, count, "count");
    Tensor<float> t(d[0], d[1], d[2], d[3]);
    if (t.numel() != count) throw IoError(IoErrc::unreadable, "checkpoint: dim/count mismatch");
    in.read(reinterpret_cast<char*>(t.v.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (!in) throw IoError(IoErrc::unreadable, "checkpoint: truncated array " + name);
    if (name.rfind("opt.", 0) == 0)
      ck.opt_blobs.emplace_back(name.substr(4), std::move(t));
    else
      ck.params.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

/// Rebuilds a model from a checkpoint. Any mismatch between the stored
/// config and the stored parameter set (missing, extra, or reshaped arrays)
/// is rejected.
inline Model<float> load_model(const LoadedCheckpoint& ck) {
  Model<float> m = build_model<float>(ck.config, 0);
  if (ck.params.size() != m.param_names().size())
    throw ConfigError("checkpoint: parameter count does not match config");
  for (const auto& [name, t] : ck.params) {
    if (!m.has_param(name)) throw ConfigError("checkpoint: unexpected parameter " + name);
    auto& p = m.param(name);
    if (!p->value.same_shape(t)) throw ConfigError("checkpoint: shape mismatch for " + name);
    p->value = t;
  }
  return m;
}

inline Model<float> load_model(const std::filesystem::path& path,
                               nlohmann::json* meta_out = nullptr) {
  const LoadedCheckpoint ck = read_checkpoint(path);
  if (meta_out != nullptr) *meta_out = ck.meta;
  return load_model(ck);
}

} // namespace moprior::nn
