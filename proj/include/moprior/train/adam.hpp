#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "moprior/nn/model.hpp"

namespace moprior {

/// Adam with bias correction. Moment buffers are keyed by parameter name so
/// optimizer state can ride along in checkpoints for exact resume.
template <typename T>
class Adam {
public:
  explicit Adam(double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(lr >= 0.0)) throw ConfigError("Adam: lr must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
      throw ConfigError("Adam: betas must be in [0, 1)");
  }

  double lr() const { return lr_; }
  std::int64_t step_count() const { return t_; }

  void step(nn::Model<T>& model) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const std::string& name : model.param_names()) {
      auto& p = model.param(name);
      if (!p->grad.same_shape(p->value)) continue; // untouched by backward
      auto& m = buffer(m_, name, p->value);
      auto& v = buffer(v_, name, p->value);
      for (std::size_t i = 0; i < p->value.numel(); ++i) {
        const double g = static_cast<double>(p->grad.v[i]);
        const double mi = beta1_ * static_cast<double>(m.v[i]) + (1.0 - beta1_) * g;
        const double vi = beta2_ * static_cast<double>(v.v[i]) + (1.0 - beta2_) * g * g;
        m.v[i] = static_cast<T>(mi);
        v.v[i] = static_cast<T>(vi);
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        p->value.v[i] = static_cast<T>(static_cast<double>(p->value.v[i]) -
                                       lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  /// Serializes moments + step counter as checkpoint blobs.
  std::vector<std::pair<std::string, nn::Tensor<T>>> state_blobs() const {
    std::vector<std::pair<std::string, nn::Tensor<T>>> out;
    for (const auto& [name, t] : m_) out.emplace_back("adam.m." + name, t);
    for (const auto& [name, t] : v_) out.emplace_back("adam.v." + name, t);
    return out;
  }

  void load_state(const std::vector<std::pair<std::string, nn::Tensor<T>>>& blobs,
                  std::int64_t step_count) {
    m_.clear();
    v_.clear();
    for (const auto& [name, t] : blobs) {
      if (name.rfind("adam.m.", 0) == 0) m_[name.substr(7)] = t;
      else if (name.rfind("adam.v.", 0) == 0) v_[name.substr(7)] = t;
    }
    t_ = step_count;
  }

private:
  nn::Tensor<T>& buffer(std::map<std::string, nn::Tensor<T>>& store, const std::string& name,
                        const nn::Tensor<T>& like) {
    auto it = store.find(name);
    if (it == store.end()) it = store.emplace(name, nn::Tensor<T>::zeros_like(like)).first;
    else if (!it->second.same_shape(like))
      throw ConfigError("Adam: stale state shape for " + name);
    return it->second;
  }

  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::map<std::string, nn::Tensor<T>> m_, v_;
};

} // namespace moprior
