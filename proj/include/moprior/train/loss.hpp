#pragma once

#include <string>

#include "moprior/metrics/ssim.hpp"
#include "moprior/nn/ops.hpp"

namespace moprior {

enum class LossKind { l1, l2, one_minus_ssim };

inline const char* to_string(LossKind k) {
  switch (k) {
  case LossKind::l1: return "l1";
  case LossKind::l2: return "l2";
  case LossKind::one_minus_ssim: return "one_minus_ssim";
  }
  return "l1";
}

inline LossKind loss_from_string(const std::string& s) {
  if (s == "l1") return LossKind::l1;
  if (s == "l2") return LossKind::l2;
  if (s == "one_minus_ssim") return LossKind::one_minus_ssim;
  throw ConfigError("unknown loss: " + s);
}

/// Differentiable SSIM built from autograd ops: Gaussian-window local
/// statistics with reflect boundaries, same constants as the metric.
/// Returns the scalar mean of the SSIM map over the whole batch.
template <typename T>
nn::NodePtr<T> ssim_mean_graph(nn::NodePtr<T> x, nn::NodePtr<T> y, const SsimParams& p = {}) {
  using namespace nn;
  p.validate();
  if (!x->value.same_shape(y->value)) throw ShapeError("ssim_mean_graph: shape mismatch");
  const std::vector<double> win = gaussian_window(p.window, p.sigma);
  const double c1 = p.c1();
  const double c2 = p.c2();

  auto mu_x = blur_fixed(x, win);
  auto mu_y = blur_fixed(y, win);
  auto e_xx = blur_fixed(mul(x, x), win);
  auto e_yy = blur_fixed(mul(y, y), win);
  auto e_xy = blur_fixed(mul(x, y), win);

  auto mu_xx = mul(mu_x, mu_x);
  auto mu_yy = mul(mu_y, mu_y);
  auto mu_xy = mul(mu_x, mu_y);

  auto var_x = sub(e_xx, mu_xx);
  auto var_y = sub(e_yy, mu_yy);
  auto cov = sub(e_xy, mu_xy);

  auto num = mul(add_scalar(mul_scalar(mu_xy, 2.0), c1), add_scalar(mul_scalar(cov, 2.0), c2));
  auto den = mul(add_scalar(add(mu_xx, mu_yy), c1), add_scalar(add(var_x, var_y), c2));
  return mean_all(div(num, den));
}

/// Scalar training loss. l1/l2 are plain means over all elements;
/// one_minus_ssim reuses the SSIM graph (range [0, 2]).
template <typename T>
nn::NodePtr<T> compute_loss(nn::NodePtr<T> pred, nn::NodePtr<T> target, LossKind kind,
                            const SsimParams& ssim_params = {}) {
  using namespace nn;
  if (!pred->value.same_shape(target->value)) throw ShapeError("compute_loss: shape mismatch");
  switch (kind) {
  case LossKind::l1: return mean_all(absval(sub(pred, target)));
  case LossKind::l2: {
    auto d = sub(pred, target);
    return mean_all(mul(d, d));
  }
  case LossKind::one_minus_ssim:
    return add_scalar(mul_scalar(ssim_mean_graph(pred, target, ssim_params), -1.0), 1.0);
  }
  throw ConfigError("compute_loss: bad loss kind");
}

} // namespace moprior
