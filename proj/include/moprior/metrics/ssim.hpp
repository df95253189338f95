#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "moprior/core/error.hpp"
#include "moprior/core/image.hpp"

namespace moprior {

/// Standard SSIM constants: 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range L (1.0 for normalized images).
struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }

  void validate() const {
    if (window < 1 || window % 2 == 0) throw ConfigError("SsimParams: window must be odd and >= 1");
    if (!(sigma > 0.0)) throw ConfigError("SsimParams: sigma must be positive");
    if (!(k1 > 0.0 && k2 > 0.0 && dynamic_range > 0.0))
      throw ConfigError("SsimParams: K1, K2, L must be positive");
  }
};

/// Normalized 1D Gaussian window (weights sum to 1).
inline std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double c = 0.5 * (size - 1);
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = (i - c) / sigma;
    w[static_cast<std::size_t>(i)] = std::exp(-0.5 * d * d);
    sum += w[static_cast<std::size_t>(i)];
  }
  for (double& x : w) x /= sum;
  return w;
}

/// Mirror boundary handling without edge repetition: -1 -> 1, n -> n-2.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n - 2;
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

namespace ssim_detail {

inline Image2D<double> blur_rows(const Image2D<double>& in, const std::vector<double>& k) {
  const int r = static_cast<int>(k.size()) / 2;
  Image2D<double> out(in.height, in.width);
  for (int y = 0; y < in.height; ++y) {
    const double* src = in.row(y);
    double* dst = out.row(y);
    for (int x = 0; x < in.width; ++x) {
      double acc = 0.0;
      for (int t = 0; t < static_cast<int>(k.size()); ++t)
        acc += k[static_cast<std::size_t>(t)] * src[reflect_index(x + t - r, in.width)];
      dst[x] = acc;
    }
  }
  return out;
}

inline Image2D<double> blur_cols(const Image2D<double>& in, const std::vector<double>& k) {
  const int r = static_cast<int>(k.size()) / 2;
  Image2D<double> out(in.height, in.width);
  for (int y = 0; y < in.height; ++y) {
    double* dst = out.row(y);
    for (int t = 0; t < static_cast<int>(k.size()); ++t) {
      const double w = k[static_cast<std::size_t>(t)];
      const double* src = in.row(reflect_index(y + t - r, in.height));
      if (t == 0)
        for (int x = 0; x < in.width; ++x) dst[x] = w * src[x];
      else
        for (int x = 0; x < in.width; ++x) dst[x] += w * src[x];
    }
  }
  return out;
}

inline Image2D<double> gauss_blur(const Image2D<double>& in, const std::vector<double>& k) {
  return blur_cols(blur_rows(in, k), k);
}

} // namespace ssim_detail

struct SsimResult {
  double mean = 0.0;
  Image2D<double> map;
};

/// Windowed SSIM with Gaussian-weighted local statistics and reflect
/// boundary handling. Returns the full map plus its unweighted average.
/// All arithmetic is double regardless of the input scalar type.
template <typename T>
SsimResult ssim(const Image2D<T>& x, const Image2D<T>& y, const SsimParams& p = {}) {
  p.validate();
  if (!x.same_shape(y)) throw ShapeError("ssim: shape mismatch");
  if (x.height < 2 || x.width < 2) throw ShapeError("ssim: images must be at least 2x2");

  const std::vector<double> win = gaussian_window(p.window, p.sigma);
  const Image2D<double> xd = image_cast<double>(x);
  const Image2D<double> yd = image_cast<double>(y);

  using ssim_detail::gauss_blur;
  const Image2D<double> mu_x = gauss_blur(xd, win);
  const Image2D<double> mu_y = gauss_blur(yd, win);

  Image2D<double> xx(x.height, x.width);
  Image2D<double> yy(x.height, x.width);
  Image2D<double> xy(x.height, x.width);
  for (std::size_t i = 0; i < xd.data.size(); ++i) {
    xx.data[i] = xd.data[i] * xd.data[i];
    yy.data[i] = yd.data[i] * yd.data[i];
    xy.data[i] = xd.data[i] * yd.data[i];
  }
  const Image2D<double> e_xx = gauss_blur(xx, win);
  const Image2D<double> e_yy = gauss_blur(yy, win);
  const Image2D<double> e_xy = gauss_blur(xy, win);

  const double c1 = p.c1();
  const double c2 = p.c2();

  SsimResult res;
  res.map = Image2D<double>(x.height, x.width);
  double sum = 0.0;
  for (std::size_t i = 0; i < xd.data.size(); ++i) {
    const double mx = mu_x.data[i];
    const double my = mu_y.data[i];
    const double var_x = e_xx.data[i] - mx * mx;
    const double var_y = e_yy.data[i] - my * my;
    const double cov = e_xy.data[i] - mx * my;
    const double v = ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
                     ((mx * mx + my * my + c1) * (var_x + var_y + c2));
    res.map.data[i] = v;
    sum += v;
  }
  res.mean = sum / static_cast<double>(res.map.data.size());
  return res;
}

template <typename T>
double ssim_mean(const Image2D<T>& x, const Image2D<T>& y, const SsimParams& p = {}) {
  return ssim(x, y, p).mean;
}

} // namespace moprior
