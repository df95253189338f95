#pragma once

#include <complex>
#include <numbers>
#include <vector>

#include "moprior/core/error.hpp"
#include "moprior/core/image.hpp"

namespace moprior {

using cplx = std::complex<double>;
using KSpace = Image2D<cplx>;

namespace fft_detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// Iterative radix-2 Cooley-Tukey, unnormalized in both directions.
/// Forward uses exp(-2*pi*i*k*j/n).
inline void radix2(std::vector<cplx>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(len);
    const cplx wlen = std::polar(1.0, ang);
    for (std::size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const cplx u = a[i + k];
        const cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

/// Bluestein chirp-z transform for arbitrary lengths. Quadratic phases are
/// reduced mod 2n before the sine/cosine so long transforms keep precision.
inline void bluestein(std::vector<cplx>& a, bool inverse) {
  const std::size_t n = a.size();
  std::size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;

  const double sign = inverse ? 1.0 : -1.0;
  std::vector<cplx> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t k2 = (k * k) % (2 * n);
    const double ang = sign * std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
    chirp[k] = std::polar(1.0, ang);
  }

  std::vector<cplx> fa(m, cplx(0.0, 0.0));
  std::vector<cplx> fb(m, cplx(0.0, 0.0));
  for (std::size_t k = 0; k < n; ++k) fa[k] = a[k] * chirp[k];
  fb[0] = std::conj(chirp[0]);
  for (std::size_t k = 1; k < n; ++k) fb[k] = fb[m - k] = std::conj(chirp[k]);

  radix2(fa, false);
  radix2(fb, false);
  for (std::size_t i = 0; i < m; ++i) fa[i] *= fb[i];
  radix2(fa, true);

  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < n; ++k) a[k] = fa[k] * inv_m * chirp[k];
}

} // namespace fft_detail

/// In-place unnormalized DFT of arbitrary length (radix-2 when possible,
/// Bluestein otherwise). The inverse here is unnormalized too; 2D wrappers
/// apply the 1/N scaling.
inline void fft_unnormalized(std::vector<cplx>& a, bool inverse) {
  if (a.size() <= 1) return;
  if (fft_detail::is_pow2(a.size()))
    fft_detail::radix2(a, inverse);
  else
    fft_detail::bluestein(a, inverse);
}

namespace fft_detail {

inline void transform_rows(KSpace& k, bool inverse) {
  std::vector<cplx> buf(static_cast<std::size_t>(k.width));
  for (int r = 0; r < k.height; ++r) {
    cplx* row = k.row(r);
    buf.assign(row, row + k.width);
    fft_unnormalized(buf, inverse);
    std::copy(buf.begin(), buf.end(), row);
  }
}

inline void transform_cols(KSpace& k, bool inverse) {
  std::vector<cplx> buf(static_cast<std::size_t>(k.height));
  for (int c = 0; c < k.width; ++c) {
    for (int r = 0; r < k.height; ++r) buf[static_cast<std::size_t>(r)] = k.at(r, c);
    fft_unnormalized(buf, inverse);
    for (int r = 0; r < k.height; ++r) k.at(r, c) = buf[static_cast<std::size_t>(r)];
  }
}

} // namespace fft_detail

/// Forward 2D DFT, unnormalized.
template <typename T>
KSpace fft_2d(const Image2D<T>& img) {
  KSpace k(img.height, img.width);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    k.data[i] = cplx(static_cast<double>(img.data[i]), 0.0);
  fft_detail::transform_rows(k, false);
  fft_detail::transform_cols(k, false);
  return k;
}

inline KSpace fft_2d(const KSpace& in) {
  KSpace k = in;
  fft_detail::transform_rows(k, false);
  fft_detail::transform_cols(k, false);
  return k;
}

/// Inverse 2D DFT, scaled by 1/(h*w).
inline KSpace ifft_2d(const KSpace& in) {
  KSpace k = in;
  fft_detail::transform_rows(k, true);
  fft_detail::transform_cols(k, true);
  const double scale = 1.0 / (static_cast<double>(k.height) * static_cast<double>(k.width));
  for (cplx& v : k.data) v *= scale;
  return k;
}

inline Image2D<double> magnitude(const KSpace& k) {
  Image2D<double> out(k.height, k.width);
  for (std::size_t i = 0; i < k.data.size(); ++i) out.data[i] = std::abs(k.data[i]);
  return out;
}

inline double kspace_energy(const KSpace& k) {
  double e = 0.0;
  for (const cplx& v : k.data) e += std::norm(v);
  return e;
}

} // namespace moprior
