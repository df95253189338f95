#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "moprior/metrics/ssim.hpp" // reflect_index shared with the metric
#include "moprior/nn/tensor.hpp"

namespace moprior::nn {

namespace op_detail {

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b)) throw ShapeError(std::string(what) + ": shape mismatch");
}

} // namespace op_detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T>
NodePtr<T> add(NodePtr<T> a, NodePtr<T> b) {
  op_detail::check_same_shape(a->value, b->value, "add");
  Tensor<T> out = a->value;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += b->value.v[i];
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (int s = 0; s < 2; ++s) {
      auto& p = self.parents[static_cast<std::size_t>(s)];
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.v.size(); ++i) p->grad.v[i] += self.grad.v[i];
    }
  });
}

template <typename T>
NodePtr<T> sub(NodePtr<T> a, NodePtr<T> b) {
  op_detail::check_same_shape(a->value, b->value, "sub");
  Tensor<T> out = a->value;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] -= b->value.v[i];
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
    auto& a_ = self.parents[0];
    auto& b_ = self.parents[1];
    if (a_->requires_grad) {
      a_->ensure_grad();
      for (std::size_t i = 0; i < self.grad.v.size(); ++i) a_->grad.v[i] += self.grad.v[i];
    }
    if (b_->requires_grad) {
      b_->ensure_grad();
      for (std::size_t i = 0; i < self.grad.v.size(); ++i) b_->grad.v[i] -= self.grad.v[i];
    }
  });
}

template <typename T>
NodePtr<T> mul(NodePtr<T> a, NodePtr<T> b) {
  op_detail::check_same_shape(a->value, b->value, "mul");
  Tensor<T> out = a->value;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b->value.v[i];
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
    auto& a_ = self.parents[0];
    auto& b_ = self.parents[1];
    if (a_->requires_grad) {
      a_->ensure_grad();
      for (std::size_t i = 0; i < self.grad.v.size(); ++i)
        a_->grad.v[i] += self.grad.v[i] * b_->value.v[i];
    }
    if (b_->requires_grad) {
      b_->ensure_grad();
      for (std::size_t i = 0; i < self.grad.v.size(); ++i)
        b_->grad.v[i] += self.grad.v[i] * a_->value.v[i];
    }
  });
}

template <typename T>
NodePtr<T> div(NodePtr<T> a, NodePtr<T> b) {
  op_detail::check_same_shape(a->value, b->value, "div");
  Tensor<T> out = a->value;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] /= b->value.v[i];
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
    auto& a_ = self.parents[0];
    auto& b_ = self.parents[1];
    if (a_->requires_grad) {
      a_->ensure_grad();
      for (std::size_t i = 0; i < self.grad.v.size(); ++i)
        a_->grad.v[i] += self.grad.v[i] / b_->value.v[i];
    }
    if (b_->requires_grad) {
      b_->ensure_grad();
      for (std::size_t i = 0; i < self.grad.v.size(); ++i)
        b_->grad.v[i] -= self.grad.v[i] * self.value.v[i] / b_->value.v[i];
    }
  });
}

template <typename T>
NodePtr<T> add_scalar(NodePtr<T> a, double s) {
  Tensor<T> out = a->value;
  for (T& x : out.v) x += static_cast<T>(s);
  return make_op<T>(std::move(out), {a}, [](Node<T>& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < self.grad.v.size(); ++i) p->grad.v[i] += self.grad.v[i];
  });
}

template <typename T>
NodePtr<T> mul_scalar(NodePtr<T> a, double s) {
  Tensor<T> out = a->value;
  for (T& x : out.v) x *= static_cast<T>(s);
  return make_op<T>(std::move(out), {a}, [s](Node<T>& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < self.grad.v.size(); ++i)
      p->grad.v[i] += self.grad.v[i] * static_cast<T>(s);
  });
}

template <typename T>
NodePtr<T> relu(NodePtr<T> a) {
  Tensor<T> out = a->value;
  for (T& x : out.v) x = std::max(x, T(0));
  return make_op<T>(std::move(out), {a}, [](Node<T>& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < self.grad.v.size(); ++i)
      if (p->value.v[i] > T(0)) p->grad.v[i] += self.grad.v[i];
  });
}

template <typename T>
NodePtr<T> absval(NodePtr<T> a) {
  Tensor<T> out = a->value;
  for (T& x : out.v) x = std::abs(x);
  return make_op<T>(std::move(out), {a}, [](Node<T>& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < self.grad.v.size(); ++i) {
      const T x = p->value.v[i];
      if (x > T(0)) p->grad.v[i] += self.grad.v[i];
      else if (x < T(0)) p->grad.v[i] -= self.grad.v[i];
    }
  });
}

// ---------------------------------------------------------------------------
// structure
// ---------------------------------------------------------------------------

template <typename T>
NodePtr<T> concat_channels(NodePtr<T> a, NodePtr<T> b) {
  const Tensor<T>& av = a->value;
  const Tensor<T>& bv = b->value;
  if (av.n != bv.n || av.h != bv.h || av.w != bv.w)
    throw ShapeError("concat_channels: batch/spatial mismatch");
  Tensor<T> out(av.n, av.c + bv.c, av.h, av.w);
  const std::size_t plane = static_cast<std::size_t>(av.h) * av.w;
  for (int ni = 0; ni < av.n; ++ni) {
    for (int ci = 0; ci < av.c; ++ci)
      std::copy(av.plane(ni, ci), av.plane(ni, ci) + plane, out.plane(ni, ci));
    for (int ci = 0; ci < bv.c; ++ci)
      std::copy(bv.plane(ni, ci), bv.plane(ni, ci) + plane, out.plane(ni, av.c + ci));
  }
  const int ca = av.c;
  return make_op<T>(std::move(out), {a, b}, [ca, plane](Node<T>& self) {
    auto& a_ = self.parents[0];
    auto& b_ = self.parents[1];
    const Tensor<T>& g = self.grad;
    if (a_->requires_grad) {
      a_->ensure_grad();
      for (int ni = 0; ni < a_->value.n; ++ni)
        for (int ci = 0; ci < ca; ++ci) {
          const T* src = g.plane(ni, ci);
          T* dst = a_->grad.plane(ni, ci);
          for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
        }
    }
    if (b_->requires_grad) {
      b_->ensure_grad();
      for (int ni = 0; ni < b_->value.n; ++ni)
        for (int ci = 0; ci < b_->value.c; ++ci) {
          const T* src = g.plane(ni, ca + ci);
          T* dst = b_->grad.plane(ni, ci);
          for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
        }
    }
  });
}

template <typename T>
NodePtr<T> maxpool2(NodePtr<T> a) {
  const Tensor<T>& x = a->value;
  if (x.h % 2 != 0 || x.w % 2 != 0) throw ShapeError("maxpool2: spatial dims must be even");
  const int oh = x.h / 2;
  const int ow = x.w / 2;
  Tensor<T> out(x.n, x.c, oh, ow);
  std::vector<std::uint32_t> argmax(out.numel());
  std::size_t oi = 0;
  for (int ni = 0; ni < x.n; ++ni) {
    for (int ci = 0; ci < x.c; ++ci) {
      const T* in = x.plane(ni, ci);
      T* dst = out.plane(ni, ci);
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++oi) {
          const int iy = 2 * oy;
          const int ix = 2 * ox;
          std::uint32_t best = static_cast<std::uint32_t>(iy * x.w + ix);
          T bv = in[best];
          const std::uint32_t cands[3] = {static_cast<std::uint32_t>(iy * x.w + ix + 1),
                                          static_cast<std::uint32_t>((iy + 1) * x.w + ix),
                                          static_cast<std::uint32_t>((iy + 1) * x.w + ix + 1)};
          for (const std::uint32_t cand : cands)
            if (in[cand] > bv) {
              bv = in[cand];
              best = cand;
            }
          dst[oy * ow + ox] = bv;
          argmax[oi] = best;
        }
      }
    }
  }
  return make_op<T>(std::move(out), {a}, [argmax = std::move(argmax)](Node<T>& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    const Tensor<T>& g = self.grad;
    std::size_t oi = 0;
    for (int ni = 0; ni < p->value.n; ++ni)
      for (int ci = 0; ci < p->value.c; ++ci) {
        T* gin = p->grad.plane(ni, ci);
        const T* gout = g.plane(ni, ci);
        const std::size_t plane = static_cast<std::size_t>(g.h) * g.w;
        for (std::size_t i = 0; i < plane; ++i, ++oi) gin[argmax[oi]] += gout[i];
      }
  });
}

template <typename T>
NodePtr<T> upsample2(NodePtr<T> a) {
  const Tensor<T>& x = a->value;
  Tensor<T> out(x.n, x.c, x.h * 2, x.w * 2);
  for (int ni = 0; ni < x.n; ++ni)
    for (int ci = 0; ci < x.c; ++ci) {
      const T* in = x.plane(ni, ci);
      T* dst = out.plane(ni, ci);
      for (int oy = 0; oy < out.h; ++oy) {
        const T* irow = in + (oy / 2) * x.w;
        T* orow = dst + static_cast<std::size_t>(oy) * out.w;
        for (int ox = 0; ox < out.w; ++ox) orow[ox] = irow[ox / 2];
      }
    }
  return make_op<T>(std::move(out), {a}, [](Node<T>& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    const Tensor<T>& g = self.grad;
    for (int ni = 0; ni < p->value.n; ++ni)
      for (int ci = 0; ci < p->value.c; ++ci) {
        T* gin = p->grad.plane(ni, ci);
        const T* gout = g.plane(ni, ci);
        for (int oy = 0; oy < g.h; ++oy) {
          T* grow = gin + (oy / 2) * p->value.w;
          const T* gorow = gout + static_cast<std::size_t>(oy) * g.w;
          for (int ox = 0; ox < g.w; ++ox) grow[ox / 2] += gorow[ox];
        }
      }
  });
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

namespace op_detail {

inline int conv_out_extent(int in, int k, int stride, int pad) {
  const int span = in + 2 * pad - k;
  if (span < 0) throw ShapeError("conv2d: kernel larger than padded input");
  return span / stride + 1;
}

/// Valid output range along one axis for kernel tap offset `k - pad`.
inline void conv_tap_range(int in, int stride, int pad, int k, int out_extent, int& lo, int& hi) {
  const int off = k - pad; // input index = out*stride + off
  lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  const int max_in = in - 1 - off;
  hi = max_in < 0 ? -1 : std::min(out_extent - 1, max_in / stride);
}

/// Accumulating 3x3 stencil with implicit zero padding of 1: the workhorse
/// behind stride-1 3x3 convolutions and their data gradients (which are the
/// same stencil with a flipped kernel). Single pass per output row keeps the
/// inner loop vectorizable.
template <typename T>
void stencil3x3_accum(const T* __restrict in, T* __restrict out, int h, int w,
                      const T* __restrict k) {
  const T k00 = k[0], k01 = k[1], k02 = k[2];
  const T k10 = k[3], k11 = k[4], k12 = k[5];
  const T k20 = k[6], k21 = k[7], k22 = k[8];
  for (int oy = 0; oy < h; ++oy) {
    const T* __restrict r0 = oy > 0 ? in + static_cast<std::size_t>(oy - 1) * w : nullptr;
    const T* __restrict r1 = in + static_cast<std::size_t>(oy) * w;
    const T* __restrict r2 = oy + 1 < h ? in + static_cast<std::size_t>(oy + 1) * w : nullptr;
    T* __restrict o = out + static_cast<std::size_t>(oy) * w;

    if (r0 != nullptr && r2 != nullptr) {
      for (int ox = 1; ox + 1 < w; ++ox)
        o[ox] += k00 * r0[ox - 1] + k01 * r0[ox] + k02 * r0[ox + 1] + k10 * r1[ox - 1] +
                 k11 * r1[ox] + k12 * r1[ox + 1] + k20 * r2[ox - 1] + k21 * r2[ox] +
                 k22 * r2[ox + 1];
    } else if (r0 == nullptr && r2 != nullptr) {
      for (int ox = 1; ox + 1 < w; ++ox)
        o[ox] += k10 * r1[ox - 1] + k11 * r1[ox] + k12 * r1[ox + 1] + k20 * r2[ox - 1] +
                 k21 * r2[ox] + k22 * r2[ox + 1];
    } else if (r0 != nullptr) {
      for (int ox = 1; ox + 1 < w; ++ox)
        o[ox] += k00 * r0[ox - 1] + k01 * r0[ox] + k02 * r0[ox + 1] + k10 * r1[ox - 1] +
                 k11 * r1[ox] + k12 * r1[ox + 1];
    } else {
      for (int ox = 1; ox + 1 < w; ++ox)
        o[ox] += k10 * r1[ox - 1] + k11 * r1[ox] + k12 * r1[ox + 1];
    }

    const auto row_taps = [w](const T* r, T kl, T kc, T kr, int ox) -> T {
      if (r == nullptr) return T(0);
      T acc = kc * r[ox];
      if (ox > 0) acc += kl * r[ox - 1];
      if (ox + 1 < w) acc += kr * r[ox + 1];
      return acc;
    };
    o[0] += row_taps(r0, k00, k01, k02, 0) + row_taps(r1, k10, k11, k12, 0) +
            row_taps(r2, k20, k21, k22, 0);
    if (w > 1)
      o[w - 1] += row_taps(r0, k00, k01, k02, w - 1) + row_taps(r1, k10, k11, k12, w - 1) +
                  row_taps(r2, k20, k21, k22, w - 1);
  }
}

/// Dot product over a contiguous span. The simd reduction reassociates the
/// sum in a fixed per-build order, so results stay run-to-run identical.
template <typename T>
double dot_span(const T* __restrict a, const T* __restrict b, int len) {
  T s = T(0);
#pragma omp simd reduction(+ : s)
  for (int i = 0; i < len; ++i) s += a[i] * b[i];
  return static_cast<double>(s);
}

} // namespace op_detail

/// 2D cross-correlation with bias: x (N,IC,H,W) * w (OC,IC,KH,KW) + b (1,OC,1,1).
template <typename T>
NodePtr<T> conv2d(NodePtr<T> x, NodePtr<T> w, NodePtr<T> b, int stride = 1, int pad = 0) {
  const Tensor<T>& xv = x->value;
  const Tensor<T>& wv = w->value;
  const Tensor<T>& bv = b->value;
  if (xv.c != wv.c) throw ShapeError("conv2d: input channels do not match kernel");
  if (bv.n != 1 || bv.c != wv.n || bv.h != 1 || bv.w != 1)
    throw ShapeError("conv2d: bias must be (1, OC, 1, 1)");
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");

  const int oh = op_detail::conv_out_extent(xv.h, wv.h, stride, pad);
  const int ow = op_detail::conv_out_extent(xv.w, wv.w, stride, pad);
  Tensor<T> out(xv.n, wv.n, oh, ow);

  for (int ni = 0; ni < xv.n; ++ni) {
    for (int oc = 0; oc < wv.n; ++oc) {
      T* dst = out.plane(ni, oc);
      const T bias = bv.v[static_cast<std::size_t>(oc)];
      std::fill(dst, dst + static_cast<std::size_t>(oh) * ow, bias);
      for (int ic = 0; ic < xv.c; ++ic) {
        const T* in = xv.plane(ni, ic);
        const T* ker = wv.plane(oc, ic);
        if (stride == 1 && pad == 1 && wv.h == 3 && wv.w == 3) {
          op_detail::stencil3x3_accum(in, dst, xv.h, xv.w, ker);
          continue;
        }
        for (int ky = 0; ky < wv.h; ++ky) {
          for (int kx = 0; kx < wv.w; ++kx) {
            const T kv = ker[ky * wv.w + kx];
            if (kv == T(0)) continue;
            int oy_lo, oy_hi, ox_lo, ox_hi;
            op_detail::conv_tap_range(xv.h, stride, pad, ky, oh, oy_lo, oy_hi);
            op_detail::conv_tap_range(xv.w, stride, pad, kx, ow, ox_lo, ox_hi);
            for (int oy = oy_lo; oy <= oy_hi; ++oy) {
              const T* __restrict irow =
                  in + static_cast<std::size_t>(oy * stride + ky - pad) * xv.w + (kx - pad);
              T* __restrict orow = dst + static_cast<std::size_t>(oy) * ow;
              if (stride == 1) {
                for (int ox = ox_lo; ox <= ox_hi; ++ox) orow[ox] += kv * irow[ox];
              } else {
                for (int ox = ox_lo; ox <= ox_hi; ++ox)
                  orow[ox] += kv * irow[static_cast<std::size_t>(ox) * stride];
              }
            }
          }
        }
      }
    }
  }

  const int s = stride;
  const int p = pad;
  return make_op<T>(std::move(out), {x, w, b}, [s, p](Node<T>& self) {
    auto& x_ = self.parents[0];
    auto& w_ = self.parents[1];
    auto& b_ = self.parents[2];
    const Tensor<T>& xv = x_->value;
    const Tensor<T>& wv = w_->value;
    const Tensor<T>& g = self.grad;

    if (b_->requires_grad) {
      b_->ensure_grad();
      for (int oc = 0; oc < wv.n; ++oc) {
        double acc = 0.0;
        for (int ni = 0; ni < g.n; ++ni) {
          const T* gp = g.plane(ni, oc);
          const std::size_t plane = static_cast<std::size_t>(g.h) * g.w;
          for (std::size_t i = 0; i < plane; ++i) acc += static_cast<double>(gp[i]);
        }
        b_->grad.v[static_cast<std::size_t>(oc)] += static_cast<T>(acc);
      }
    }

    if (w_->requires_grad) {
      w_->ensure_grad();
      for (int oc = 0; oc < wv.n; ++oc) {
        for (int ic = 0; ic < wv.c; ++ic) {
          T* gk = w_->grad.plane(oc, ic);
          if (s == 1 && p == 1 && wv.h == 3 && wv.w == 3) {
            // all nine taps in one sweep per row pair
            double acc[9] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
            for (int ni = 0; ni < xv.n; ++ni) {
              const T* in = xv.plane(ni, ic);
              const T* gp = g.plane(ni, oc);
              for (int oy = 0; oy < g.h; ++oy) {
                const T* __restrict grow = gp + static_cast<std::size_t>(oy) * g.w;
                for (int ky = 0; ky < 3; ++ky) {
                  const int iy = oy + ky - 1;
                  if (iy < 0 || iy >= xv.h) continue;
                  const T* __restrict irow = in + static_cast<std::size_t>(iy) * xv.w;
                  T s0 = T(0), s1 = T(0), s2 = T(0);
#pragma omp simd reduction(+ : s0, s1, s2)
                  for (int ox = 1; ox < g.w - 1; ++ox) {
                    const T gg = grow[ox];
                    s0 += gg * irow[ox - 1];
                    s1 += gg * irow[ox];
                    s2 += gg * irow[ox + 1];
                  }
                  s1 += grow[0] * irow[0];
                  if (g.w > 1) {
                    s2 += grow[0] * irow[1];
                    s0 += grow[g.w - 1] * irow[g.w - 2];
                    s1 += grow[g.w - 1] * irow[g.w - 1];
                  }
                  acc[ky * 3 + 0] += static_cast<double>(s0);
                  acc[ky * 3 + 1] += static_cast<double>(s1);
                  acc[ky * 3 + 2] += static_cast<double>(s2);
                }
              }
            }
            for (int i = 0; i < 9; ++i) gk[i] += static_cast<T>(acc[i]);
            continue;
          }
          for (int ky = 0; ky < wv.h; ++ky) {
            for (int kx = 0; kx < wv.w; ++kx) {
              int oy_lo, oy_hi, ox_lo, ox_hi;
              op_detail::conv_tap_range(xv.h, s, p, ky, g.h, oy_lo, oy_hi);
              op_detail::conv_tap_range(xv.w, s, p, kx, g.w, ox_lo, ox_hi);
              double acc = 0.0;
              for (int ni = 0; ni < xv.n; ++ni) {
                const T* in = xv.plane(ni, ic);
                const T* gp = g.plane(ni, oc);
                for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                  const T* irow = in + static_cast<std::size_t>(oy * s + ky - p) * xv.w + (kx - p);
                  const T* grow = gp + static_cast<std::size_t>(oy) * g.w;
                  if (s == 1) {
                    acc += op_detail::dot_span(irow + ox_lo, grow + ox_lo, ox_hi - ox_lo + 1);
                  } else {
                    for (int ox = ox_lo; ox <= ox_hi; ++ox)
                      acc += static_cast<double>(irow[static_cast<std::size_t>(ox) * s]) *
                             static_cast<double>(grow[ox]);
                  }
                }
              }
              gk[ky * wv.w + kx] += static_cast<T>(acc);
            }
          }
        }
      }
    }

    if (x_->requires_grad) {
      x_->ensure_grad();
      for (int ni = 0; ni < xv.n; ++ni) {
        for (int ic = 0; ic < xv.c; ++ic) {
          T* gin = x_->grad.plane(ni, ic);
          for (int oc = 0; oc < wv.n; ++oc) {
            const T* ker = wv.plane(oc, ic);
            const T* gp = g.plane(ni, oc);
            if (s == 1 && p == 1 && wv.h == 3 && wv.w == 3) {
              // data gradient of a same-size 3x3 conv: stencil with the
              // kernel rotated 180 degrees
              T flipped[9];
              for (int i = 0; i < 9; ++i) flipped[i] = ker[8 - i];
              op_detail::stencil3x3_accum(gp, gin, xv.h, xv.w, flipped);
              continue;
            }
            for (int ky = 0; ky < wv.h; ++ky) {
              for (int kx = 0; kx < wv.w; ++kx) {
                const T kv = ker[ky * wv.w + kx];
                if (kv == T(0)) continue;
                int oy_lo, oy_hi, ox_lo, ox_hi;
                op_detail::conv_tap_range(xv.h, s, p, ky, g.h, oy_lo, oy_hi);
                op_detail::conv_tap_range(xv.w, s, p, kx, g.w, ox_lo, ox_hi);
                for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                  T* __restrict grow_in =
                      gin + static_cast<std::size_t>(oy * s + ky - p) * xv.w + (kx - p);
                  const T* __restrict grow = gp + static_cast<std::size_t>(oy) * g.w;
                  if (s == 1) {
                    for (int ox = ox_lo; ox <= ox_hi; ++ox) grow_in[ox] += kv * grow[ox];
                  } else {
                    for (int ox = ox_lo; ox <= ox_hi; ++ox)
                      grow_in[static_cast<std::size_t>(ox) * s] += kv * grow[ox];
                  }
                }
              }
            }
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// fixed-kernel separable blur (depthwise, reflect padding)
// ---------------------------------------------------------------------------

namespace op_detail {

template <typename T>
void blur_plane(const T* in, T* out, int h, int w, const std::vector<double>& k,
                std::vector<double>& tmp) {
  const int r = static_cast<int>(k.size()) / 2;
  tmp.resize(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    const T* src = in + static_cast<std::size_t>(y) * w;
    double* dst = tmp.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int t = 0; t < static_cast<int>(k.size()); ++t)
        acc += k[static_cast<std::size_t>(t)] * static_cast<double>(src[reflect_index(x + t - r, w)]);
      dst[x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    T* dst = out + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int t = 0; t < static_cast<int>(k.size()); ++t)
        acc += k[static_cast<std::size_t>(t)] *
               tmp[static_cast<std::size_t>(reflect_index(y + t - r, h)) * w + x];
      dst[x] = static_cast<T>(acc);
    }
  }
}

/// Exact adjoint of blur_plane: scatter with the same reflect mapping,
/// column pass first (reverse order of the forward composition).
template <typename T>
void blur_plane_adjoint(const T* gout, T* gin_accum, int h, int w, const std::vector<double>& k,
                        std::vector<double>& tmp) {
  const int r = static_cast<int>(k.size()) / 2;
  tmp.assign(static_cast<std::size_t>(h) * w, 0.0);
  // adjoint of the column pass
  for (int y = 0; y < h; ++y) {
    const T* src = gout + static_cast<std::size_t>(y) * w;
    for (int t = 0; t < static_cast<int>(k.size()); ++t) {
      const double kv = k[static_cast<std::size_t>(t)];
      double* dst = tmp.data() + static_cast<std::size_t>(reflect_index(y + t - r, h)) * w;
      for (int x = 0; x < w; ++x) dst[x] += kv * static_cast<double>(src[x]);
    }
  }
  // adjoint of the row pass
  for (int y = 0; y < h; ++y) {
    const double* src = tmp.data() + static_cast<std::size_t>(y) * w;
    T* dst = gin_accum + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      const double v = src[x];
      if (v == 0.0) continue;
      for (int t = 0; t < static_cast<int>(k.size()); ++t)
        dst[reflect_index(x + t - r, w)] += static_cast<T>(k[static_cast<std::size_t>(t)] * v);
    }
  }
}

} // namespace op_detail

/// Depthwise separable blur with a fixed (non-learnable) kernel and reflect
/// boundary handling. Used by the differentiable SSIM loss.
template <typename T>
NodePtr<T> blur_fixed(NodePtr<T> a, std::vector<double> kernel) {
  const Tensor<T>& x = a->value;
  if (kernel.empty() || kernel.size() % 2 == 0)
    throw ConfigError("blur_fixed: kernel must be odd-sized");
  Tensor<T> out = Tensor<T>::zeros_like(x);
  std::vector<double> tmp;
  for (int ni = 0; ni < x.n; ++ni)
    for (int ci = 0; ci < x.c; ++ci)
      op_detail::blur_plane(x.plane(ni, ci), out.plane(ni, ci), x.h, x.w, kernel, tmp);
  return make_op<T>(std::move(out), {a}, [kernel = std::move(kernel)](Node<T>& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    std::vector<double> tmp;
    for (int ni = 0; ni < p->value.n; ++ni)
      for (int ci = 0; ci < p->value.c; ++ci)
        op_detail::blur_plane_adjoint(self.grad.plane(ni, ci), p->grad.plane(ni, ci),
                                      p->value.h, p->value.w, kernel, tmp);
  });
}

// ---------------------------------------------------------------------------
// reductions and normalization
// ---------------------------------------------------------------------------

template <typename T>
NodePtr<T> mean_all(NodePtr<T> a) {
  const Tensor<T>& x = a->value;
  if (x.numel() == 0) throw ShapeError("mean_all: empty tensor");
  double acc = 0.0;
  for (const T v : x.v) acc += static_cast<double>(v);
  Tensor<T> out(1, 1, 1, 1);
  out.v[0] = static_cast<T>(acc / static_cast<double>(x.numel()));
  return make_op<T>(std::move(out), {a}, [](Node<T>& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    const T g = static_cast<T>(static_cast<double>(self.grad.v[0]) /
                               static_cast<double>(p->value.numel()));
    for (std::size_t i = 0; i < p->grad.v.size(); ++i) p->grad.v[i] += g;
  });
}

/// Instance normalization with affine parameters gamma/beta of shape
/// (1, C, 1, 1); statistics are per (sample, channel) over H*W.
template <typename T>
NodePtr<T> instance_norm(NodePtr<T> x, NodePtr<T> gamma, NodePtr<T> beta, double eps = 1e-5) {
  const Tensor<T>& xv = x->value;
  const Tensor<T>& gv = gamma->value;
  const Tensor<T>& bv = beta->value;
  if (gv.n != 1 || gv.c != xv.c || gv.h != 1 || gv.w != 1 || !gv.same_shape(bv))
    throw ShapeError("instance_norm: gamma/beta must be (1, C, 1, 1)");

  const std::size_t m = static_cast<std::size_t>(xv.h) * xv.w;
  Tensor<T> out = Tensor<T>::zeros_like(xv);
  std::vector<double> xhat(xv.numel());
  std::vector<double> invstd(static_cast<std::size_t>(xv.n) * xv.c);

  std::size_t plane_id = 0;
  for (int ni = 0; ni < xv.n; ++ni) {
    for (int ci = 0; ci < xv.c; ++ci, ++plane_id) {
      const T* in = xv.plane(ni, ci);
      T* dst = out.plane(ni, ci);
      double* xh = xhat.data() + xv.plane_index(ni, ci);
      double mu = 0.0;
      for (std::size_t i = 0; i < m; ++i) mu += static_cast<double>(in[i]);
      mu /= static_cast<double>(m);
      double var = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double d = static_cast<double>(in[i]) - mu;
        var += d * d;
      }
      var /= static_cast<double>(m);
      const double inv = 1.0 / std::sqrt(var + eps);
      invstd[plane_id] = inv;
      const double gc = static_cast<double>(gv.v[static_cast<std::size_t>(ci)]);
      const double bc = static_cast<double>(bv.v[static_cast<std::size_t>(ci)]);
      for (std::size_t i = 0; i < m; ++i) {
        const double h = (static_cast<double>(in[i]) - mu) * inv;
        xh[i] = h;
        dst[i] = static_cast<T>(gc * h + bc);
      }
    }
  }

  return make_op<T>(std::move(out), {x, gamma, beta},
                    [xhat = std::move(xhat), invstd = std::move(invstd), m](Node<T>& self) {
    auto& x_ = self.parents[0];
    auto& g_ = self.parents[1];
    auto& b_ = self.parents[2];
    const Tensor<T>& xv = x_->value;
    const Tensor<T>& grad = self.grad;

    if (g_->requires_grad) g_->ensure_grad();
    if (b_->requires_grad) b_->ensure_grad();
    if (x_->requires_grad) x_->ensure_grad();

    std::size_t plane_id = 0;
    for (int ni = 0; ni < xv.n; ++ni) {
      for (int ci = 0; ci < xv.c; ++ci, ++plane_id) {
        const T* gp = grad.plane(ni, ci);
        const double* xh = xhat.data() + xv.plane_index(ni, ci);
        const double gc = static_cast<double>(g_->value.v[static_cast<std::size_t>(ci)]);

        if (g_->requires_grad || b_->requires_grad) {
          double gg = 0.0;
          double gb = 0.0;
          for (std::size_t i = 0; i < m; ++i) {
            gg += static_cast<double>(gp[i]) * xh[i];
            gb += static_cast<double>(gp[i]);
          }
          if (g_->requires_grad) g_->grad.v[static_cast<std::size_t>(ci)] += static_cast<T>(gg);
          if (b_->requires_grad) b_->grad.v[static_cast<std::size_t>(ci)] += static_cast<T>(gb);
        }

        if (x_->requires_grad) {
          double sum_q = 0.0;
          double sum_qx = 0.0;
          for (std::size_t i = 0; i < m; ++i) {
            const double q = static_cast<double>(gp[i]) * gc;
            sum_q += q;
            sum_qx += q * xh[i];
          }
          const double inv = invstd[plane_id];
          const double mean_q = sum_q / static_cast<double>(m);
          const double mean_qx = sum_qx / static_cast<double>(m);
          T* gx = x_->grad.plane(ni, ci);
          for (std::size_t i = 0; i < m; ++i) {
            const double q = static_cast<double>(gp[i]) * gc;
            gx[i] += static_cast<T>(inv * (q - mean_q - xh[i] * mean_qx));
          }
        }
      }
    }
  });
}

} // namespace moprior::nn
