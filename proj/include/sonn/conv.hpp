#pragma once

#include <algorithm>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "sonn/gemmglue.hpp"
#include "sonn/parallel.hpp"
#include "sonn/tensor.hpp"

namespace sonn {

// Weights [Cout][Cin][K][K] plus one bias per output channel.
template <class T>
struct ConvKernelT {
  int cout = 0, cin = 0, k = 0;
  std::vector<T> weights;  // row-major [cout][cin][k][k]
  std::vector<T> bias;     // [cout]

  ConvKernelT() = default;
  ConvKernelT(int cout_, int cin_, int k_)
      : cout(cout_), cin(cin_), k(k_) {
    if (cout < 1 || cin < 1 || k < 1)
      throw std::invalid_argument("ConvKernel: non-positive dimension");
    if (k % 2 == 0)
      throw std::invalid_argument("ConvKernel: kernel size must be odd, got " +
                                  std::to_string(k));
    weights.assign(static_cast<std::size_t>(cout) * cin * k * k, T(0));
    bias.assign(cout, T(0));
  }

  std::size_t windex(int co, int ci, int r, int t) const noexcept {
    return ((static_cast<std::size_t>(co) * cin + ci) * k + r) * k + t;
  }
  T& w(int co, int ci, int r, int t) noexcept { return weights[windex(co, ci, r, t)]; }
  T w(int co, int ci, int r, int t) const noexcept { return weights[windex(co, ci, r, t)]; }
};

using ConvKernel = ConvKernelT<float>;
using ConvKerneld = ConvKernelT<double>;

namespace detail {

// Zero-padded copy, spatial dims grown by 2*pad.
template <class T>
Tensor4T<T> pad_nchw(const Tensor4T<T>& x, int pad) {
  if (pad == 0) return x;
  Tensor4T<T> out(x.n(), x.c(), x.h() + 2 * pad, x.w() + 2 * pad);
  const std::size_t planes = static_cast<std::size_t>(x.n()) * x.c();
  parallel_for(planes, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      const int n = static_cast<int>(p) / x.c();
      const int c = static_cast<int>(p) % x.c();
      for (int y = 0; y < x.h(); ++y)
        std::memcpy(&out.at(n, c, y + pad, pad), &x.at(n, c, y, 0),
                    sizeof(T) * x.w());
    }
  });
  return out;
}

// One output plane of the forward pass, K=3: a row accumulator stays hot in
// cache while each input channel's nine taps fold in, giving every output
// element the exact documented (ci, r, t) accumulation order.
template <class T>
void conv_plane_k3(const T* xpad, int cin, int ph, int pw, const T* w,
                   T bias, T* out, int h, int wd) {
  std::vector<T> acc(wd);
  for (int m = 0; m < h; ++m) {
    for (int j = 0; j < wd; ++j) acc[j] = bias;
    for (int ci = 0; ci < cin; ++ci) {
      const T* plane = xpad + (static_cast<std::size_t>(ci) * ph) * pw;
      const T* wk = w + static_cast<std::size_t>(ci) * 9;
      const T* r0 = plane + static_cast<std::size_t>(m) * pw;
      const T* r1 = r0 + pw;
      const T* r2 = r1 + pw;
      const T w00 = wk[0], w01 = wk[1], w02 = wk[2];
      const T w10 = wk[3], w11 = wk[4], w12 = wk[5];
      const T w20 = wk[6], w21 = wk[7], w22 = wk[8];
      for (int j = 0; j < wd; ++j) {
        T s = acc[j];
        s += w00 * r0[j];
        s += w01 * r0[j + 1];
        s += w02 * r0[j + 2];
        s += w10 * r1[j];
        s += w11 * r1[j + 1];
        s += w12 * r1[j + 2];
        s += w20 * r2[j];
        s += w21 * r2[j + 1];
        s += w22 * r2[j + 2];
        acc[j] = s;
      }
    }
    std::memcpy(out + static_cast<std::size_t>(m) * wd, acc.data(),
                sizeof(T) * wd);
  }
}

// General odd K; same fixed (ci, r, t) order per output element.
template <class T>
void conv_plane_generic(const T* xpad, int cin, int ph, int pw, const T* w,
                        int k, T bias, T* out, int h, int wd) {
  std::vector<T> acc(wd);
  for (int m = 0; m < h; ++m) {
    for (int j = 0; j < wd; ++j) acc[j] = bias;
    for (int ci = 0; ci < cin; ++ci) {
      const T* plane = xpad + (static_cast<std::size_t>(ci) * ph) * pw;
      const T* wk = w + static_cast<std::size_t>(ci) * k * k;
      for (int r = 0; r < k; ++r) {
        const T* row = plane + (static_cast<std::size_t>(m) + r) * pw;
        for (int t = 0; t < k; ++t) {
          const T wv = wk[r * k + t];
          for (int j = 0; j < wd; ++j) acc[j] += wv * row[j + t];
        }
      }
    }
    std::memcpy(out + static_cast<std::size_t>(m) * wd, acc.data(),
                sizeof(T) * wd);
  }
}

// The two gradient passes are lowered to im2col + matrix multiply (their
// contracts are tolerance-based, not order-based). Column rows are ordered
// (ci, r, t) and large images are processed in fixed row bands so the
// scratch matrix stays cache-sized; band boundaries depend only on the
// problem shape, never on the thread count, so results are bit-reproducible.

inline int band_rows(int h, int w, int ckk, std::size_t elem_size) {
  const std::size_t budget = (6u << 20) / elem_size;  // ~6 MB scratch
  const std::size_t per_row = static_cast<std::size_t>(ckk) * w;
  const std::size_t rows = per_row ? budget / per_row : 0;
  return std::max(1, std::min<int>(h, static_cast<int>(rows)));
}

// cols[(ci*K+r)*K+t][(m-m0)*W + j] = xpad[ci][m+r][t+j] for m in [m0, m1).
template <class T>
void im2col_band(const T* xpad, int cin, int ph, int pw, int K, int m0, int m1,
                 int W, T* cols) {
  const std::size_t band_w = static_cast<std::size_t>(m1 - m0) * W;
  std::size_t kidx = 0;
  for (int ci = 0; ci < cin; ++ci) {
    const T* plane = xpad + static_cast<std::size_t>(ci) * ph * pw;
    for (int r = 0; r < K; ++r)
      for (int t = 0; t < K; ++t, ++kidx) {
        T* dst = cols + kidx * band_w;
        for (int m = m0; m < m1; ++m, dst += W)
          std::memcpy(dst, plane + (static_cast<std::size_t>(m) + r) * pw + t,
                      sizeof(T) * W);
      }
  }
}

// Adjoint of im2col_band: scatter-add columns back into the padded plane,
// fixed (ci, r, t)-major order.
template <class T>
void col2im_add_band(const T* cols, int cin, int ph, int pw, int K, int m0,
                     int m1, int W, T* xpad) {
  const std::size_t band_w = static_cast<std::size_t>(m1 - m0) * W;
  std::size_t kidx = 0;
  for (int ci = 0; ci < cin; ++ci) {
    T* plane = xpad + static_cast<std::size_t>(ci) * ph * pw;
    for (int r = 0; r < K; ++r)
      for (int t = 0; t < K; ++t, ++kidx) {
        const T* src = cols + kidx * band_w;
        for (int m = m0; m < m1; ++m, src += W) {
          T* dst = plane + (static_cast<std::size_t>(m) + r) * pw + t;
          for (int j = 0; j < W; ++j) dst[j] += src[j];
        }
      }
  }
}

}  // namespace detail

// Cross-correlation (no kernel flip), stride 1, zero padding of (K-1)/2 so
// spatial dims are preserved.
template <class T>
Tensor4T<T> conv2d_forward(const Tensor4T<T>& x, const ConvKernelT<T>& k,
                           int pad) {
  if (k.k % 2 == 0)
    throw std::invalid_argument("conv2d_forward: kernel size must be odd, got " +
                                std::to_string(k.k));
  if (k.cin != x.c())
    throw std::invalid_argument(
        "conv2d_forward: input has " + std::to_string(x.c()) +
        " channels but kernel expects " + std::to_string(k.cin));
  if (pad != (k.k - 1) / 2)
    throw std::invalid_argument("conv2d_forward: pad must be (K-1)/2 = " +
                                std::to_string((k.k - 1) / 2) + ", got " +
                                std::to_string(pad));

  const Tensor4T<T> xp = detail::pad_nchw(x, pad);
  Tensor4T<T> out(x.n(), k.cout, x.h(), x.w());
  const int H = x.h(), W = x.w();
  const std::size_t planes = static_cast<std::size_t>(x.n()) * k.cout;

  parallel_for(planes, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      const int n = static_cast<int>(p / k.cout);
      const int co = static_cast<int>(p % k.cout);
      const T* xpn = &xp.at(n, 0, 0, 0);
      const T* w = &k.weights[k.windex(co, 0, 0, 0)];
      T* on = &out.at(n, co, 0, 0);
      if (k.k == 3)
        detail::conv_plane_k3(xpn, k.cin, xp.h(), xp.w(), w, k.bias[co], on, H,
                              W);
      else
        detail::conv_plane_generic(xpn, k.cin, xp.h(), xp.w(), w, k.k,
                                   k.bias[co], on, H, W);
    }
  });
  return out;
}

// Gradients of sum(conv2d_forward(x,·) * gy) w.r.t. weights and bias,
// returned in kernel layout (weights = dL/dw, bias = dL/db). The batch is
// reduced over a fixed number of chunks merged in index order, so the result
// is identical for every thread count.
template <class T>
ConvKernelT<T> conv2d_grad_wb(const Tensor4T<T>& x, const Tensor4T<T>& gy,
                              int K, int pad) {
  if (K % 2 == 0)
    throw std::invalid_argument("conv2d_grad_wb: kernel size must be odd, got " +
                                std::to_string(K));
  if (pad != (K - 1) / 2)
    throw std::invalid_argument("conv2d_grad_wb: pad must be (K-1)/2 = " +
                                std::to_string((K - 1) / 2) + ", got " +
                                std::to_string(pad));
  if (x.n() != gy.n() || x.h() != gy.h() || x.w() != gy.w())
    throw std::invalid_argument("conv2d_grad_wb: input shape " + x.shape_str() +
                                " inconsistent with upstream shape " +
                                gy.shape_str());

  const Tensor4T<T> xp = detail::pad_nchw(x, pad);
  ConvKernelT<T> g(gy.c(), x.c(), K);
  const int H = x.h(), W = x.w();
  const int ckk = x.c() * K * K;
  const int hw = H * W;
  const int band = detail::band_rows(H, W, ckk, sizeof(T));
  const int chunks = std::min(x.n(), 16);
  const std::size_t wlen = g.weights.size();

  std::vector<T> part_w(static_cast<std::size_t>(chunks) * wlen, T(0));
  std::vector<T> part_b(static_cast<std::size_t>(chunks) * gy.c(), T(0));

  parallel_for(chunks, [&](std::size_t begin, std::size_t end) {
    std::vector<T> cols(static_cast<std::size_t>(ckk) * band * W);
    for (std::size_t c = begin; c < end; ++c) {
      T* pw_c = &part_w[c * wlen];
      T* pb_c = &part_b[c * gy.c()];
      const int n0 = static_cast<int>(c * x.n() / chunks);
      const int n1 = static_cast<int>((c + 1) * x.n() / chunks);
      bool first = true;
      for (int n = n0; n < n1; ++n) {
        const T* xpn = &xp.at(n, 0, 0, 0);
        const T* gn = &gy.at(n, 0, 0, 0);
        for (int m0 = 0; m0 < H; m0 += band) {
          const int m1 = std::min(H, m0 + band);
          detail::im2col_band(xpn, x.c(), xp.h(), xp.w(), K, m0, m1, W,
                              cols.data());
          detail::gemm(false, true, gy.c(), ckk, (m1 - m0) * W, T(1),
                       gn + static_cast<std::size_t>(m0) * W, hw, cols.data(),
                       (m1 - m0) * W, first ? T(0) : T(1), pw_c, ckk);
          first = false;
        }
        for (int co = 0; co < gy.c(); ++co) {
          const T* row = gn + static_cast<std::size_t>(co) * hw;
          T s = T(0);
          for (int j = 0; j < hw; ++j) s += row[j];
          pb_c[co] += s;
        }
      }
    }
  });

  for (int c = 0; c < chunks; ++c) {
    const T* pw_c = &part_w[static_cast<std::size_t>(c) * wlen];
    for (std::size_t i = 0; i < wlen; ++i) g.weights[i] += pw_c[i];
    const T* pb_c = &part_b[static_cast<std::size_t>(c) * gy.c()];
    for (int co = 0; co < gy.c(); ++co) g.bias[co] += pb_c[co];
  }
  return g;
}

// Gradient w.r.t. the input — the adjoint of conv2d_forward (bias ignored):
// columns of W^T · gy are scattered back through the padding.
template <class T>
Tensor4T<T> conv2d_grad_x(const ConvKernelT<T>& k, const Tensor4T<T>& gy,
                          int pad) {
  if (gy.c() != k.cout)
    throw std::invalid_argument(
        "conv2d_grad_x: upstream has " + std::to_string(gy.c()) +
        " channels but kernel produces " + std::to_string(k.cout));
  if (pad != (k.k - 1) / 2)
    throw std::invalid_argument("conv2d_grad_x: pad must be (K-1)/2 = " +
                                std::to_string((k.k - 1) / 2) + ", got " +
                                std::to_string(pad));

  const int H = gy.h(), W = gy.w();
  const int ph = H + 2 * pad, pw = W + 2 * pad;
  const int ckk = k.cin * k.k * k.k;
  const int hw = H * W;
  const int band = detail::band_rows(H, W, ckk, sizeof(T));
  Tensor4T<T> gx(gy.n(), k.cin, H, W);

  parallel_for(gy.n(), [&](std::size_t begin, std::size_t end) {
    std::vector<T> cols(static_cast<std::size_t>(ckk) * band * W);
    std::vector<T> xpad(static_cast<std::size_t>(k.cin) * ph * pw);
    for (std::size_t n = begin; n < end; ++n) {
      const T* gn = &gy.at(static_cast<int>(n), 0, 0, 0);
      std::fill(xpad.begin(), xpad.end(), T(0));
      for (int m0 = 0; m0 < H; m0 += band) {
        const int m1 = std::min(H, m0 + band);
        detail::gemm(true, false, ckk, (m1 - m0) * W, k.cout, T(1),
                     k.weights.data(), ckk, gn + static_cast<std::size_t>(m0) * W,
                     hw, T(0), cols.data(), (m1 - m0) * W);
        detail::col2im_add_band(cols.data(), k.cin, ph, pw, k.k, m0, m1, W,
                                xpad.data());
      }
      for (int ci = 0; ci < k.cin; ++ci)
        for (int y = 0; y < H; ++y)
          std::memcpy(&gx.at(static_cast<int>(n), ci, y, 0),
                      &xpad[(static_cast<std::size_t>(ci) * ph + y + pad) * pw +
                            pad],
                      sizeof(T) * W);
    }
  });
  return gx;
}

}  // namespace sonn
