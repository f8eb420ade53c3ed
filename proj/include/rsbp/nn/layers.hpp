#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "rsbp/nn/gemm.hpp"
#include "rsbp/tensor.hpp"

namespace rsbp::nn {

enum class Padding { valid, same };

// All activation tensors are (B, H, W, C) row-major. Convolution kernels
// are (3, 3, Cin, Cout) and convolve as cross-correlation plus bias.

namespace detail {

template <typename T>
std::vector<T>& scratch(int which) {
  static thread_local std::vector<T> bufs[3];
  return bufs[which];
}

// Patch matrix: one row per output pixel, columns in (ky, kx, cin) order
// matching the row-major kernel layout. Out-of-range taps read zero.
template <typename T>
void im2col_3x3(const Tensor<T>& x, int pad, std::vector<T>& cols, int ho,
                int wo) {
  const int b_n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  cols.assign(static_cast<size_t>(b_n) * ho * wo * 9 * c, T(0));
  size_t row = 0;
  for (int b = 0; b < b_n; ++b)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox, ++row) {
        T* dst = cols.data() + row * 9 * c;
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox + kx - pad;
            if (ix < 0 || ix >= w) continue;
            const T* src = &x.v[((static_cast<size_t>(b) * h + iy) * w + ix) * c];
            std::memcpy(dst + (ky * 3 + kx) * c, src, sizeof(T) * c);
          }
        }
      }
}

// Adjoint of im2col: scatter-add patch-matrix gradients back to pixels.
template <typename T>
void col2im_3x3(const std::vector<T>& cols, int pad, Tensor<T>& dx, int ho,
                int wo) {
  const int b_n = dx.dim(0), h = dx.dim(1), w = dx.dim(2), c = dx.dim(3);
  size_t row = 0;
  for (int b = 0; b < b_n; ++b)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox, ++row) {
        const T* src = cols.data() + row * 9 * c;
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox + kx - pad;
            if (ix < 0 || ix >= w) continue;
            T* dst = &dx.v[((static_cast<size_t>(b) * h + iy) * w + ix) * c];
            const T* s = src + (ky * 3 + kx) * c;
            for (int i = 0; i < c; ++i) dst[i] += s[i];
          }
        }
      }
}

template <typename T>
void check_conv_args(const Tensor<T>& x, const Tensor<T>& w,
                     const Tensor<T>& b) {
  if (x.rank() != 4) throw std::invalid_argument("conv2d: input must be rank 4");
  if (w.rank() != 4 || w.dim(0) != 3 || w.dim(1) != 3)
    throw std::invalid_argument("conv2d: kernel must be (3,3,Cin,Cout)");
  if (w.dim(2) != x.dim(3))
    throw std::invalid_argument("conv2d: kernel Cin " + std::to_string(w.dim(2)) +
                                " != input channels " + std::to_string(x.dim(3)));
  if (b.rank() != 1 || b.dim(0) != w.dim(3))
    throw std::invalid_argument("conv2d: bias must be (Cout)");
}

}  // namespace detail

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w,
                         const Tensor<T>& b, Padding padding) {
  detail::check_conv_args(x, w, b);
  const int pad = padding == Padding::same ? 1 : 0;
  const int ho = x.dim(1) + 2 * pad - 2, wo = x.dim(2) + 2 * pad - 2;
  if (ho < 1 || wo < 1)
    throw std::invalid_argument("conv2d: input too small for valid padding");
  const int cin = x.dim(3), cout = w.dim(3);

  std::vector<T>& cols = detail::scratch<T>(0);
  detail::im2col_3x3(x, pad, cols, ho, wo);

  Tensor<T> y({x.dim(0), ho, wo, cout});
  const int rows = x.dim(0) * ho * wo;
  gemm_nn(cols.data(), w.v.data(), y.v.data(), rows, 9 * cin, cout);
  for (int r = 0; r < rows; ++r) {
    T* yr = y.v.data() + static_cast<size_t>(r) * cout;
    for (int c = 0; c < cout; ++c) yr[c] += b.v[c];
  }
  return y;
}

// Reverse-mode convolution. Parameter gradients accumulate into dw/db;
// returns the input gradient. The forward input is recomputed into a
// patch matrix rather than cached (cheap relative to the GEMMs).
template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w,
                          const Tensor<T>& dy, Padding padding, Tensor<T>& dw,
                          Tensor<T>& db) {
  detail::check_conv_args(x, w, db);
  check_same_shape(w, dw, "conv2d_backward dw");
  const int pad = padding == Padding::same ? 1 : 0;
  const int ho = x.dim(1) + 2 * pad - 2, wo = x.dim(2) + 2 * pad - 2;
  if (dy.rank() != 4 || dy.dim(0) != x.dim(0) || dy.dim(1) != ho ||
      dy.dim(2) != wo || dy.dim(3) != w.dim(3))
    throw std::invalid_argument("conv2d_backward: upstream gradient shape");
  const int cin = x.dim(3), cout = w.dim(3);
  const int rows = x.dim(0) * ho * wo;

  for (int r = 0; r < rows; ++r) {
    const T* g = dy.v.data() + static_cast<size_t>(r) * cout;
    for (int c = 0; c < cout; ++c) db.v[c] += g[c];
  }

  std::vector<T>& cols = detail::scratch<T>(0);
  detail::im2col_3x3(x, pad, cols, ho, wo);
  gemm_tn(cols.data(), dy.v.data(), dw.v.data(), 9 * cin, rows, cout,
          /*accumulate=*/true);

  std::vector<T>& dcols = detail::scratch<T>(1);
  dcols.resize(static_cast<size_t>(rows) * 9 * cin);
  gemm_nt(dy.v.data(), w.v.data(), dcols.data(), rows, cout, 9 * cin);

  Tensor<T> dx(x.shape);
  detail::col2im_3x3(dcols, pad, dx, ho, wo);
  return dx;
}

// ------------------------------------------------------------------ relu

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape);
  for (size_t i = 0; i < x.size(); ++i) y.v[i] = x.v[i] > T(0) ? x.v[i] : T(0);
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& dy, const Tensor<T>& y) {
  check_same_shape(dy, y, "relu_backward");
  Tensor<T> dx(dy.shape);
  for (size_t i = 0; i < dy.size(); ++i) dx.v[i] = y.v[i] > T(0) ? dy.v[i] : T(0);
  return dx;
}

// ------------------------------------------------------- 2x2 max pooling

template <typename T>
Tensor<T> maxpool2_forward(const Tensor<T>& x, std::vector<std::uint8_t>& argmax) {
  if (x.rank() != 4) throw std::invalid_argument("maxpool2: input must be rank 4");
  const int b_n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (h % 2 || w % 2 || h == 0 || w == 0)
    throw std::invalid_argument("maxpool2: spatial dims must be even, got " +
                                std::to_string(h) + "x" + std::to_string(w));
  Tensor<T> y({b_n, h / 2, w / 2, c});
  argmax.assign(y.size(), 0);
  size_t o = 0;
  for (int b = 0; b < b_n; ++b)
    for (int oy = 0; oy < h / 2; ++oy)
      for (int ox = 0; ox < w / 2; ++ox)
        for (int ch = 0; ch < c; ++ch, ++o) {
          T best = x.at4(b, 2 * oy, 2 * ox, ch);
          std::uint8_t which = 0;
          for (std::uint8_t q = 1; q < 4; ++q) {
            const T v = x.at4(b, 2 * oy + q / 2, 2 * ox + q % 2, ch);
            if (v > best) {
              best = v;
              which = q;
            }
          }
          y.v[o] = best;
          argmax[o] = which;
        }
  return y;
}

template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& dy,
                            const std::vector<std::uint8_t>& argmax) {
  if (dy.rank() != 4 || argmax.size() != dy.size())
    throw std::invalid_argument("maxpool2_backward: cache mismatch");
  const int b_n = dy.dim(0), ho = dy.dim(1), wo = dy.dim(2), c = dy.dim(3);
  Tensor<T> dx({b_n, 2 * ho, 2 * wo, c});
  size_t o = 0;
  for (int b = 0; b < b_n; ++b)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox)
        for (int ch = 0; ch < c; ++ch, ++o) {
          const std::uint8_t q = argmax[o];
          dx.at4(b, 2 * oy + q / 2, 2 * ox + q % 2, ch) += dy.v[o];
        }
  return dx;
}

// -------------------------------------------- nearest-neighbor upsample

template <typename T>
Tensor<T> upsample2_forward(const Tensor<T>& x) {
  if (x.rank() != 4) throw std::invalid_argument("upsample2: input must be rank 4");
  const int b_n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  Tensor<T> y({b_n, 2 * h, 2 * w, c});
  for (int b = 0; b < b_n; ++b)
    for (int oy = 0; oy < 2 * h; ++oy)
      for (int ox = 0; ox < 2 * w; ++ox) {
        const T* src = &x.v[((static_cast<size_t>(b) * h + oy / 2) * w + ox / 2) * c];
        T* dst = &y.v[((static_cast<size_t>(b) * 2 * h + oy) * 2 * w + ox) * c];
        std::memcpy(dst, src, sizeof(T) * c);
      }
  return y;
}

template <typename T>
Tensor<T> upsample2_backward(const Tensor<T>& dy) {
  if (dy.rank() != 4 || dy.dim(1) % 2 || dy.dim(2) % 2)
    throw std::invalid_argument("upsample2_backward: bad gradient shape");
  const int b_n = dy.dim(0), ho = dy.dim(1) / 2, wo = dy.dim(2) / 2, c = dy.dim(3);
  Tensor<T> dx({b_n, ho, wo, c});
  for (int b = 0; b < b_n; ++b)
    for (int oy = 0; oy < 2 * ho; ++oy)
      for (int ox = 0; ox < 2 * wo; ++ox) {
        const T* src = &dy.v[((static_cast<size_t>(b) * 2 * ho + oy) * 2 * wo + ox) * c];
        T* dst = &dx.v[((static_cast<size_t>(b) * ho + oy / 2) * wo + ox / 2) * c];
        for (int i = 0; i < c; ++i) dst[i] += src[i];
      }
  return dx;
}

// ----------------------------------------------------- crop and concat

// Symmetric spatial center crop; offsets must be integral (parity match).
template <typename T>
Tensor<T> center_crop(const Tensor<T>& x, int ho, int wo) {
  if (x.rank() != 4) throw std::invalid_argument("center_crop: rank 4 required");
  const int h = x.dim(1), w = x.dim(2);
  if (ho > h || wo > w || ho < 1 || wo < 1 || (h - ho) % 2 || (w - wo) % 2)
    throw std::invalid_argument("center_crop: cannot crop " + std::to_string(h) +
                                "x" + std::to_string(w) + " to " +
                                std::to_string(ho) + "x" + std::to_string(wo));
  const int oy = (h - ho) / 2, ox = (w - wo) / 2;
  const int b_n = x.dim(0), c = x.dim(3);
  Tensor<T> y({b_n, ho, wo, c});
  for (int b = 0; b < b_n; ++b)
    for (int r = 0; r < ho; ++r)
      std::memcpy(&y.v[((static_cast<size_t>(b) * ho + r) * wo) * c],
                  &x.v[((static_cast<size_t>(b) * h + oy + r) * w + ox) * c],
                  sizeof(T) * wo * c);
  return y;
}

template <typename T>
Tensor<T> center_crop_backward(const Tensor<T>& dy, int h, int w) {
  const int b_n = dy.dim(0), ho = dy.dim(1), wo = dy.dim(2), c = dy.dim(3);
  const int oy = (h - ho) / 2, ox = (w - wo) / 2;
  Tensor<T> dx({b_n, h, w, c});
  for (int b = 0; b < b_n; ++b)
    for (int r = 0; r < ho; ++r)
      std::memcpy(&dx.v[((static_cast<size_t>(b) * h + oy + r) * w + ox) * c],
                  &dy.v[((static_cast<size_t>(b) * ho + r) * wo) * c],
                  sizeof(T) * wo * c);
  return dx;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) ||
      a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
    throw std::invalid_argument("concat_channels: spatial shape mismatch");
  const int b_n = a.dim(0), h = a.dim(1), w = a.dim(2);
  const int ca = a.dim(3), cb = b.dim(3);
  Tensor<T> y({b_n, h, w, ca + cb});
  const size_t pixels = static_cast<size_t>(b_n) * h * w;
  for (size_t p = 0; p < pixels; ++p) {
    std::memcpy(&y.v[p * (ca + cb)], &a.v[p * ca], sizeof(T) * ca);
    std::memcpy(&y.v[p * (ca + cb) + ca], &b.v[p * cb], sizeof(T) * cb);
  }
  return y;
}

template <typename T>
void split_channels_backward(const Tensor<T>& dy, int ca, Tensor<T>& da,
                             Tensor<T>& db) {
  const int b_n = dy.dim(0), h = dy.dim(1), w = dy.dim(2), ct = dy.dim(3);
  const int cb = ct - ca;
  da = Tensor<T>({b_n, h, w, ca});
  db = Tensor<T>({b_n, h, w, cb});
  const size_t pixels = static_cast<size_t>(b_n) * h * w;
  for (size_t p = 0; p < pixels; ++p) {
    std::memcpy(&da.v[p * ca], &dy.v[p * ct], sizeof(T) * ca);
    std::memcpy(&db.v[p * cb], &dy.v[p * ct + ca], sizeof(T) * cb);
  }
}

// ------------------------------------------------- batch renormalization

template <typename T>
struct RenormSchedule {
  T r_max = T(1);
  T d_max = T(0);
  T momentum = T(0.99);
  T eps = T(1e-5);
};

template <typename T>
struct BrnCache {
  Tensor<T> xhat;          // (B,H,W,C) batch-standardized input
  std::vector<T> inv_sigma;  // per-channel 1/sqrt(var_B + eps)
  std::vector<T> r, d;       // per-channel correction constants
};

// Training-mode forward. r and d are computed from the running statistics
// and treated as constants by the backward pass (stop-gradient), per the
// renormalization scheme. Tests may pin r/d explicitly via the overrides
// to express exactly that semantics under finite differences.
template <typename T>
Tensor<T> batch_renorm_forward_train(const Tensor<T>& x, const Tensor<T>& gamma,
                                     const Tensor<T>& beta, Tensor<T>& run_mean,
                                     Tensor<T>& run_var,
                                     const RenormSchedule<T>& sched,
                                     BrnCache<T>& cache,
                                     const std::vector<T>* override_r = nullptr,
                                     const std::vector<T>* override_d = nullptr) {
  if (x.rank() != 4) throw std::invalid_argument("batch_renorm: rank 4 required");
  const int b_n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (b_n < 1) throw std::invalid_argument("batch_renorm: empty batch");
  if (gamma.size() != static_cast<size_t>(c) || beta.size() != gamma.size() ||
      run_mean.size() != gamma.size() || run_var.size() != gamma.size())
    throw std::invalid_argument("batch_renorm: channel count mismatch");

  const size_t m = static_cast<size_t>(b_n) * h * w;
  std::vector<T> mu(c, T(0)), var(c, T(0));
  for (size_t p = 0; p < m; ++p) {
    const T* px = &x.v[p * c];
    for (int ch = 0; ch < c; ++ch) mu[ch] += px[ch];
  }
  for (int ch = 0; ch < c; ++ch) mu[ch] /= T(m);
  for (size_t p = 0; p < m; ++p) {
    const T* px = &x.v[p * c];
    for (int ch = 0; ch < c; ++ch) {
      const T e = px[ch] - mu[ch];
      var[ch] += e * e;
    }
  }
  for (int ch = 0; ch < c; ++ch) var[ch] /= T(m);

  cache.inv_sigma.resize(c);
  cache.r.resize(c);
  cache.d.resize(c);
  for (int ch = 0; ch < c; ++ch) {
    const T sigma = std::sqrt(var[ch] + sched.eps);
    const T sigma_run = std::sqrt(run_var.v[ch] + sched.eps);
    cache.inv_sigma[ch] = T(1) / sigma;
    T r = sigma / sigma_run;
    r = std::min(std::max(r, T(1) / sched.r_max), sched.r_max);
    T d = (mu[ch] - run_mean.v[ch]) / sigma_run;
    d = std::min(std::max(d, -sched.d_max), sched.d_max);
    cache.r[ch] = override_r ? (*override_r)[ch] : r;
    cache.d[ch] = override_d ? (*override_d)[ch] : d;
  }

  cache.xhat = Tensor<T>(x.shape);
  Tensor<T> y(x.shape);
  for (size_t p = 0; p < m; ++p) {
    const T* px = &x.v[p * c];
    T* pxh = &cache.xhat.v[p * c];
    T* py = &y.v[p * c];
    for (int ch = 0; ch < c; ++ch) {
      const T xh = (px[ch] - mu[ch]) * cache.inv_sigma[ch];
      pxh[ch] = xh;
      py[ch] = gamma.v[ch] * (xh * cache.r[ch] + cache.d[ch]) + beta.v[ch];
    }
  }

  for (int ch = 0; ch < c; ++ch) {
    run_mean.v[ch] = sched.momentum * run_mean.v[ch] + (T(1) - sched.momentum) * mu[ch];
    run_var.v[ch] = sched.momentum * run_var.v[ch] + (T(1) - sched.momentum) * var[ch];
  }
  return y;
}

template <typename T>
Tensor<T> batch_renorm_forward_infer(const Tensor<T>& x, const Tensor<T>& gamma,
                                     const Tensor<T>& beta,
                                     const Tensor<T>& run_mean,
                                     const Tensor<T>& run_var, T eps) {
  if (x.rank() != 4) throw std::invalid_argument("batch_renorm: rank 4 required");
  const int c = x.dim(3);
  if (gamma.size() != static_cast<size_t>(c))
    throw std::invalid_argument("batch_renorm: channel count mismatch");
  Tensor<T> y(x.shape);
  const size_t m = x.size() / c;
  std::vector<T> scale(c), shift(c);
  for (int ch = 0; ch < c; ++ch) {
    scale[ch] = gamma.v[ch] / std::sqrt(run_var.v[ch] + eps);
    shift[ch] = beta.v[ch] - scale[ch] * run_mean.v[ch];
  }
  for (size_t p = 0; p < m; ++p)
    for (int ch = 0; ch < c; ++ch)
      y.v[p * c + ch] = scale[ch] * x.v[p * c + ch] + shift[ch];
  return y;
}

template <typename T>
Tensor<T> batch_renorm_backward(const Tensor<T>& dy, const Tensor<T>& gamma,
                                const BrnCache<T>& cache, Tensor<T>& dgamma,
                                Tensor<T>& dbeta) {
  check_same_shape(dy, cache.xhat, "batch_renorm_backward");
  const int c = dy.dim(3);
  const size_t m = dy.size() / c;

  std::vector<T> sum_g(c, T(0)), sum_gx(c, T(0));
  for (size_t p = 0; p < m; ++p) {
    const T* g = &dy.v[p * c];
    const T* xh = &cache.xhat.v[p * c];
    for (int ch = 0; ch < c; ++ch) {
      sum_g[ch] += g[ch];
      sum_gx[ch] += g[ch] * xh[ch];
    }
  }
  for (int ch = 0; ch < c; ++ch) {
    dgamma.v[ch] += cache.r[ch] * sum_gx[ch] + cache.d[ch] * sum_g[ch];
    dbeta.v[ch] += sum_g[ch];
  }

  Tensor<T> dx(dy.shape);
  std::vector<T> k1(c), k2(c), k3(c);
  for (int ch = 0; ch < c; ++ch) {
    const T a = gamma.v[ch] * cache.r[ch] * cache.inv_sigma[ch];
    k1[ch] = a;
    k2[ch] = a * sum_g[ch] / T(m);
    k3[ch] = a * sum_gx[ch] / T(m);
  }
  for (size_t p = 0; p < m; ++p) {
    const T* g = &dy.v[p * c];
    const T* xh = &cache.xhat.v[p * c];
    T* d = &dx.v[p * c];
    for (int ch = 0; ch < c; ++ch)
      d[ch] = k1[ch] * g[ch] - k2[ch] - k3[ch] * xh[ch];
  }
  return dx;
}

}  // namespace rsbp::nn
