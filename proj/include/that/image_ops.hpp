#pragma once

// Image-structured ops on [batch, channels, height, width] tensors:
// convolution, padding, pooling, local variance, pixel shuffle, bicubic
// resize, Gaussian blur, decimation. Everything is differentiable except
// where an op is pure index selection (decimate), whose adjoint is the
// corresponding scatter.

#include <cmath>
#include <cstddef>
#include <vector>

#include "that/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace that {

enum class PadMode { zero, reflect, valid };

template <class T>
void check_feature_map(const Tensor<T>& x, const char* who) {
  if (x.rank() != 4)
    throw ShapeError(std::string(who) + ": expected [batch, channels, height, width], got " +
                     shape_str(x.shape()));
}

// ---------------------------------------------------------------------------
// Padding
// ---------------------------------------------------------------------------

namespace detail {

// Maps a padded index to its source index, reflecting without edge repeat.
inline std::vector<int> pad_index_map(int n, int before, int after, bool reflect) {
  if (before < 0 || after < 0) throw ContractError("pad2d: negative padding");
  if (reflect && (before >= n || after >= n))
    throw ContractError("pad2d: reflect padding must be smaller than the extent");
  std::vector<int> map(static_cast<std::size_t>(n + before + after));
  for (int i = 0; i < n + before + after; ++i) {
    int j = i - before;
    if (j < 0) j = reflect ? -j : -1;
    if (j >= n) j = reflect ? 2 * n - 2 - j : -1;  // -1 marks a zero sample
    map[static_cast<std::size_t>(i)] = j;
  }
  return map;
}

}  // namespace detail

// Pads the two trailing axes. Zero mode fills with zeros, reflect mirrors
// without repeating the border row/column.
template <class T>
Tensor<T> pad2d(const Tensor<T>& x, int top, int bottom, int left, int right,
                PadMode mode = PadMode::zero) {
  check_feature_map(x, "pad2d");
  if (mode == PadMode::valid) throw ContractError("pad2d: valid is not a padding mode");
  const bool reflect = mode == PadMode::reflect;
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  auto rmap = detail::pad_index_map(H, top, bottom, reflect);
  auto cmap = detail::pad_index_map(W, left, right, reflect);
  const int OH = H + top + bottom, OW = W + left + right;
  std::vector<T> v(static_cast<std::size_t>(N) * C * OH * OW, T(0));
  const auto& xv = x.data();
  for (int nc = 0; nc < N * C; ++nc) {
    const T* src = &xv[static_cast<std::size_t>(nc) * H * W];
    T* dst = &v[static_cast<std::size_t>(nc) * OH * OW];
    for (int oy = 0; oy < OH; ++oy) {
      const int sy = rmap[oy];
      if (sy < 0) continue;
      for (int ox = 0; ox < OW; ++ox) {
        const int sx = cmap[ox];
        if (sx >= 0) dst[static_cast<std::size_t>(oy) * OW + ox] = src[static_cast<std::size_t>(sy) * W + sx];
      }
    }
  }
  auto out = Tensor<T>::from({N, C, OH, OW}, std::move(v));
  auto* on = out.node().get();
  on->op = "pad2d";
  on->parents = {x.node()};
  on->requires_grad = x.requires_grad();
  if (on->requires_grad) {
    auto px = x.node();
    on->backprop = [on, px, rmap, cmap, N, C, H, W, OH, OW] {
      px->ensure_grad();
      for (int nc = 0; nc < N * C; ++nc) {
        const T* g = &on->grad[static_cast<std::size_t>(nc) * OH * OW];
        T* dst = &px->grad[static_cast<std::size_t>(nc) * H * W];
        for (int oy = 0; oy < OH; ++oy) {
          const int sy = rmap[oy];
          if (sy < 0) continue;
          for (int ox = 0; ox < OW; ++ox) {
            const int sx = cmap[ox];
            if (sx >= 0) dst[static_cast<std::size_t>(sy) * W + sx] += g[static_cast<std::size_t>(oy) * OW + ox];
          }
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolution (cross-correlation, no kernel flip)
// ---------------------------------------------------------------------------

// Valid convolution; weight is [out, in/groups, kh, kw]. Rectangular kernels
// are allowed here; the public conv2d enforces square odd kernels.
template <class T>
Tensor<T> conv2d_valid(const Tensor<T>& x, const Tensor<T>& w, int stride = 1, int groups = 1) {
  check_feature_map(x, "conv2d");
  if (w.rank() != 4) throw ShapeError("conv2d: weight must be [out, in/groups, kh, kw]");
  if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
  const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = w.dim(0), wc = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  if (groups < 1 || Cin % groups != 0 || Cout % groups != 0)
    throw ShapeError("conv2d: channels not divisible by groups (in=" + std::to_string(Cin) +
                     ", out=" + std::to_string(Cout) + ", groups=" + std::to_string(groups) + ")");
  const int icpg = Cin / groups, ocpg = Cout / groups;
  if (wc != icpg)
    throw ShapeError("conv2d: weight expects " + std::to_string(wc) +
                     " input channels per group, got " + std::to_string(icpg));
  if (H < kh || W < kw) throw ShapeError("conv2d: kernel larger than input");
  const int OH = (H - kh) / stride + 1, OW = (W - kw) / stride + 1;

  std::vector<T> v(static_cast<std::size_t>(N) * Cout * OH * OW, T(0));
  const auto &xv = x.data(), &wv = w.data();
  const std::size_t xs_c = static_cast<std::size_t>(H) * W;
  const std::size_t ws_o = static_cast<std::size_t>(wc) * kh * kw;
  const std::size_t os_c = static_cast<std::size_t>(OH) * OW;
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
  for (int n = 0; n < N; ++n)
    for (int oc = 0; oc < Cout; ++oc) {
      const int g = oc / ocpg;
      const T* wr = &wv[static_cast<std::size_t>(oc) * ws_o];
      T* orow = &v[(static_cast<std::size_t>(n) * Cout + oc) * os_c];
      for (int j = 0; j < icpg; ++j) {
        const T* xc = &xv[(static_cast<std::size_t>(n) * Cin + g * icpg + j) * xs_c];
        const T* wj = &wr[static_cast<std::size_t>(j) * kh * kw];
        for (int oy = 0; oy < OH; ++oy)
          for (int ky = 0; ky < kh; ++ky) {
            const T* xrow = &xc[static_cast<std::size_t>(oy * stride + ky) * W];
            const T* wrow = &wj[static_cast<std::size_t>(ky) * kw];
            T* out_row = &orow[static_cast<std::size_t>(oy) * OW];
            for (int ox = 0; ox < OW; ++ox) {
              const T* xp = &xrow[ox * stride];
              T acc = T(0);
              for (int kx = 0; kx < kw; ++kx) acc += xp[kx] * wrow[kx];
              out_row[ox] += acc;
            }
          }
      }
    }
  auto out = Tensor<T>::from({N, Cout, OH, OW}, std::move(v));
  auto* on = out.node().get();
  on->op = "conv2d";
  on->parents = {x.node(), w.node()};
  on->requires_grad = x.requires_grad() || w.requires_grad();
  if (on->requires_grad) {
    auto px = x.node(), pw = w.node();
    on->backprop = [on, px, pw, N, Cin, Cout, H, W, kh, kw, OH, OW, stride, icpg, ocpg, xs_c,
                    ws_o, os_c] {
      const bool dx = px->requires_grad, dw = pw->requires_grad;
      if (dx) px->ensure_grad();
      if (dw) pw->ensure_grad();
      for (int n = 0; n < N; ++n)
        for (int oc = 0; oc < Cout; ++oc) {
          const int g = oc / ocpg;
          const T* grow = &on->grad[(static_cast<std::size_t>(n) * Cout + oc) * os_c];
          for (int j = 0; j < icpg; ++j) {
            const int ic = g * icpg + j;
            const T* xc = &px->val[(static_cast<std::size_t>(n) * Cin + ic) * xs_c];
            T* dxc = dx ? &px->grad[(static_cast<std::size_t>(n) * Cin + ic) * xs_c] : nullptr;
            const T* wj = &pw->val[static_cast<std::size_t>(oc) * ws_o + static_cast<std::size_t>(j) * kh * kw];
            T* dwj = dw ? &pw->grad[static_cast<std::size_t>(oc) * ws_o + static_cast<std::size_t>(j) * kh * kw]
                        : nullptr;
            for (int oy = 0; oy < OH; ++oy)
              for (int ox = 0; ox < OW; ++ox) {
                const T gv = grow[static_cast<std::size_t>(oy) * OW + ox];
                if (gv == T(0)) continue;
                const int iy0 = oy * stride, ix0 = ox * stride;
                for (int ky = 0; ky < kh; ++ky)
                  for (int kx = 0; kx < kw; ++kx) {
                    const std::size_t xi = static_cast<std::size_t>(iy0 + ky) * W + (ix0 + kx);
                    const std::size_t wi = static_cast<std::size_t>(ky) * kw + kx;
                    if (dx) dxc[xi] += gv * wj[wi];
                    if (dw) dwj[wi] += gv * xc[xi];
                  }
              }
          }
        }
    };
  }
  return out;
}

// Convolution with same/valid padding. Square odd kernels only; bias is
// optional (pass a default-constructed tensor to skip it).
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 int stride = 1, PadMode padding = PadMode::zero, int groups = 1) {
  if (w.rank() != 4) throw ShapeError("conv2d: weight must be [out, in/groups, k, k]");
  const int kh = w.dim(2), kw = w.dim(3);
  if (kh != kw || kh % 2 == 0)
    throw ContractError("conv2d: kernel must be square with odd size, got " +
                        std::to_string(kh) + "x" + std::to_string(kw));
  Tensor<T> xin = x;
  if (padding != PadMode::valid && kh > 1) {
    const int p = (kh - 1) / 2;
    xin = pad2d(x, p, p, p, p, padding);
  }
  Tensor<T> y = conv2d_valid(xin, w, stride, groups);
  if (bias.defined()) {
    if (bias.numel() != static_cast<std::size_t>(w.dim(0)))
      throw ShapeError("conv2d: bias length must equal output channels");
    y = add_axis(y, bias, 1);
  }
  return y;
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride = 1,
                 PadMode padding = PadMode::zero, int groups = 1) {
  return conv2d(x, w, Tensor<T>(), stride, padding, groups);
}

// ---------------------------------------------------------------------------
// Pooling and local variance
// ---------------------------------------------------------------------------

// Same-size k x k mean filter with reflect padding, applied separably.
template <class T>
Tensor<T> avg_pool_local(const Tensor<T>& x, int k) {
  check_feature_map(x, "avg_pool_local");
  if (k < 1 || k % 2 == 0) throw ContractError("avg_pool_local: k must be odd and positive");
  if (k == 1) return x;
  const int C = x.dim(1), p = (k - 1) / 2;
  const T inv = T(1) / static_cast<T>(k);
  auto col = Tensor<T>::full({C, 1, k, 1}, inv);
  auto row = Tensor<T>::full({C, 1, 1, k}, inv);
  auto y = conv2d_valid(pad2d(x, p, p, 0, 0, PadMode::reflect), col, 1, C);
  return conv2d_valid(pad2d(y, 0, 0, p, p, PadMode::reflect), row, 1, C);
}

// Per-channel local variance E[x^2] - E[x]^2 over a k x k window, clamped to
// be nonnegative.
template <class T>
Tensor<T> local_variance(const Tensor<T>& x, int k) {
  check_feature_map(x, "local_variance");
  if (k < 1 || k % 2 == 0) throw ContractError("local_variance: k must be odd and positive");
  auto mean_sq = avg_pool_local(mul(x, x), k);
  auto mean_x = avg_pool_local(x, k);
  return relu(sub(mean_sq, mul(mean_x, mean_x)));
}

// ---------------------------------------------------------------------------
// Pixel shuffle
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r) {
  check_feature_map(x, "pixel_shuffle");
  if (r < 1) throw ContractError("pixel_shuffle: r must be >= 1");
  if (r == 1) return x;
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (C % (r * r) != 0)
    throw ShapeError("pixel_shuffle: channels " + std::to_string(C) +
                     " not divisible by r^2 = " + std::to_string(r * r));
  const int Co = C / (r * r);
  auto t = reshape(x, {N, Co, r, r, H, W});
  t = permute(t, {0, 1, 4, 2, 5, 3});  // [N, Co, H, r, W, r]
  return reshape(t, {N, Co, H * r, W * r});
}

template <class T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r) {
  check_feature_map(x, "pixel_unshuffle");
  if (r < 1) throw ContractError("pixel_unshuffle: r must be >= 1");
  if (r == 1) return x;
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % r != 0 || W % r != 0)
    throw ShapeError("pixel_unshuffle: spatial extents not divisible by r");
  auto t = reshape(x, {N, C, H / r, r, W / r, r});
  t = permute(t, {0, 1, 3, 5, 2, 4});  // [N, C, r, r, H/r, W/r]
  return reshape(t, {N, C * r * r, H / r, W / r});
}

// ---------------------------------------------------------------------------
// Bicubic resize
// ---------------------------------------------------------------------------

namespace detail {

// Cubic convolution kernel, a = -0.5 (Catmull-Rom).
inline double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::fabs(t);
  if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
  if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
  return 0.0;
}

struct CubicTaps {
  std::vector<int> idx;      // 4 per output sample, edge-clamped
  std::vector<double> wgt;   // 4 per output sample
};

// Half-pixel-center source coordinates with edge clamping.
inline CubicTaps cubic_taps(int in_len, int out_len) {
  CubicTaps taps;
  taps.idx.resize(static_cast<std::size_t>(out_len) * 4);
  taps.wgt.resize(static_cast<std::size_t>(out_len) * 4);
  const double scale = static_cast<double>(in_len) / out_len;
  for (int i = 0; i < out_len; ++i) {
    const double src = (i + 0.5) * scale - 0.5;
    const int base = static_cast<int>(std::floor(src)) - 1;
    for (int t = 0; t < 4; ++t) {
      const int j = base + t;
      taps.idx[static_cast<std::size_t>(i) * 4 + t] = std::clamp(j, 0, in_len - 1);
      taps.wgt[static_cast<std::size_t>(i) * 4 + t] = cubic_weight(src - j);
    }
  }
  return taps;
}

}  // namespace detail

// Resamples one spatial axis (2 = height, 3 = width) with the cubic kernel.
template <class T>
Tensor<T> cubic_resize_axis(const Tensor<T>& x, int axis, int out_len) {
  check_feature_map(x, "cubic_resize_axis");
  if (axis != 2 && axis != 3) throw ContractError("cubic_resize_axis: axis must be 2 or 3");
  if (out_len < 1) throw ContractError("cubic_resize_axis: output extent must be >= 1");
  const int in_len = x.dim(axis);
  auto taps = detail::cubic_taps(in_len, out_len);

  // View as outer x in_len x inner around the resized axis.
  auto sp = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = out_len;
  std::vector<T> v(sp.outer * static_cast<std::size_t>(out_len) * sp.inner, T(0));
  const auto& xv = x.data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (int i = 0; i < out_len; ++i) {
      T* dst = &v[(o * out_len + static_cast<std::size_t>(i)) * sp.inner];
      for (int t = 0; t < 4; ++t) {
        const int j = taps.idx[static_cast<std::size_t>(i) * 4 + t];
        const T w = static_cast<T>(taps.wgt[static_cast<std::size_t>(i) * 4 + t]);
        const T* src = &xv[(o * sp.n + static_cast<std::size_t>(j)) * sp.inner];
        for (std::size_t z = 0; z < sp.inner; ++z) dst[z] += w * src[z];
      }
    }
  auto out = Tensor<T>::from(std::move(out_shape), std::move(v));
  auto* on = out.node().get();
  on->op = "cubic_resize";
  on->parents = {x.node()};
  on->requires_grad = x.requires_grad();
  if (on->requires_grad) {
    auto px = x.node();
    on->backprop = [on, px, sp, taps, out_len] {
      px->ensure_grad();
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (int i = 0; i < out_len; ++i) {
          const T* g = &on->grad[(o * out_len + static_cast<std::size_t>(i)) * sp.inner];
          for (int t = 0; t < 4; ++t) {
            const int j = taps.idx[static_cast<std::size_t>(i) * 4 + t];
            const T w = static_cast<T>(taps.wgt[static_cast<std::size_t>(i) * 4 + t]);
            T* dst = &px->grad[(o * sp.n + static_cast<std::size_t>(j)) * sp.inner];
            for (std::size_t z = 0; z < sp.inner; ++z) dst[z] += w * g[z];
          }
        }
    };
  }
  return out;
}

template <class T>
Tensor<T> bicubic_resize(const Tensor<T>& x, int out_h, int out_w) {
  check_feature_map(x, "bicubic_resize");
  Tensor<T> y = x;
  if (out_h != x.dim(2)) y = cubic_resize_axis(y, 2, out_h);
  if (out_w != y.dim(3)) y = cubic_resize_axis(y, 3, out_w);
  return y;
}

// ---------------------------------------------------------------------------
// Gaussian blur and decimation
// ---------------------------------------------------------------------------

// Gaussian sampled at integer taps around the kernel center (k-1)/2 and
// normalized to sum 1. Even k puts the center between samples.
inline std::vector<double> gaussian_kernel_1d(int k, double sigma) {
  if (k < 1) throw ContractError("gaussian_kernel_1d: k must be >= 1");
  if (!(sigma > 0.0)) throw ContractError("gaussian_kernel_1d: sigma must be positive");
  std::vector<double> g(static_cast<std::size_t>(k));
  const double c = (k - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    g[static_cast<std::size_t>(i)] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    sum += g[static_cast<std::size_t>(i)];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Per-channel blur with the normalized k x k Gaussian, reflect padding,
// applied separably. Even k shifts the output by half a pixel.
template <class T>
Tensor<T> gaussian_blur(const Tensor<T>& x, int k, double sigma) {
  check_feature_map(x, "gaussian_blur");
  auto g = gaussian_kernel_1d(k, sigma);
  if (k == 1) return x;
  const int C = x.dim(1);
  const int before = (k - 1) / 2, after = k - 1 - before;
  std::vector<T> col_w(static_cast<std::size_t>(C) * k), row_w(static_cast<std::size_t>(C) * k);
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < k; ++i) {
      col_w[static_cast<std::size_t>(c) * k + i] = static_cast<T>(g[static_cast<std::size_t>(i)]);
      row_w[static_cast<std::size_t>(c) * k + i] = static_cast<T>(g[static_cast<std::size_t>(i)]);
    }
  auto col = Tensor<T>::from({C, 1, k, 1}, std::move(col_w));
  auto row = Tensor<T>::from({C, 1, 1, k}, std::move(row_w));
  auto y = conv2d_valid(pad2d(x, before, after, 0, 0, PadMode::reflect), col, 1, C);
  return conv2d_valid(pad2d(y, 0, 0, before, after, PadMode::reflect), row, 1, C);
}

// Keeps samples at spatial indices 0, r, 2r, ...
template <class T>
Tensor<T> decimate(const Tensor<T>& x, int r) {
  check_feature_map(x, "decimate");
  if (r < 1) throw ContractError("decimate: r must be >= 1");
  if (r == 1) return x;
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % r != 0 || W % r != 0)
    throw ShapeError("decimate: extents " + std::to_string(H) + "x" + std::to_string(W) +
                     " not divisible by " + std::to_string(r));
  const int OH = H / r, OW = W / r;
  std::vector<T> v(static_cast<std::size_t>(N) * C * OH * OW);
  const auto& xv = x.data();
  for (int nc = 0; nc < N * C; ++nc) {
    const T* src = &xv[static_cast<std::size_t>(nc) * H * W];
    T* dst = &v[static_cast<std::size_t>(nc) * OH * OW];
    for (int oy = 0; oy < OH; ++oy)
      for (int ox = 0; ox < OW; ++ox)
        dst[static_cast<std::size_t>(oy) * OW + ox] = src[static_cast<std::size_t>(oy) * r * W + ox * r];
  }
  auto out = Tensor<T>::from({N, C, OH, OW}, std::move(v));
  auto* on = out.node().get();
  on->op = "decimate";
  on->parents = {x.node()};
  on->requires_grad = x.requires_grad();
  if (on->requires_grad) {
    auto px = x.node();
    on->backprop = [on, px, N, C, W, OH, OW, r] {
      px->ensure_grad();
      const int H = OH * r;
      for (int nc = 0; nc < N * C; ++nc) {
        const T* g = &on->grad[static_cast<std::size_t>(nc) * OH * OW];
        T* dst = &px->grad[static_cast<std::size_t>(nc) * H * W];
        for (int oy = 0; oy < OH; ++oy)
          for (int ox = 0; ox < OW; ++ox)
            dst[static_cast<std::size_t>(oy) * r * W + ox * r] += g[static_cast<std::size_t>(oy) * OW + ox];
      }
    };
  }
  return out;
}

}  // namespace that
