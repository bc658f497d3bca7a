#pragma once

// Pivotal Token Selective Attention (PTSA) and Window-based Self-Attention
// (WSA).
//
// PTSA scores l2-normalized queries against keys with a learnable per-head
// temperature, clusters each score row into two groups by 1-D k-means, and
// softmaxes only over the higher-scoring (pivotal) group. The mask is a
// constant of the backward pass. Tokens are channels by default; a
// spatial-window token mode exists as well.

#include <algorithm>
#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "that/image_ops.hpp"
#include "that/tensor.hpp"

namespace that {

enum class TokenAxis { channel, spatial_window };

struct AttentionConfig {
  int heads = 6;
  int window = 8;
  float tau_init = 1.0f;
  TokenAxis token_axis = TokenAxis::channel;
  // Iteration budget an iterative clusterer would get. The 1-D solver in
  // row_kmeans is exact and ignores it; the knob stays for config parity.
  int kmeans_max_iters = 10;
};

inline void validate(const AttentionConfig& cfg) {
  if (cfg.heads < 1) throw ConfigError("attention: heads must be >= 1");
  if (cfg.window < 2) throw ConfigError("attention: window must be >= 2");
  if (cfg.kmeans_max_iters < 1) throw ConfigError("attention: kmeans_max_iters must be >= 1");
}

// Binary mask over an attention score matrix; every row keeps at least one
// entry, and kept scores dominate dropped scores within each row.
struct PivotalMask {
  int rows = 0, cols = 0;
  std::vector<std::uint8_t> m;

  std::uint8_t at(int r, int c) const { return m[static_cast<std::size_t>(r) * cols + c]; }
};

// How ptsa_forward obtains its masks. `record` computes them and appends to
// the cache; `replay` consumes the cache in order (used to hold masks fixed
// across finite-difference evaluations).
enum class MaskMode { kmeans, all_ones, record, replay };

struct MaskState {
  MaskMode mode = MaskMode::kmeans;
  std::vector<std::vector<std::uint8_t>> cache;
  std::size_t cursor = 0;

  void rewind() { cursor = 0; }
};

// ---------------------------------------------------------------------------
// k-means row clustering
// ---------------------------------------------------------------------------

// Exact 1-D 2-means on one score row. In one dimension the k-means optimum
// is a threshold partition, so the minimum within-cluster SSE over the n-1
// sorted-order splits is found directly with prefix sums. Lloyd iteration
// from a min/max init can settle in a worse local optimum, which is why it
// is not used. Rows with exactly tied optimal splits exist (e.g. symmetric
// value patterns); the smallest split wins, with a rounding-noise band so
// the winner does not depend on how the SSE was accumulated. Membership in
// the higher-mean cluster is the mask; a constant row keeps everything.
template <class T>
void row_kmeans(const T* row, int n, std::uint8_t* out) {
  std::vector<double> v(row, row + n);
  std::sort(v.begin(), v.end());
  if (v.front() == v.back()) {
    for (int i = 0; i < n; ++i) out[i] = 1;
    return;
  }
  double total1 = 0.0, total2 = 0.0, total_abs = 0.0;
  for (double x : v) {
    total1 += x;
    total2 += x * x;
    total_abs += std::abs(x);
  }
  const double tie_band = 1e-12 * (total2 + total_abs + 1.0);
  double best_sse = 0.0, threshold = 0.0;
  bool have_best = false;
  double run1 = 0.0, run2 = 0.0;
  for (int s = 1; s < n; ++s) {
    run1 += v[static_cast<std::size_t>(s) - 1];
    run2 += v[static_cast<std::size_t>(s) - 1] * v[static_cast<std::size_t>(s) - 1];
    if (v[static_cast<std::size_t>(s) - 1] == v[static_cast<std::size_t>(s)]) continue;
    const double hi1 = total1 - run1, hi2 = total2 - run2;
    const double sse = (run2 - run1 * run1 / s) + (hi2 - hi1 * hi1 / (n - s));
    if (!have_best || sse < best_sse - tie_band) {
      have_best = true;
      best_sse = sse;
      threshold = v[static_cast<std::size_t>(s)];
    }
  }
  for (int i = 0; i < n; ++i) out[i] = static_cast<double>(row[i]) >= threshold ? 1 : 0;
}

template <class T>
PivotalMask kmeans_mask(const Tensor<T>& scores) {
  if (scores.rank() != 2) throw ShapeError("kmeans_mask: expected a rank-2 score matrix");
  PivotalMask mask;
  mask.rows = scores.dim(0);
  mask.cols = scores.dim(1);
  mask.m.resize(scores.numel());
  const auto& v = scores.data();
  for (int r = 0; r < mask.rows; ++r)
    row_kmeans(&v[static_cast<std::size_t>(r) * mask.cols], mask.cols,
               &mask.m[static_cast<std::size_t>(r) * mask.cols]);
  return mask;
}

// ---------------------------------------------------------------------------
// Scores and masked softmax
// ---------------------------------------------------------------------------

// M = tau * Q' K'^T with rows of Q, K l2-normalized. tau is a 1-element
// (possibly learnable) tensor.
template <class T>
Tensor<T> similarity_matrix(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& tau) {
  if (q.rank() != 2 || k.rank() != 2 || q.dim(1) != k.dim(1))
    throw ShapeError("similarity_matrix: Q and K must be [tokens, d] with matching d");
  auto qn = l2_normalize(q, 1);
  auto kn = l2_normalize(k, 1);
  return mul_scalar_t(matmul(qn, transpose(kn)), tau);
}

template <class T>
Tensor<T> similarity_matrix(const Tensor<T>& q, const Tensor<T>& k, T tau) {
  return similarity_matrix(q, k, Tensor<T>::scalar(tau));
}

// Replaces dropped logits with the sentinel; gradients flow only through the
// kept entries.
template <class T>
Tensor<T> apply_mask(const Tensor<T>& m, std::vector<std::uint8_t> mask) {
  if (mask.size() != m.numel()) throw ShapeError("apply_mask: mask size mismatch");
  auto keep = std::make_shared<std::vector<std::uint8_t>>(std::move(mask));
  std::vector<T> v(m.numel());
  const auto& mv = m.data();
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = (*keep)[i] ? mv[i] : static_cast<T>(kMaskSentinel);
  auto out = Tensor<T>::from(m.shape(), std::move(v));
  auto* on = out.node().get();
  on->op = "apply_mask";
  on->parents = {m.node()};
  on->requires_grad = m.requires_grad();
  if (on->requires_grad) {
    auto pm = m.node();
    on->backprop = [on, pm, keep] {
      pm->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        if ((*keep)[i]) pm->grad[i] += on->grad[i];
    };
  }
  return out;
}

template <class T>
Tensor<T> pivotal_softmax(const Tensor<T>& m, const PivotalMask& mask) {
  if (m.rank() != 2 || m.dim(0) != mask.rows || m.dim(1) != mask.cols)
    throw ShapeError("pivotal_softmax: score/mask shape mismatch");
  return softmax(apply_mask(m, mask.m), 1);
}

// ---------------------------------------------------------------------------
// PTSA
// ---------------------------------------------------------------------------

template <class T>
struct PtsaParams {
  Tensor<T> wq, wk, wv, wo;  // [C, C, 1, 1]
  Tensor<T> bo;              // [C]
  Tensor<T> tau;             // [heads]

  static PtsaParams zeros(int channels, int heads, T tau_init = T(1)) {
    PtsaParams p;
    p.wq = Tensor<T>::zeros({channels, channels, 1, 1}, true);
    p.wk = Tensor<T>::zeros({channels, channels, 1, 1}, true);
    p.wv = Tensor<T>::zeros({channels, channels, 1, 1}, true);
    p.wo = Tensor<T>::zeros({channels, channels, 1, 1}, true);
    p.bo = Tensor<T>::zeros({channels}, true);
    p.tau = Tensor<T>::full({heads}, tau_init, true);
    return p;
  }

  static PtsaParams init(int channels, int heads, std::mt19937_64& rng, T tau_init = T(1)) {
    PtsaParams p = zeros(channels, heads, tau_init);
    fill_trunc_normal(p.wq, rng, T(0.02));
    fill_trunc_normal(p.wk, rng, T(0.02));
    fill_trunc_normal(p.wv, rng, T(0.02));
    fill_trunc_normal(p.wo, rng, T(0.02));
    return p;
  }
};

namespace detail {

// Fetches the mask for one batched score tensor according to the mode. Rows
// of `scores` are the last-axis slices.
template <class T>
std::vector<std::uint8_t> masks_for(const Tensor<T>& scores, MaskState* state) {
  const MaskMode mode = state ? state->mode : MaskMode::kmeans;
  const std::size_t total = scores.numel();
  if (mode == MaskMode::all_ones) return std::vector<std::uint8_t>(total, 1);
  if (mode == MaskMode::replay) {
    if (!state || state->cursor >= state->cache.size())
      throw ContractError("mask replay requested but the cache is exhausted");
    auto m = state->cache[state->cursor++];
    if (m.size() != total) throw ContractError("mask replay shape mismatch");
    return m;
  }
  const int cols = scores.shape().back();
  const std::size_t rows = total / static_cast<std::size_t>(cols);
  std::vector<std::uint8_t> m(total);
  const auto& v = scores.data();
  for (std::size_t r = 0; r < rows; ++r) row_kmeans(&v[r * cols], cols, &m[r * cols]);
  if (mode == MaskMode::record) {
    state->cache.push_back(m);
    ++state->cursor;
  }
  return m;
}

// [N, C, Hp, Wp] -> [N*nWindows*heads, window^2, C/heads] plus the inverse.
template <class T>
Tensor<T> to_window_tokens(const Tensor<T>& x, int window, int heads) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int dh = C / heads, hw = H / window, ww = W / window;
  auto t = reshape(x, {N, heads, dh, hw, window, ww, window});
  t = permute(t, {0, 3, 5, 1, 4, 6, 2});  // [N, hw, ww, heads, win, win, dh]
  return reshape(t, {N * hw * ww * heads, window * window, dh});
}

template <class T>
Tensor<T> from_window_tokens(const Tensor<T>& t, int n, int c, int h, int w, int window,
                             int heads) {
  const int dh = c / heads, hw = h / window, ww = w / window;
  auto y = reshape(t, {n, hw, ww, heads, window, window, dh});
  y = permute(y, {0, 3, 6, 1, 4, 2, 5});  // [N, heads, dh, hw, win, ww, win]
  return reshape(y, {n, c, h, w});
}

}  // namespace detail

// Scaled masked attention core on [B, T, d] stacks: normalize Q and K rows,
// score with per-stack temperature already applied by the caller, mask, and
// weight V. Exposed separately so tests can drive it directly.
template <class T>
Tensor<T> ptsa_attend(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                      MaskState* state) {
  if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3)
    throw ShapeError("ptsa_attend: expected [stacks, tokens, d] operands");
  auto qn = l2_normalize(q, 2);
  auto kn = l2_normalize(k, 2);
  auto scores = bmm(qn, kn, true);
  auto mask = detail::masks_for(scores, state);
  auto attn = softmax(apply_mask(scores, std::move(mask)), 2);
  return bmm(attn, v);
}

// Temperature-scaled variant used by ptsa_forward: tau is [heads] and scales
// the per-head score blocks before masking.
template <class T>
Tensor<T> ptsa_attend_tau(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                          const Tensor<T>& tau, int stacks_per_head_group, int heads,
                          MaskState* state) {
  auto qn = l2_normalize(q, 2);
  auto kn = l2_normalize(k, 2);
  auto scores = bmm(qn, kn, true);
  const int Ttok = scores.dim(1);
  auto grouped = reshape(scores, {stacks_per_head_group, heads, Ttok, Ttok});
  grouped = mul_axis(grouped, tau, 1);
  scores = reshape(grouped, {stacks_per_head_group * heads, Ttok, Ttok});
  auto mask = detail::masks_for(scores, state);
  auto attn = softmax(apply_mask(scores, std::move(mask)), 2);
  return bmm(attn, v);
}

// Full PTSA sublayer: 1x1 projections, token rearrangement, masked attention,
// 1x1 output projection. Output shape equals input shape.
template <class T>
Tensor<T> ptsa_forward(const Tensor<T>& x, const PtsaParams<T>& p, const AttentionConfig& cfg,
                       MaskState* state = nullptr) {
  check_feature_map(x, "ptsa_forward");
  validate(cfg);
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (C % cfg.heads != 0)
    throw ConfigError("ptsa_forward: channels " + std::to_string(C) +
                      " not divisible by heads " + std::to_string(cfg.heads));
  auto q = conv2d(x, p.wq);
  auto k = conv2d(x, p.wk);
  auto v = conv2d(x, p.wv);

  Tensor<T> merged;
  if (cfg.token_axis == TokenAxis::channel) {
    const int Ttok = C / cfg.heads, d = H * W;
    auto qs = reshape(q, {N * cfg.heads, Ttok, d});
    auto ks = reshape(k, {N * cfg.heads, Ttok, d});
    auto vs = reshape(v, {N * cfg.heads, Ttok, d});
    auto o = ptsa_attend_tau(qs, ks, vs, p.tau, N, cfg.heads, state);
    merged = reshape(o, {N, C, H, W});
  } else {
    const int win = cfg.window;
    const int ph = (win - H % win) % win, pw = (win - W % win) % win;
    Tensor<T> qp = q, kp = k, vp = v;
    if (ph || pw) {
      qp = pad2d(q, 0, ph, 0, pw, PadMode::reflect);
      kp = pad2d(k, 0, ph, 0, pw, PadMode::reflect);
      vp = pad2d(v, 0, ph, 0, pw, PadMode::reflect);
    }
    const int Hp = H + ph, Wp = W + pw;
    const int windows = (Hp / win) * (Wp / win);
    auto qs = detail::to_window_tokens(qp, win, cfg.heads);
    auto ks = detail::to_window_tokens(kp, win, cfg.heads);
    auto vs = detail::to_window_tokens(vp, win, cfg.heads);
    auto o = ptsa_attend_tau(qs, ks, vs, p.tau, N * windows, cfg.heads, state);
    merged = detail::from_window_tokens(o, N, C, Hp, Wp, win, cfg.heads);
    if (ph) merged = slice(merged, 2, 0, H);
    if (pw) merged = slice(merged, 3, 0, W);
  }
  return conv2d(merged, p.wo, p.bo);
}

// ---------------------------------------------------------------------------
// WSA
// ---------------------------------------------------------------------------

template <class T>
struct WsaParams {
  Tensor<T> wq, wk, wv, wo;  // [C, C, 1, 1]
  Tensor<T> bo;              // [C]
  Tensor<T> rel_bias;        // [heads, (2*window-1)^2]

  static WsaParams zeros(int channels, int heads, int window) {
    WsaParams p;
    p.wq = Tensor<T>::zeros({channels, channels, 1, 1}, true);
    p.wk = Tensor<T>::zeros({channels, channels, 1, 1}, true);
    p.wv = Tensor<T>::zeros({channels, channels, 1, 1}, true);
    p.wo = Tensor<T>::zeros({channels, channels, 1, 1}, true);
    p.bo = Tensor<T>::zeros({channels}, true);
    p.rel_bias = Tensor<T>::zeros({heads, (2 * window - 1) * (2 * window - 1)}, true);
    return p;
  }

  static WsaParams init(int channels, int heads, int window, std::mt19937_64& rng) {
    WsaParams p = zeros(channels, heads, window);
    fill_trunc_normal(p.wq, rng, T(0.02));
    fill_trunc_normal(p.wk, rng, T(0.02));
    fill_trunc_normal(p.wv, rng, T(0.02));
    fill_trunc_normal(p.wo, rng, T(0.02));
    fill_trunc_normal(p.rel_bias, rng, T(0.02));
    return p;
  }
};

namespace detail {

// Relative-offset index for every (query pixel, key pixel) pair in a window.
inline std::vector<int> rel_bias_indices(int window) {
  const int span = 2 * window - 1;
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(window) * window * window * window);
  for (int yi = 0; yi < window; ++yi)
    for (int xi = 0; xi < window; ++xi)
      for (int yj = 0; yj < window; ++yj)
        for (int xj = 0; xj < window; ++xj)
          idx.push_back((yi - yj + window - 1) * span + (xi - xj + window - 1));
  return idx;
}

}  // namespace detail

// Multi-head attention inside non-overlapping windows with a learned
// relative position bias. Inputs whose extents are not window multiples are
// reflect-padded and cropped back afterwards.
template <class T>
Tensor<T> wsa_forward(const Tensor<T>& x, const WsaParams<T>& p, const AttentionConfig& cfg) {
  check_feature_map(x, "wsa_forward");
  validate(cfg);
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (C % cfg.heads != 0)
    throw ConfigError("wsa_forward: channels " + std::to_string(C) + " not divisible by heads " +
                      std::to_string(cfg.heads));
  const int win = cfg.window, dh = C / cfg.heads;
  auto q = conv2d(x, p.wq);
  auto k = conv2d(x, p.wk);
  auto v = conv2d(x, p.wv);
  const int ph = (win - H % win) % win, pw = (win - W % win) % win;
  if (ph || pw) {
    q = pad2d(q, 0, ph, 0, pw, PadMode::reflect);
    k = pad2d(k, 0, ph, 0, pw, PadMode::reflect);
    v = pad2d(v, 0, ph, 0, pw, PadMode::reflect);
  }
  const int Hp = H + ph, Wp = W + pw;
  const int windows = (Hp / win) * (Wp / win);
  const int Ttok = win * win;

  auto qs = detail::to_window_tokens(q, win, cfg.heads);
  auto ks = detail::to_window_tokens(k, win, cfg.heads);
  auto vs = detail::to_window_tokens(v, win, cfg.heads);
  auto scores = scalar_mul(bmm(qs, ks, true), T(1) / std::sqrt(static_cast<T>(dh)));

  auto bias = reshape(gather_cols(p.rel_bias, detail::rel_bias_indices(win)),
                      {cfg.heads, Ttok, Ttok});
  auto grouped = reshape(scores, {N * windows, cfg.heads, Ttok, Ttok});
  grouped = add_bcast_outer(grouped, bias);
  scores = reshape(grouped, {N * windows * cfg.heads, Ttok, Ttok});

  auto attn = softmax(scores, 2);
  auto o = bmm(attn, vs);
  auto merged = detail::from_window_tokens(o, N, C, Hp, Wp, win, cfg.heads);
  if (ph) merged = slice(merged, 2, 0, H);
  if (pw) merged = slice(merged, 3, 0, W);
  return conv2d(merged, p.wo, p.bo);
}

}  // namespace that
