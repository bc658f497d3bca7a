#pragma once

// Multi-level Variance-aware Feed-forward Network: a 1x1 expansion, three
// parallel depthwise branches (3x3 / 5x5 / 7x7) that gate their features by
// local variance and subtract a local mean (high-pass), then concat-merge,
// SiLU, and a 1x1 projection back.

#include <random>

#include "that/image_ops.hpp"
#include "that/tensor.hpp"

namespace that {

template <class T>
struct MvfnParams {
  Tensor<T> expand_w, expand_b;  // 1x1, C -> gamma*C
  Tensor<T> dw_w[3], dw_b[3];    // depthwise k in {3,5,7} on gamma*C
  Tensor<T> var_scale[3], var_bias[3];
  Tensor<T> merge_w, merge_b;  // 1x1, 3*gamma*C -> gamma*C
  Tensor<T> out_w, out_b;      // 1x1, gamma*C -> C
  int gamma = 2;

  static constexpr int kernel_of(int branch) { return 3 + 2 * branch; }
  int in_channels() const { return expand_w.dim(1); }
  int hidden_channels() const { return expand_w.dim(0); }

  static MvfnParams zeros(int channels, int gamma = 2) {
    if (gamma < 1) throw ConfigError("mvfn: gamma must be >= 1");
    const int hc = gamma * channels;
    MvfnParams p;
    p.gamma = gamma;
    p.expand_w = Tensor<T>::zeros({hc, channels, 1, 1}, true);
    p.expand_b = Tensor<T>::zeros({hc}, true);
    for (int i = 0; i < 3; ++i) {
      const int k = kernel_of(i);
      p.dw_w[i] = Tensor<T>::zeros({hc, 1, k, k}, true);
      p.dw_b[i] = Tensor<T>::zeros({hc}, true);
      p.var_scale[i] = Tensor<T>::zeros({hc}, true);
      p.var_bias[i] = Tensor<T>::zeros({hc}, true);
    }
    p.merge_w = Tensor<T>::zeros({hc, 3 * hc, 1, 1}, true);
    p.merge_b = Tensor<T>::zeros({hc}, true);
    p.out_w = Tensor<T>::zeros({channels, hc, 1, 1}, true);
    p.out_b = Tensor<T>::zeros({channels}, true);
    return p;
  }

  static MvfnParams init(int channels, std::mt19937_64& rng, int gamma = 2) {
    MvfnParams p = zeros(channels, gamma);
    fill_trunc_normal(p.expand_w, rng, T(0.02));
    for (int i = 0; i < 3; ++i) {
      fill_trunc_normal(p.dw_w[i], rng, T(0.02));
      for (auto& v : p.var_scale[i].data()) v = T(1);
    }
    fill_trunc_normal(p.merge_w, rng, T(0.02));
    fill_trunc_normal(p.out_w, rng, T(0.02));
    return p;
  }
};

// One branch: depthwise conv, variance-driven sigmoid gate, local-mean
// subtraction. `branch` selects k = 3, 5 or 7.
template <class T>
Tensor<T> variance_branch(const Tensor<T>& h, int branch, const MvfnParams<T>& p) {
  if (branch < 0 || branch > 2) throw ContractError("variance_branch: branch must be 0, 1 or 2");
  const int k = MvfnParams<T>::kernel_of(branch);
  const int hc = p.hidden_channels();
  auto b = conv2d(h, p.dw_w[branch], p.dw_b[branch], 1, PadMode::zero, hc);
  auto gate_in = add_axis(mul_axis(local_variance(b, k), p.var_scale[branch], 1),
                          p.var_bias[branch], 1);
  auto g = mul(b, sigmoid(gate_in));
  return sub(g, avg_pool_local(g, k));
}

template <class T>
Tensor<T> mvfn_forward(const Tensor<T>& x, const MvfnParams<T>& p) {
  check_feature_map(x, "mvfn_forward");
  if (x.dim(1) != p.in_channels())
    throw ShapeError("mvfn_forward: expected " + std::to_string(p.in_channels()) +
                     " channels, got " + std::to_string(x.dim(1)));
  auto h = conv2d(x, p.expand_w, p.expand_b);
  auto o3 = variance_branch(h, 0, p);
  auto o5 = variance_branch(h, 1, p);
  auto o7 = variance_branch(h, 2, p);
  auto merged = conv2d(concat<T>({o3, o5, o7}, 1), p.merge_w, p.merge_b);
  auto z = silu(add(merged, h));
  return conv2d(z, p.out_w, p.out_b);
}

}  // namespace that
