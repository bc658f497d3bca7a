#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "that/gradcheck.hpp"
#include "that/mvfn.hpp"

using namespace that;

namespace {

int reflect_idx(int j, int n) {
  if (j < 0) j = -j;
  if (j >= n) j = 2 * n - 2 - j;
  return j;
}

// Window mean / mean-of-squares with reflect borders, independent of the
// library's separable implementation.
std::vector<double> window_mean(const std::vector<double>& x, int c, int h, int w, int k,
                                bool squared) {
  const int r = (k - 1) / 2;
  std::vector<double> out(x.size());
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        double acc = 0.0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            double v = x[(ch * h + reflect_idx(y + dy, h)) * w + reflect_idx(xx + dx, w)];
            acc += squared ? v * v : v;
          }
        out[(ch * h + y) * w + xx] = acc / (k * k);
      }
  return out;
}

}  // namespace

TEST_CASE("variance branch kills constant input away from borders") {
  std::mt19937_64 rng(11);
  auto p = MvfnParams<double>::zeros(2, 2);
  for (int i = 0; i < 3; ++i) {
    fill_uniform(p.dw_w[i], rng, -0.5, 0.5);
    fill_uniform(p.var_scale[i], rng, -1.0, 1.0);
    fill_uniform(p.var_bias[i], rng, -1.0, 1.0);
  }
  auto h = Tensor<double>::zeros({1, 4, 24, 24});
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 24 * 24; ++i) h.data()[c * 24 * 24 + i] = 0.3 + 0.2 * c;
  for (int br = 0; br < 3; ++br) {
    auto o = variance_branch(h, br, p);
    // zero-padded dw conv disturbs a border ring; interior stays constant and
    // the local-mean subtraction removes it exactly
    const int margin = 3 * (MvfnParams<double>::kernel_of(br) - 1) / 2;
    for (int c = 0; c < 4; ++c)
      for (int y = margin; y < 24 - margin; ++y)
        for (int x = margin; x < 24 - margin; ++x)
          CHECK(std::abs(o.data()[(c * 24 + y) * 24 + x]) < 1e-12);
  }
}

TEST_CASE("saturated gate reduces branch to plain high-pass") {
  std::mt19937_64 rng(12);
  auto p = MvfnParams<double>::zeros(1, 2);
  fill_uniform(p.dw_w[1], rng, -0.5, 0.5);
  fill_uniform(p.dw_b[1], rng, -0.5, 0.5);
  for (auto& v : p.var_bias[1].data()) v = 50.0;  // sigmoid pinned at 1
  auto h = Tensor<double>::zeros({1, 2, 10, 10});
  fill_uniform(h, rng, -1.0, 1.0);
  auto o = variance_branch(h, 1, p);
  auto b = conv2d(h, p.dw_w[1], p.dw_b[1], 1, PadMode::zero, 2);
  auto want = sub(b, avg_pool_local(b, 5));
  for (int i = 0; i < o.numel(); ++i) CHECK(std::abs(o.data()[i] - want.data()[i]) < 1e-6);
}

TEST_CASE("mvfn forward matches step-by-step oracle") {
  std::mt19937_64 rng(13);
  const int C = 4, H = 9, W = 9, hc = 8;
  auto p = MvfnParams<double>::init(C, rng, 2);
  fill_uniform(p.expand_b, rng, -0.1, 0.1);
  for (int i = 0; i < 3; ++i) {
    fill_uniform(p.dw_b[i], rng, -0.1, 0.1);
    fill_uniform(p.var_scale[i], rng, 0.5, 2.0);
    fill_uniform(p.var_bias[i], rng, -1.0, 1.0);
  }
  fill_uniform(p.merge_b, rng, -0.1, 0.1);
  fill_uniform(p.out_b, rng, -0.1, 0.1);
  auto x = Tensor<double>::zeros({1, C, H, W});
  fill_uniform(x, rng, -1.0, 1.0);

  auto got = mvfn_forward(x, p);

  std::vector<double> xv(x.data().begin(), x.data().end());
  int oh = 0, ow = 0;
  auto hv = oracle::conv2d(xv, 1, C, H, W, p.expand_w.data(), hc, 1, 1, p.expand_b.data(), 1,
                           0, 1, &oh, &ow);
  std::vector<double> cat;
  for (int br = 0; br < 3; ++br) {
    std::vector<double> scale(p.var_scale[br].data().begin(), p.var_scale[br].data().end());
    std::vector<double> bias(p.var_bias[br].data().begin(), p.var_bias[br].data().end());
    const int k = MvfnParams<double>::kernel_of(br);
    auto b = oracle::conv2d(hv, 1, hc, H, W, p.dw_w[br].data(), hc, k, k, p.dw_b[br].data(),
                            1, 0, hc, &oh, &ow);
    auto m1 = window_mean(b, hc, H, W, k, false);
    auto m2 = window_mean(b, hc, H, W, k, true);
    std::vector<double> g(b.size());
    for (int ch = 0; ch < hc; ++ch)
      for (int i = 0; i < H * W; ++i) {
        const int at = ch * H * W + i;
        double var = std::max(0.0, m2[at] - m1[at] * m1[at]);
        g[at] = b[at] / (1.0 + std::exp(-(scale[ch] * var + bias[ch])));
      }
    auto gm = window_mean(g, hc, H, W, k, false);
    for (size_t i = 0; i < g.size(); ++i) cat.push_back(g[i] - gm[i]);
  }
  auto merged = oracle::conv2d(cat, 1, 3 * hc, H, W, p.merge_w.data(), hc, 1, 1,
                               p.merge_b.data(), 1, 0, 1, &oh, &ow);
  std::vector<double> z(merged.size());
  for (size_t i = 0; i < z.size(); ++i) {
    double s = merged[i] + hv[i];
    z[i] = s / (1.0 + std::exp(-s));
  }
  auto want = oracle::conv2d(z, 1, hc, H, W, p.out_w.data(), C, 1, 1, p.out_b.data(), 1, 0, 1,
                             &oh, &ow);

  REQUIRE(got.numel() == (int)want.size());
  for (int i = 0; i < got.numel(); ++i) CHECK(std::abs(got.data()[i] - want[i]) < 1e-6);
}

TEST_CASE("mvfn maps zero input with zero biases to exactly zero") {
  std::mt19937_64 rng(14);
  auto p = MvfnParams<double>::init(3, rng, 2);
  for (int i = 0; i < 3; ++i) fill_uniform(p.var_bias[i], rng, -2.0, 2.0);
  auto x = Tensor<double>::zeros({2, 3, 7, 5});
  auto y = mvfn_forward(x, p);
  for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("mvfn preserves feature-map shape") {
  std::mt19937_64 rng(15);
  for (auto [c, h, w] : {std::tuple{2, 8, 8}, {5, 9, 13}, {1, 16, 4}}) {
    auto p = MvfnParams<float>::init(c, rng, 2);
    auto x = Tensor<float>::zeros({2, c, h, w});
    fill_uniform(x, rng, -1.0f, 1.0f);
    auto y = mvfn_forward(x, p);
    CHECK(y.shape() == Shape{2, c, h, w});
    CHECK(all_finite(y));
  }
  auto p = MvfnParams<float>::init(4, rng, 2);
  CHECK_THROWS_AS(mvfn_forward(Tensor<float>::zeros({1, 3, 8, 8}), p), ShapeError);
}

TEST_CASE("branch outputs are high-pass: per-channel means stay small") {
  std::mt19937_64 rng(16);
  auto p = MvfnParams<double>::init(2, rng, 2);
  for (int i = 0; i < 3; ++i) {
    fill_uniform(p.dw_b[i], rng, -0.2, 0.2);
    fill_uniform(p.var_bias[i], rng, -1.0, 1.0);
  }
  auto h = Tensor<double>::zeros({1, 4, 64, 64});
  fill_uniform(h, rng, -1.0, 1.0);
  for (int br = 0; br < 3; ++br) {
    auto o = variance_branch(h, br, p);
    for (int c = 0; c < 4; ++c) {
      double mean = 0.0;
      for (int i = 0; i < 64 * 64; ++i) mean += o.data()[c * 64 * 64 + i];
      mean /= 64.0 * 64.0;
      CHECK(std::abs(mean) < 1e-3);
    }
  }
}

TEST_CASE("mvfn parameter gradients agree with finite differences") {
  std::mt19937_64 rng(17);
  const int C = 3;
  auto p = MvfnParams<double>::init(C, rng, 2);
  fill_uniform(p.expand_b, rng, -0.1, 0.1);
  for (int i = 0; i < 3; ++i) {
    fill_uniform(p.dw_b[i], rng, -0.1, 0.1);
    fill_uniform(p.var_bias[i], rng, -0.5, 0.5);
  }
  fill_uniform(p.merge_b, rng, -0.1, 0.1);
  fill_uniform(p.out_b, rng, -0.1, 0.1);
  auto x = Tensor<double>::zeros({1, C, 6, 6});
  fill_uniform(x, rng, -1.0, 1.0);

  std::vector<TensorD> inputs = {x, p.expand_w, p.expand_b, p.merge_w, p.merge_b,
                                 p.out_w, p.out_b};
  for (int i = 0; i < 3; ++i) {
    inputs.push_back(p.dw_w[i]);
    inputs.push_back(p.dw_b[i]);
    inputs.push_back(p.var_scale[i]);
    inputs.push_back(p.var_bias[i]);
  }
  auto fn = [&](const std::vector<TensorD>& in) {
    MvfnParams<double> q;
    q.gamma = 2;
    q.expand_w = in[1];
    q.expand_b = in[2];
    q.merge_w = in[3];
    q.merge_b = in[4];
    q.out_w = in[5];
    q.out_b = in[6];
    for (int i = 0; i < 3; ++i) {
      q.dw_w[i] = in[7 + 4 * i];
      q.dw_b[i] = in[8 + 4 * i];
      q.var_scale[i] = in[9 + 4 * i];
      q.var_bias[i] = in[10 + 4 * i];
    }
    auto y = mvfn_forward(in[0], q);
    return mean_all(mul(y, y));
  };
  FdConfig cfg;
  cfg.tol = 1e-4;
  auto rep = check_gradients("mvfn", inputs, fn, cfg);
  INFO(rep.to_line());
  CHECK(rep.pass);
  CHECK(rep.max_rel < 1e-4);
}
