#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "that/attention.hpp"
#include "that/gradcheck.hpp"

using namespace that;

namespace {

TensorD random_map(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  auto t = TensorD::zeros(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

}  // namespace

TEST_CASE("similarity_matrix basics") {
  auto q = TensorD::from({2, 2}, {1.0, 0.0, 0.0, 1.0});
  auto m = similarity_matrix(q, q, 1.0);
  CHECK(m.data()[0] == doctest::Approx(1.0));
  CHECK(m.data()[1] == doctest::Approx(0.0));
  CHECK(m.data()[2] == doctest::Approx(0.0));
  CHECK(m.data()[3] == doctest::Approx(1.0));

  std::mt19937_64 rng(1);
  auto a = random_map({3, 5}, rng);
  auto b = random_map({3, 5}, rng);
  auto z = similarity_matrix(a, b, 0.0);
  for (double v : z.data()) CHECK(v == 0.0);

  auto m2 = similarity_matrix(TensorD::from({1, 2}, {3.0, 4.0}),
                              TensorD::from({1, 2}, {4.0, 3.0}), 1.0);
  CHECK(m2.data()[0] == doctest::Approx(24.0 / 25.0));

  const double tau = 1.7;
  auto bounded = similarity_matrix(a, b, tau);
  for (double v : bounded.data()) {
    CHECK(v <= tau + 1e-12);
    CHECK(v >= -tau - 1e-12);
  }

  CHECK_THROWS_AS(similarity_matrix(a, random_map({3, 4}, rng), 1.0), ShapeError);
}

TEST_CASE("kmeans_mask spot values") {
  auto m = kmeans_mask(TensorD::from({1, 4}, {0.9, 0.8, 0.1, 0.05}));
  CHECK(m.m == std::vector<std::uint8_t>{1, 1, 0, 0});

  auto c = kmeans_mask(TensorD::from({1, 3}, {0.4, 0.4, 0.4}));
  CHECK(c.m == std::vector<std::uint8_t>{1, 1, 1});

  auto two = kmeans_mask(TensorD::from({1, 2}, {1.0, 0.0}));
  CHECK(two.m == std::vector<std::uint8_t>{1, 0});
}

TEST_CASE("kmeans_mask rows keep at least one entry and respect the threshold order") {
  std::mt19937_64 rng(2);
  for (int it = 0; it < 50; ++it) {
    auto scores = random_map({6, 9}, rng);
    auto mask = kmeans_mask(scores);
    for (int r = 0; r < 6; ++r) {
      double min_kept = 1e300, max_dropped = -1e300;
      int kept = 0;
      for (int c = 0; c < 9; ++c) {
        const double v = scores.data()[r * 9 + c];
        if (mask.at(r, c)) {
          ++kept;
          min_kept = std::min(min_kept, v);
        } else {
          max_dropped = std::max(max_dropped, v);
        }
      }
      CHECK(kept >= 1);
      if (kept < 9) CHECK(min_kept >= max_dropped);
    }
  }
}

TEST_CASE("kmeans_mask agrees with the exhaustive optimal 2-partition") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> len(2, 12);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  int agree = 0;
  const int total = 100;
  for (int it = 0; it < total; ++it) {
    const int n = len(rng);
    std::vector<double> row(n);
    for (auto& v : row) v = val(rng);
    auto scores = TensorD::from({1, n}, row);
    auto mask = kmeans_mask(scores);
    auto ref = oracle::two_partition_ref(row);
    bool same = true;
    for (int i = 0; i < n; ++i)
      if (mask.m[i] != ref[i]) same = false;
    if (same) ++agree;
  }
  CHECK(agree == total);
}

TEST_CASE("pivotal_softmax masks before normalizing") {
  auto m = TensorD::from({1, 3}, {0.9, 0.8, 0.1});
  PivotalMask keep{1, 3, {1, 1, 0}};
  auto p = pivotal_softmax(m, keep);
  CHECK(p.data()[0] == doctest::Approx(0.5250).epsilon(1e-4));
  CHECK(p.data()[1] == doctest::Approx(0.4750).epsilon(1e-4));
  CHECK(p.data()[2] < 1e-12);
  CHECK(p.data()[0] + p.data()[1] == doctest::Approx(1.0).epsilon(1e-6));

  PivotalMask ones{1, 3, {1, 1, 1}};
  auto full = pivotal_softmax(m, ones);
  auto plain = softmax(m, 1);
  CHECK(full.data() == plain.data());

  PivotalMask single{1, 3, {0, 1, 0}};
  auto one = pivotal_softmax(m, single);
  CHECK(one.data()[1] == doctest::Approx(1.0));
}

TEST_CASE("pivotal_softmax gradient flows only through kept entries") {
  auto m = TensorD::from({1, 4}, {0.3, -0.2, 0.9, 0.1}, true);
  PivotalMask keep{1, 4, {1, 0, 1, 0}};
  auto w = TensorD::from({1, 4}, {1.0, 2.0, 3.0, 4.0});
  backward(mean_all(pivotal_softmax(m, keep) * w));
  CHECK(m.grad()[1] == 0.0);
  CHECK(m.grad()[3] == 0.0);
  CHECK(m.grad()[0] != 0.0);
  CHECK(m.grad()[2] != 0.0);
}

TEST_CASE("ptsa_forward keeps input shape in both token modes") {
  std::mt19937_64 rng(4);
  AttentionConfig cfg;
  cfg.heads = 2;
  cfg.window = 4;
  auto p = PtsaParams<double>::init(16, cfg.heads, rng);
  auto x = random_map({1, 16, 8, 8}, rng);

  cfg.token_axis = TokenAxis::channel;
  CHECK(ptsa_forward(x, p, cfg).shape() == Shape{1, 16, 8, 8});

  cfg.token_axis = TokenAxis::spatial_window;
  CHECK(ptsa_forward(x, p, cfg).shape() == Shape{1, 16, 8, 8});

  auto odd = random_map({1, 16, 7, 9}, rng);
  CHECK(ptsa_forward(odd, p, cfg).shape() == Shape{1, 16, 7, 9});

  cfg.heads = 3;
  CHECK_THROWS_AS(ptsa_forward(x, p, cfg), ConfigError);
}

TEST_CASE("ptsa_forward is zero when V projects to zero") {
  std::mt19937_64 rng(5);
  AttentionConfig cfg;
  cfg.heads = 2;
  auto p = PtsaParams<double>::init(8, cfg.heads, rng);
  for (auto& v : p.wv.data()) v = 0.0;
  for (auto& v : p.bo.data()) v = 0.0;
  auto x = random_map({1, 8, 4, 4}, rng);
  auto y = ptsa_forward(x, p, cfg);
  for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("ptsa all-ones mask equals the dense attention oracle, channel tokens") {
  std::mt19937_64 rng(6);
  AttentionConfig cfg;
  cfg.heads = 2;
  const int C = 8, H = 4, W = 5;
  for (int inst = 0; inst < 10; ++inst) {
    auto p = PtsaParams<double>::init(C, cfg.heads, rng);
    fill_uniform(p.tau, rng, 0.5, 2.0);
    auto x = random_map({1, C, H, W}, rng);
    MaskState ones;
    ones.mode = MaskMode::all_ones;
    auto y = ptsa_forward(x, p, cfg, &ones);

    auto q = conv2d(x, p.wq), k = conv2d(x, p.wk), v = conv2d(x, p.wv);
    const int T = C / cfg.heads, d = H * W;
    auto merged = TensorD::zeros({1, C, H, W});
    for (int h = 0; h < cfg.heads; ++h) {
      std::vector<double> qs(T * d), ks(T * d), vs(T * d);
      for (int t = 0; t < T; ++t)
        for (int j = 0; j < d; ++j) {
          qs[t * d + j] = q.data()[(h * T + t) * d + j];
          ks[t * d + j] = k.data()[(h * T + t) * d + j];
          vs[t * d + j] = v.data()[(h * T + t) * d + j];
        }
      auto o = oracle::attention_ref(qs, ks, vs, T, d, d, true, p.tau.data()[h], 1.0, {});
      for (int t = 0; t < T; ++t)
        for (int j = 0; j < d; ++j) merged.data()[(h * T + t) * d + j] = o[t * d + j];
    }
    auto ref = conv2d(merged, p.wo, p.bo);
    for (std::size_t i = 0; i < ref.numel(); ++i)
      CHECK(y.data()[i] == doctest::Approx(ref.data()[i]).epsilon(1e-6));
  }
}

TEST_CASE("ptsa mask record and replay reproduce the forward exactly") {
  std::mt19937_64 rng(7);
  AttentionConfig cfg;
  cfg.heads = 2;
  auto p = PtsaParams<double>::init(8, cfg.heads, rng);
  auto x = random_map({2, 8, 4, 4}, rng);

  MaskState st;
  st.mode = MaskMode::record;
  auto y1 = ptsa_forward(x, p, cfg, &st);

  st.mode = MaskMode::replay;
  st.rewind();
  auto y2 = ptsa_forward(x, p, cfg, &st);
  CHECK(y1.data() == y2.data());

  auto y3 = ptsa_forward(x, p, cfg);  // fresh kmeans
  CHECK(y1.data() == y3.data());

  st.rewind();
  st.mode = MaskMode::replay;
  ptsa_forward(x, p, cfg, &st);
  CHECK_THROWS_AS(ptsa_forward(x, p, cfg, &st), ContractError);
}

TEST_CASE("ptsa_attend is equivariant under token permutation") {
  std::mt19937_64 rng(8);
  const int T = 7, d = 5;
  auto q = random_map({1, T, d}, rng);
  auto k = random_map({1, T, d}, rng);
  auto v = random_map({1, T, d}, rng);
  auto out = ptsa_attend(q, k, v, nullptr);

  std::vector<int> perm(T);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);

  auto permute_tokens = [&](const TensorD& t) {
    auto r = TensorD::zeros({1, T, d});
    for (int i = 0; i < T; ++i)
      for (int j = 0; j < d; ++j) r.data()[i * d + j] = t.data()[perm[i] * d + j];
    return r;
  };
  auto out_p = ptsa_attend(permute_tokens(q), permute_tokens(k), permute_tokens(v), nullptr);
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < d; ++j)
      CHECK(out_p.data()[i * d + j] ==
            doctest::Approx(out.data()[perm[i] * d + j]).epsilon(1e-12));
}

TEST_CASE("wsa single 8x8 window equals the global attention oracle") {
  std::mt19937_64 rng(9);
  AttentionConfig cfg;
  cfg.heads = 2;
  cfg.window = 8;
  const int C = 6, H = 8, W = 8;
  auto p = WsaParams<double>::init(C, cfg.heads, cfg.window, rng);
  auto x = random_map({1, C, H, W}, rng);
  auto y = wsa_forward(x, p, cfg);

  auto q = conv2d(x, p.wq), k = conv2d(x, p.wk), v = conv2d(x, p.wv);
  const int dh = C / cfg.heads, T = H * W, span = 2 * cfg.window - 1;
  auto merged = TensorD::zeros({1, C, H, W});
  for (int h = 0; h < cfg.heads; ++h) {
    std::vector<double> qs(T * dh), ks(T * dh), vs(T * dh), bias(T * T);
    for (int t = 0; t < T; ++t)
      for (int c = 0; c < dh; ++c) {
        qs[t * dh + c] = q.data()[(h * dh + c) * T + t];
        ks[t * dh + c] = k.data()[(h * dh + c) * T + t];
        vs[t * dh + c] = v.data()[(h * dh + c) * T + t];
      }
    for (int ti = 0; ti < T; ++ti)
      for (int tj = 0; tj < T; ++tj) {
        const int dy = ti / W - tj / W, dx = ti % W - tj % W;
        bias[ti * T + tj] =
            p.rel_bias.data()[h * span * span + (dy + cfg.window - 1) * span + dx +
                              cfg.window - 1];
      }
    auto o = oracle::attention_ref(qs, ks, vs, T, dh, dh, false, 1.0,
                                   1.0 / std::sqrt(double(dh)), bias);
    for (int t = 0; t < T; ++t)
      for (int c = 0; c < dh; ++c) merged.data()[(h * dh + c) * T + t] = o[t * dh + c];
  }
  auto ref = conv2d(merged, p.wo, p.bo);
  for (std::size_t i = 0; i < ref.numel(); ++i)
    CHECK(y.data()[i] == doctest::Approx(ref.data()[i]).epsilon(1e-6));
}

TEST_CASE("wsa on constant input stays spatially constant") {
  std::mt19937_64 rng(10);
  AttentionConfig cfg;
  cfg.heads = 3;
  cfg.window = 4;
  const int C = 6;
  auto p = WsaParams<double>::init(C, cfg.heads, cfg.window, rng);
  auto x = TensorD::full({1, C, 8, 8}, 0.8);
  auto y = wsa_forward(x, p, cfg);
  for (int c = 0; c < C; ++c)
    for (int i = 1; i < 64; ++i)
      CHECK(y.data()[c * 64 + i] == doctest::Approx(y.data()[c * 64]).epsilon(1e-9));
}

TEST_CASE("wsa pads and crops non-multiple extents") {
  std::mt19937_64 rng(11);
  AttentionConfig cfg;  // heads 6, window 8
  auto p = WsaParams<double>::init(12, cfg.heads, cfg.window, rng);
  auto x = random_map({1, 12, 16, 16}, rng);
  CHECK(wsa_forward(x, p, cfg).shape() == Shape{1, 12, 16, 16});
  auto odd = random_map({1, 12, 13, 10}, rng);
  CHECK(wsa_forward(odd, p, cfg).shape() == Shape{1, 12, 13, 10});
  cfg.heads = 5;
  CHECK_THROWS_AS(wsa_forward(x, p, cfg), ConfigError);
}

TEST_CASE("attention parameter gradients agree with finite differences") {
  std::mt19937_64 rng(12);
  AttentionConfig cfg;
  cfg.heads = 2;
  cfg.window = 4;

  {
    auto p = PtsaParams<double>::init(4, cfg.heads, rng);
    auto x = random_map({1, 4, 3, 3}, rng);
    MaskState st;
    st.mode = MaskMode::record;
    ptsa_forward(x, p, cfg, &st);
    st.mode = MaskMode::replay;
    auto fn = [&](const std::vector<TensorD>& in) {
      PtsaParams<double> q;
      q.wq = in[0];
      q.wk = in[1];
      q.wv = in[2];
      q.wo = in[3];
      q.bo = in[4];
      q.tau = in[5];
      st.rewind();
      auto y = ptsa_forward(in[6], q, cfg, &st);
      return mean_all(mul(y, y));
    };
    auto rep = check_gradients("ptsa_params", {p.wq, p.wk, p.wv, p.wo, p.bo, p.tau, x}, fn);
    INFO(rep.worst);
    CHECK(rep.pass);
  }
  {
    auto p = WsaParams<double>::init(4, cfg.heads, cfg.window, rng);
    auto x = random_map({1, 4, 4, 4}, rng);
    auto fn = [&](const std::vector<TensorD>& in) {
      WsaParams<double> q;
      q.wq = in[0];
      q.wk = in[1];
      q.wv = in[2];
      q.wo = in[3];
      q.bo = in[4];
      q.rel_bias = in[5];
      auto y = wsa_forward(in[6], q, cfg);
      return mean_all(mul(y, y));
    };
    auto rep =
        check_gradients("wsa_params", {p.wq, p.wk, p.wv, p.wo, p.bo, p.rel_bias, x}, fn);
    INFO(rep.worst);
    CHECK(rep.pass);
  }
}
