#include "that/gradcheck.hpp"

#include <random>
#include <set>

#include "that/attention.hpp"
#include "that/image_ops.hpp"
#include "that/model.hpp"

namespace that {

namespace {

TensorD rnd(std::mt19937_64& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  auto t = TensorD::zeros(std::move(s));
  fill_uniform(t, rng, lo, hi);
  return t;
}

// Uniform over [-1, -0.2] u [0.2, 1]: keeps finite differences away from
// the kinks of abs/relu.
TensorD rnd_off_zero(std::mt19937_64& rng, Shape s) {
  auto t = rnd(rng, std::move(s), 0.2, 1.0);
  std::bernoulli_distribution flip(0.5);
  for (auto& v : t.data())
    if (flip(rng)) v = -v;
  return t;
}

// Scalar head: a fixed random weighting makes every output element matter
// with a distinct coefficient, so indexing mistakes cannot cancel.
ScalarFn weighted_mean(std::mt19937_64& rng, const std::function<TensorD(const std::vector<TensorD>&)>& body,
                       const Shape& out_shape) {
  auto w = std::make_shared<TensorD>(rnd(rng, out_shape, 0.5, 1.5));
  return [body, w](const std::vector<TensorD>& in) { return mean_all(mul(body(in), *w)); };
}

// Confirms the case actually exercises its op before trusting the numbers.
FdReport checked_case(const std::string& op, std::vector<TensorD> inputs, const ScalarFn& fn,
                      const FdConfig& cfg = {}) {
  TensorD probe = fn(inputs);
  auto g = Graph<double>::record(probe);
  bool found = false;
  for (auto* n : g.order)
    if (n->op == op) found = true;
  FdReport rep = check_gradients(op, std::move(inputs), fn, cfg);
  if (!found) {
    rep.pass = false;
    rep.worst = "graph never contains op '" + op + "'";
  }
  return rep;
}

OpCase unary(const std::string& op, std::function<TensorD(const TensorD&)> f, bool off_zero = false) {
  return {op, [op, f, off_zero](std::uint64_t seed) {
            std::mt19937_64 rng(seed);
            TensorD a = off_zero ? rnd_off_zero(rng, {3, 5}) : rnd(rng, {3, 5});
            TensorD probe = f(a);
            auto fn = weighted_mean(rng, [f](const std::vector<TensorD>& in) { return f(in[0]); },
                                    probe.shape());
            return checked_case(op, {a}, fn);
          }};
}

OpCase binary(const std::string& op, std::function<TensorD(const TensorD&, const TensorD&)> f) {
  return {op, [op, f](std::uint64_t seed) {
            std::mt19937_64 rng(seed);
            TensorD a = rnd(rng, {2, 3, 4});
            TensorD b = rnd(rng, {2, 3, 4});
            auto fn = weighted_mean(
                rng, [f](const std::vector<TensorD>& in) { return f(in[0], in[1]); }, a.shape());
            return checked_case(op, {a, b}, fn);
          }};
}

std::vector<OpCase> build_cases() {
  std::vector<OpCase> cases;

  cases.push_back(unary("abs", [](const TensorD& a) { return abs(a); }, /*off_zero=*/true));

  cases.push_back(binary("add", [](const TensorD& a, const TensorD& b) { return add(a, b); }));

  cases.push_back({"add_axis", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     TensorD x = rnd(rng, {2, 3, 4});
                     TensorD v = rnd(rng, {3});
                     auto fn = weighted_mean(
                         rng, [](const std::vector<TensorD>& in) { return add_axis(in[0], in[1], 1); },
                         x.shape());
                     return checked_case("add_axis", {x, v}, fn);
                   }});

  cases.push_back({"add_bcast_outer", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     TensorD x = rnd(rng, {4, 3, 5});
                     TensorD b = rnd(rng, {3, 5});
                     auto fn = weighted_mean(
                         rng,
                         [](const std::vector<TensorD>& in) { return add_bcast_outer(in[0], in[1]); },
                         x.shape());
                     return checked_case("add_bcast_outer", {x, b}, fn);
                   }});

  cases.push_back({"apply_mask", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     TensorD m = rnd(rng, {4, 6});
                     std::bernoulli_distribution keep(0.6);
                     std::vector<std::uint8_t> mask(m.numel());
                     for (std::size_t r = 0; r < 4; ++r) {
                       for (std::size_t c = 0; c < 6; ++c) mask[r * 6 + c] = keep(rng) ? 1 : 0;
                       mask[r * 6 + r % 6] = 1;  // every row keeps something
                     }
                     // Softmax head keeps the sentinel out of the loss scale.
                     auto fn = weighted_mean(
                         rng,
                         [mask](const std::vector<TensorD>& in) {
                           return softmax(apply_mask(in[0], mask), 1);
                         },
                         m.shape());
                     return checked_case("apply_mask", {m}, fn);
                   }});

  cases.push_back({"bmm", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     TensorD a = rnd(rng, {3, 4, 5});
                     TensorD b = rnd(rng, {3, 5, 2});
                     TensorD c = rnd(rng, {3, 5, 2});
                     auto fn = weighted_mean(
                         rng,
                         [](const std::vector<TensorD>& in) {
                           // plain and transposed-B flavors share the op label
                           return bmm(bmm(in[0], in[1]), in[2], /*trans_b=*/true);
                         },
                         Shape{3, 4, 5});
                     return checked_case("bmm", {a, b, c}, fn);
                   }});

  cases.push_back({"concat", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     TensorD a = rnd(rng, {2, 3, 4});
                     TensorD b = rnd(rng, {2, 2, 4});
                     auto fn = weighted_mean(
                         rng,
                         [](const std::vector<TensorD>& in) {
                           return concat(std::vector<TensorD>{in[0], in[1]}, 1);
                         },
                         Shape{2, 5, 4});
                     return checked_case("concat", {a, b}, fn);
                   }});

  cases.push_back({"conv2d", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     TensorD x = rnd(rng, {1, 4, 6, 6});
                     TensorD w = rnd(rng, {4, 2, 3, 3});  // groups=2
                     TensorD b = rnd(rng, {4});
                     auto fn = weighted_mean(
                         rng,
                         [](const std::vector<TensorD>& in) {
                           return conv2d(in[0], in[1], in[2], 1, PadMode::reflect, 2);
                         },
                         x.shape());
                     return checked_case("conv2d", {x, w, b}, fn);
                   }});

  cases.push_back({"cubic_resize", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     TensorD x = rnd(rng, {1, 2, 5, 6});
                     auto fn = weighted_mean(
                         rng,
                         [](const std::vector<TensorD>& in) { return bicubic_resize(in[0], 8, 4); },
                         Shape{1, 2, 8, 4});
                     return checked_case("cubic_resize", {x}, fn);
                   }});

  cases.push_back({"decimate", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     TensorD x = rnd(rng, {1, 2, 6, 6});
                     auto fn = weighted_mean(
                         rng, [](const std::vector<TensorD>& in) { return decimate(in[0], 2); },
                         Shape{1, 2, 3, 3});
                     return checked_case("decimate", {x}, fn);
                   }});

  cases.push_back({"gather_cols", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     TensorD t = rnd(rng, {5, 7});
                     const std::vector<int> idx{0, 3, 3, 6};  // repeat exercises scatter-add
                     auto fn = weighted_mean(
                         rng, [idx](const std::vector<TensorD>& in) { return gather_cols(in[0], idx); },
                         Shape{5, 4});
                     return checked_case("gather_cols", {t}, fn);
                   }});

  cases.push_back({"l2_normalize", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     TensorD a = rnd_off_zero(rng, {4, 6});
                     auto fn = weighted_mean(
                         rng, [](const std::vector<TensorD>& in) { return l2_normalize(in[0], 1); },
                         a.shape());
                     return checked_case("l2_normalize", {a}, fn);
                   }});

  cases.push_back({"layer_norm", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     TensorD a = rnd(rng, {2, 5, 4});
                     auto fn = weighted_mean(
                         rng, [](const std::vector<TensorD>& in) { return layer_norm(in[0], 1); },
                         a.shape());
                     return checked_case("layer_norm", {a}, fn);
                   }});

  cases.push_back({"matmul", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     TensorD a = rnd(rng, {4, 5});
                     TensorD b = rnd(rng, {5, 3});
                     auto fn = weighted_mean(
                         rng, [](const std::vector<TensorD>& in) { return matmul(in[0], in[1]); },
                         Shape{4, 3});
                     return checked_case("matmul", {a, b}, fn);
                   }});

  cases.push_back({"mean", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     TensorD a = rnd(rng, {3, 4, 5});
                     auto fn = weighted_mean(
                         rng, [](const std::vector<TensorD>& in) { return mean(in[0], 1); },
                         Shape{3, 5});
                     return checked_case("mean", {a}, fn);
                   }});

  cases.push_back({"mean_all", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     TensorD a = rnd(rng, {3, 4});
                     TensorD w = rnd(rng, {3, 4}, 0.5, 1.5);
                     auto fn = [w](const std::vector<TensorD>& in) { return mean_all(mul(in[0], w)); };
                     return checked_case("mean_all", {a}, fn);
                   }});

  cases.push_back(binary("mul", [](const TensorD& a, const TensorD& b) { return mul(a, b); }));

  cases.push_back({"mul_axis", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     TensorD x = rnd(rng, {2, 3, 4});
                     TensorD v = rnd(rng, {3});
                     auto fn = weighted_mean(
                         rng, [](const std::vector<TensorD>& in) { return mul_axis(in[0], in[1], 1); },
                         x.shape());
                     return checked_case("mul_axis", {x, v}, fn);
                   }});

  cases.push_back({"mul_scalar_t", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     TensorD a = rnd(rng, {3, 4});
                     TensorD s = rnd(rng, {1});
                     auto fn = weighted_mean(
                         rng, [](const std::vector<TensorD>& in) { return mul_scalar_t(in[0], in[1]); },
                         a.shape());
                     return checked_case("mul_scalar_t", {a, s}, fn);
                   }});

  cases.push_back({"pad2d", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     TensorD x = rnd(rng, {1, 2, 4, 5});
                     auto fn = weighted_mean(
                         rng,
                         [](const std::vector<TensorD>& in) {
                           return pad2d(in[0], 1, 2, 2, 1, PadMode::reflect);
                         },
                         Shape{1, 2, 7, 8});
                     return checked_case("pad2d", {x}, fn);
                   }});

  cases.push_back({"permute", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     TensorD x = rnd(rng, {2, 3, 4, 5});
                     auto fn = weighted_mean(
                         rng,
                         [](const std::vector<TensorD>& in) {
                           return permute(in[0], {0, 3, 1, 2});
                         },
                         Shape{2, 5, 3, 4});
                     return checked_case("permute", {x}, fn);
                   }});

  cases.push_back(unary("relu", [](const TensorD& a) { return relu(a); }, /*off_zero=*/true));

  cases.push_back({"reshape", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     TensorD x = rnd(rng, {2, 3, 4});
                     auto fn = weighted_mean(
                         rng, [](const std::vector<TensorD>& in) { return reshape(in[0], {4, 6}); },
                         Shape{4, 6});
                     return checked_case("reshape", {x}, fn);
                   }});

  cases.push_back(
      unary("scalar_add", [](const TensorD& a) { return scalar_add(a, 0.37); }));

  cases.push_back(
      unary("scalar_mul", [](const TensorD& a) { return scalar_mul(a, -1.3); }));

  cases.push_back(unary("sigmoid", [](const TensorD& a) { return sigmoid(a); }));

  cases.push_back(unary("silu", [](const TensorD& a) { return silu(a); }));

  cases.push_back({"slice", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     TensorD x = rnd(rng, {2, 6, 5});
                     auto fn = weighted_mean(
                         rng, [](const std::vector<TensorD>& in) { return slice(in[0], 1, 2, 3); },
                         Shape{2, 3, 5});
                     return checked_case("slice", {x}, fn);
                   }});

  cases.push_back({"softmax", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     TensorD a = rnd(rng, {4, 7}, -2.0, 2.0);
                     auto fn = weighted_mean(
                         rng, [](const std::vector<TensorD>& in) { return softmax(in[0], 1); },
                         a.shape());
                     return checked_case("softmax", {a}, fn);
                   }});

  cases.push_back(binary("sub", [](const TensorD& a, const TensorD& b) { return sub(a, b); }));

  return cases;
}

}  // namespace

const std::vector<OpCase>& op_gradcheck_cases() {
  static const std::vector<OpCase> cases = build_cases();
  return cases;
}

std::vector<FdReport> run_op_gradchecks(std::uint64_t seed) {
  const auto& cases = op_gradcheck_cases();
  std::set<std::string> seen;
  for (const auto& c : cases)
    if (!seen.insert(c.op).second)
      throw ContractError("gradcheck registry lists '" + c.op + "' twice");
  std::vector<FdReport> reports;
  reports.reserve(cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i)
    reports.push_back(cases[i].run(seed * 1000003ULL + i));
  return reports;
}

FdReport run_model_gradcheck(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.bands = 3;
  cfg.channels = 16;
  cfg.blocks = 1;
  cfg.heads = 2;
  cfg.window = 4;
  cfg.scale = 2;
  auto model = ThatModel<double>::init(cfg, seed);

  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  TensorD y = rnd(rng, {1, cfg.bands, 4, 4}, 0.0, 1.0);
  TensorD x = rnd(rng, {1, 1, 8, 8}, 0.0, 1.0);
  TensorD w = rnd(rng, {1, cfg.bands, 8, 8}, 0.5, 1.5);

  // Record the attention masks once, then hold them fixed so the finite
  // differences probe a smooth function.
  MaskState masks;
  masks.mode = MaskMode::record;
  that_forward(y, x, model, &masks);
  masks.mode = MaskMode::replay;

  std::vector<TensorD> params;
  for (auto& [name, t] : model.named_params()) params.push_back(t);

  auto fn = [&model, &y, &x, &w, &masks](const std::vector<TensorD>&) {
    masks.rewind();
    return mean_all(mul(that_forward(y, x, model, &masks), w));
  };

  FdConfig fd;
  fd.step = 1e-5;
  fd.tol = 1e-3;
  fd.max_per_input = 6;
  FdReport rep = check_gradients("model_end_to_end", std::move(params), fn, fd);
  return rep;
}

}  // namespace that
