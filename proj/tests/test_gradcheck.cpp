#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "that/gradcheck.hpp"

using namespace that;

namespace {

const std::vector<std::string> kDifferentiableOps = {
    "abs",        "add",        "add_axis",  "add_bcast_outer", "apply_mask",
    "bmm",        "concat",     "conv2d",    "cubic_resize",    "decimate",
    "gather_cols", "l2_normalize", "layer_norm", "matmul",      "mean",
    "mean_all",   "mul",        "mul_axis",  "mul_scalar_t",    "pad2d",
    "permute",    "relu",       "reshape",   "scalar_add",      "scalar_mul",
    "sigmoid",    "silu",       "slice",     "softmax",         "sub"};

struct ScopedCorruption {
  explicit ScopedCorruption(const std::string& op) { set_adjoint_corruption(op); }
  ~ScopedCorruption() { clear_adjoint_corruption(); }
};

}  // namespace

TEST_CASE("gradcheck: registry covers every differentiable op exactly once") {
  const auto& cases = op_gradcheck_cases();
  std::set<std::string> labels;
  for (const auto& c : cases) labels.insert(c.op);
  CHECK(labels.size() == cases.size());
  REQUIRE(labels.size() == kDifferentiableOps.size());
  for (const auto& op : kDifferentiableOps) {
    CAPTURE(op);
    CHECK(labels.count(op) == 1);
  }
}

TEST_CASE("gradcheck: every op passes finite differences on two seeds") {
  for (std::uint64_t seed : {0ULL, 1ULL}) {
    const auto reports = run_op_gradchecks(seed);
    REQUIRE(reports.size() == kDifferentiableOps.size());
    for (const auto& r : reports) {
      CAPTURE(r.name);
      CAPTURE(r.worst);
      CHECK(r.pass);
      CHECK(r.max_rel < 1e-5);
      CHECK(r.checked > 0);
    }
  }
}

TEST_CASE("gradcheck: corrupted adjoint is caught and named") {
  ScopedCorruption guard("conv2d");
  const auto reports = run_op_gradchecks(0);
  int failed = 0;
  for (const auto& r : reports) {
    if (r.name == "conv2d") {
      CHECK_FALSE(r.pass);
      ++failed;
    }
  }
  CHECK(failed == 1);

  // The elementwise ops do not route through conv2d, so they stay green.
  for (const auto& r : reports)
    if (r.name == "sigmoid" || r.name == "matmul") CHECK(r.pass);
}

TEST_CASE("gradcheck: report line says PASS/FAIL with the op name") {
  FdReport rep;
  rep.name = "conv2d";
  rep.max_rel = 2e-6;
  rep.checked = 99;
  CHECK(rep.to_line().find("PASS") == 0);
  CHECK(rep.to_line().find("conv2d") != std::string::npos);
  rep.pass = false;
  rep.worst = "input 0 [3]";
  CHECK(rep.to_line().find("FAIL") == 0);
  CHECK(rep.to_line().find("input 0 [3]") != std::string::npos);
}

TEST_CASE("gradcheck: tiny model end to end under 1e-3") {
  const FdReport rep = run_model_gradcheck(0);
  CAPTURE(rep.worst);
  CHECK(rep.pass);
  CHECK(rep.max_rel < 1e-3);
  CHECK(rep.checked >= 100);
}

TEST_CASE("gradcheck: model check notices a corrupted adjoint") {
  ScopedCorruption guard("layer_norm");
  const FdReport rep = run_model_gradcheck(0);
  CHECK_FALSE(rep.pass);
}
