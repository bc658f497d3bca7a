#pragma once

// Finite-difference gradient checking in double precision.
//
// check_gradients compares backward() against central differences for a
// scalar-valued function rebuilt from leaf inputs on every call. The op
// registry (src/gradcheck.cpp) holds one randomized case per differentiable
// op type; cmd_gradcheck and the test suite both run it.

#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "that/tensor.hpp"

namespace that {

struct FdConfig {
  double step = 1e-4;
  double tol = 1e-5;
  double denom_floor = 1e-3;  // rel err = |a-n| / max(floor, |a|, |n|)
  int max_per_input = 0;      // 0 = every element; else evenly spaced sample
};

struct FdReport {
  std::string name;
  double max_rel = 0.0;
  std::size_t checked = 0;
  bool pass = true;
  std::string worst;

  std::string to_line() const {
    std::ostringstream os;
    os << (pass ? "PASS" : "FAIL") << "  " << name << "  max_rel=" << max_rel
       << "  elements=" << checked;
    if (!pass) os << "  worst: " << worst;
    return os.str();
  }
};

using ScalarFn = std::function<TensorD(const std::vector<TensorD>&)>;

// Checks d(fn)/d(inputs) for every element of every input. fn must rebuild
// its graph from the current input values on each call.
inline FdReport check_gradients(const std::string& name, std::vector<TensorD> inputs,
                                const ScalarFn& fn, const FdConfig& cfg = {}) {
  FdReport rep;
  rep.name = name;
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  TensorD loss = fn(inputs);
  if (loss.numel() != 1) throw ContractError("check_gradients: fn must return a scalar");
  backward(loss);

  const double h = cfg.step;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto& vals = inputs[i].data();
    const auto& grads = inputs[i].grad();
    std::size_t count = vals.size();
    std::size_t stride = 1;
    if (cfg.max_per_input > 0 && count > static_cast<std::size_t>(cfg.max_per_input)) {
      count = static_cast<std::size_t>(cfg.max_per_input);
      stride = vals.size() / count;
    }
    for (std::size_t t = 0; t < count; ++t) {
      const std::size_t j = t * stride;
      const double saved = vals[j];
      vals[j] = saved + h;
      const double fp = fn(inputs).item();
      vals[j] = saved - h;
      const double fm = fn(inputs).item();
      vals[j] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = grads[j];
      const double denom = std::max({cfg.denom_floor, std::fabs(analytic), std::fabs(numeric)});
      const double rel = std::fabs(analytic - numeric) / denom;
      ++rep.checked;
      if (rel > rep.max_rel) {
        rep.max_rel = rel;
        std::ostringstream os;
        os << "input " << i << " [" << j << "]: analytic=" << analytic
           << " numeric=" << numeric << " rel=" << rel;
        rep.worst = os.str();
      }
    }
  }
  rep.pass = rep.max_rel < cfg.tol;
  return rep;
}

// One registry entry per differentiable op type. `op` is the node op name the
// built graph must contain; run() executes the randomized instances.
struct OpCase {
  std::string op;
  std::function<FdReport(std::uint64_t seed)> run;
};

const std::vector<OpCase>& op_gradcheck_cases();

// Runs every registered case. Throws ContractError if an op type is listed
// more than once.
std::vector<FdReport> run_op_gradchecks(std::uint64_t seed = 0);

// End-to-end model check: L1 loss gradient w.r.t. a random subset of
// parameters on a tiny model with the attention mask frozen.
FdReport run_model_gradcheck(std::uint64_t seed = 0);

}  // namespace that
