#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation.
//
// A Tensor<T> is a shared handle to a Node<T>. Every operation records its
// parents and an adjoint closure on the result node; backward(loss) walks the
// recorded graph once in reverse topological order. T is float for training
// and inference, double for finite-difference gradient checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "that/errors.hpp"

namespace that {

using Shape = std::vector<int>;

// Masked-out attention logits are set to this sentinel; it underflows softmax
// to zero in single precision without producing NaN.
constexpr float kMaskSentinel = -1e9f;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d <= 0) throw ShapeError("tensor extent must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

struct AxisSplit {
  std::size_t outer, n, inner;
};

// Decomposes a shape as outer x n x inner around `axis`.
inline AxisSplit split_axis(const Shape& s, int axis) {
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  AxisSplit r{1, static_cast<std::size_t>(s[axis]), 1};
  for (int i = 0; i < axis; ++i) r.outer *= static_cast<std::size_t>(s[i]);
  for (int i = axis + 1; i < static_cast<int>(s.size()); ++i)
    r.inner *= static_cast<std::size_t>(s[i]);
  return r;
}

namespace detail {
// Test hook for the gradcheck negative control: the incoming gradient of any
// node whose op name matches is scaled by 1%, corrupting that op's adjoint.
inline std::string& corrupt_op() {
  static std::string s;
  return s;
}
}  // namespace detail

inline void set_adjoint_corruption(const std::string& op_name) { detail::corrupt_op() = op_name; }
inline void clear_adjoint_corruption() { detail::corrupt_op().clear(); }

template <class T>
struct Node {
  Shape shape;
  std::vector<T> val;
  std::vector<T> grad;  // allocated on first touch
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backprop;  // accumulates this node's grad into parents

  std::size_t numel() const { return val.size(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(val.size(), T(0));
  }
};

template <class T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (shape_numel(shape) != data.size())
      throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                       shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<Node<T>>();
    t.node_->shape = std::move(shape);
    t.node_->val = std::move(data);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::size_t n = shape_numel(shape);
    return from(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor full(Shape shape, T v, bool requires_grad = false) {
    std::size_t n = shape_numel(shape);
    return from(std::move(shape), std::vector<T>(n, v), requires_grad);
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from({1}, std::vector<T>{v}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i)); }
  std::size_t numel() const { return node_->val.size(); }

  std::vector<T>& data() { return node_->val; }
  const std::vector<T>& data() const { return node_->val; }

  // Lazily materializes a zero buffer, so leaves never reached by backward
  // read as zero gradient.
  std::vector<T>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }

  const char* op() const { return node_->op; }

  T item() const {
    if (numel() != 1) throw ContractError("item() requires a scalar tensor");
    return node_->val[0];
  }

  std::shared_ptr<Node<T>> node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// ---------------------------------------------------------------------------
// Graph: the recorded computation in topological order (parents first).
// ---------------------------------------------------------------------------

template <class T>
struct Graph {
  std::shared_ptr<Node<T>> root;  // keeps the recorded nodes alive
  std::vector<Node<T>*> order;    // parents precede children

  static Graph record(const Tensor<T>& root) {
    Graph g;
    if (!root.defined()) return g;
    g.root = root.node();
    std::unordered_set<Node<T>*> seen;
    // Iterative post-order DFS.
    struct Frame {
      Node<T>* n;
      std::size_t next_parent;
    };
    std::vector<Frame> stack;
    Node<T>* r = root.node().get();
    if (seen.insert(r).second) stack.push_back({r, 0});
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next_parent < f.n->parents.size()) {
        Node<T>* p = f.n->parents[f.next_parent++].get();
        if (seen.insert(p).second) stack.push_back({p, 0});
      } else {
        g.order.push_back(f.n);
        stack.pop_back();
      }
    }
    return g;
  }

  // Runs all adjoints in reverse topological order; each node exactly once.
  void run_backward() {
    const std::string& corrupt = detail::corrupt_op();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* n = *it;
      if (!n->backprop || !n->requires_grad || n->grad.empty()) continue;
      if (!corrupt.empty() && corrupt == n->op) {
        for (T& g : n->grad) g *= T(1.01);
        n->backprop();
        for (T& g : n->grad) g /= T(1.01);
      } else {
        n->backprop();
      }
    }
  }
};

// Populates grad on every requires_grad leaf reachable from `loss`.
template <class T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ContractError("backward() requires a scalar loss");
  if (!loss.requires_grad()) return;
  Graph<T> g = Graph<T>::record(loss);
  loss.node()->ensure_grad();
  loss.node()->grad[0] = T(1);
  g.run_backward();
}

// ---------------------------------------------------------------------------
// Initialization helpers (deterministic given the generator state).
// ---------------------------------------------------------------------------

template <class T>
void fill_uniform(Tensor<T>& t, std::mt19937_64& rng, T lo, T hi) {
  std::uniform_real_distribution<double> d(static_cast<double>(lo), static_cast<double>(hi));
  for (T& v : t.data()) v = static_cast<T>(d(rng));
}

// Normal(0, std) truncated at two standard deviations.
template <class T>
void fill_trunc_normal(Tensor<T>& t, std::mt19937_64& rng, T std_dev) {
  std::normal_distribution<double> d(0.0, 1.0);
  for (T& v : t.data()) {
    double z = d(rng);
    while (std::fabs(z) > 2.0) z = d(rng);
    v = static_cast<T>(z * static_cast<double>(std_dev));
  }
}

template <class T>
bool all_finite(const Tensor<T>& t) {
  for (T v : t.data())
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (!same_shape(a.shape(), b.shape()))
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("add", a, b);
  std::vector<T> v(a.numel());
  const auto &av = a.data(), &bv = b.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] + bv[i];
  auto out = Tensor<T>::from(a.shape(), std::move(v));
  auto* on = out.node().get();
  on->op = "add";
  on->parents = {a.node(), b.node()};
  on->requires_grad = a.requires_grad() || b.requires_grad();
  if (on->requires_grad) {
    auto pa = a.node(), pb = b.node();
    on->backprop = [on, pa, pb] {
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) pa->grad[i] += on->grad[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) pb->grad[i] += on->grad[i];
      }
    };
  }
  return out;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("sub", a, b);
  std::vector<T> v(a.numel());
  const auto &av = a.data(), &bv = b.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] - bv[i];
  auto out = Tensor<T>::from(a.shape(), std::move(v));
  auto* on = out.node().get();
  on->op = "sub";
  on->parents = {a.node(), b.node()};
  on->requires_grad = a.requires_grad() || b.requires_grad();
  if (on->requires_grad) {
    auto pa = a.node(), pb = b.node();
    on->backprop = [on, pa, pb] {
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) pa->grad[i] += on->grad[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) pb->grad[i] -= on->grad[i];
      }
    };
  }
  return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("mul", a, b);
  std::vector<T> v(a.numel());
  const auto &av = a.data(), &bv = b.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * bv[i];
  auto out = Tensor<T>::from(a.shape(), std::move(v));
  auto* on = out.node().get();
  on->op = "mul";
  on->parents = {a.node(), b.node()};
  on->requires_grad = a.requires_grad() || b.requires_grad();
  if (on->requires_grad) {
    auto pa = a.node(), pb = b.node();
    on->backprop = [on, pa, pb] {
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) pa->grad[i] += on->grad[i] * pb->val[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) pb->grad[i] += on->grad[i] * pa->val[i];
      }
    };
  }
  return out;
}

template <class T>
Tensor<T> scalar_mul(const Tensor<T>& a, T s) {
  std::vector<T> v(a.numel());
  const auto& av = a.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * s;
  auto out = Tensor<T>::from(a.shape(), std::move(v));
  auto* on = out.node().get();
  on->op = "scalar_mul";
  on->parents = {a.node()};
  on->requires_grad = a.requires_grad();
  if (on->requires_grad) {
    auto pa = a.node();
    on->backprop = [on, pa, s] {
      pa->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) pa->grad[i] += on->grad[i] * s;
    };
  }
  return out;
}

template <class T>
Tensor<T> scalar_add(const Tensor<T>& a, T s) {
  std::vector<T> v(a.numel());
  const auto& av = a.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] + s;
  auto out = Tensor<T>::from(a.shape(), std::move(v));
  auto* on = out.node().get();
  on->op = "scalar_add";
  on->parents = {a.node()};
  on->requires_grad = a.requires_grad();
  if (on->requires_grad) {
    auto pa = a.node();
    on->backprop = [on, pa] {
      pa->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) pa->grad[i] += on->grad[i];
    };
  }
  return out;
}

// Multiply by a scalar held in a (possibly learnable) 1-element tensor.
template <class T>
Tensor<T> mul_scalar_t(const Tensor<T>& a, const Tensor<T>& s) {
  if (s.numel() != 1) throw ShapeError("mul_scalar_t: scale must be a 1-element tensor");
  const T sv = s.data()[0];
  std::vector<T> v(a.numel());
  const auto& av = a.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * sv;
  auto out = Tensor<T>::from(a.shape(), std::move(v));
  auto* on = out.node().get();
  on->op = "mul_scalar_t";
  on->parents = {a.node(), s.node()};
  on->requires_grad = a.requires_grad() || s.requires_grad();
  if (on->requires_grad) {
    auto pa = a.node(), ps = s.node();
    on->backprop = [on, pa, ps, sv] {
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) pa->grad[i] += on->grad[i] * sv;
      }
      if (ps->requires_grad) {
        ps->ensure_grad();
        T acc = T(0);
        for (std::size_t i = 0; i < on->grad.size(); ++i) acc += on->grad[i] * pa->val[i];
        ps->grad[0] += acc;
      }
    };
  }
  return out;
}

template <class T>
Tensor<T> neg(const Tensor<T>& a) {
  return scalar_mul(a, T(-1));
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> v(a.numel());
  const auto& av = a.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] > T(0) ? av[i] : T(0);
  auto out = Tensor<T>::from(a.shape(), std::move(v));
  auto* on = out.node().get();
  on->op = "relu";
  on->parents = {a.node()};
  on->requires_grad = a.requires_grad();
  if (on->requires_grad) {
    auto pa = a.node();
    // subgradient 0 at the kink
    on->backprop = [on, pa] {
      pa->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        if (pa->val[i] > T(0)) pa->grad[i] += on->grad[i];
    };
  }
  return out;
}

template <class T>
Tensor<T> abs(const Tensor<T>& a) {
  std::vector<T> v(a.numel());
  const auto& av = a.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] < T(0) ? -av[i] : av[i];
  auto out = Tensor<T>::from(a.shape(), std::move(v));
  auto* on = out.node().get();
  on->op = "abs";
  on->parents = {a.node()};
  on->requires_grad = a.requires_grad();
  if (on->requires_grad) {
    auto pa = a.node();
    // sign subgradient, 0 at ties
    on->backprop = [on, pa] {
      pa->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        if (pa->val[i] > T(0))
          pa->grad[i] += on->grad[i];
        else if (pa->val[i] < T(0))
          pa->grad[i] -= on->grad[i];
      }
    };
  }
  return out;
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  std::vector<T> v(a.numel());
  const auto& av = a.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = T(1) / (T(1) + std::exp(-av[i]));
  auto out = Tensor<T>::from(a.shape(), std::move(v));
  auto* on = out.node().get();
  on->op = "sigmoid";
  on->parents = {a.node()};
  on->requires_grad = a.requires_grad();
  if (on->requires_grad) {
    auto pa = a.node();
    on->backprop = [on, pa] {
      pa->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        T y = on->val[i];
        pa->grad[i] += on->grad[i] * y * (T(1) - y);
      }
    };
  }
  return out;
}

template <class T>
Tensor<T> silu(const Tensor<T>& a) {
  std::vector<T> v(a.numel());
  const auto& av = a.data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    T s = T(1) / (T(1) + std::exp(-av[i]));
    v[i] = av[i] * s;
  }
  auto out = Tensor<T>::from(a.shape(), std::move(v));
  auto* on = out.node().get();
  on->op = "silu";
  on->parents = {a.node()};
  on->requires_grad = a.requires_grad();
  if (on->requires_grad) {
    auto pa = a.node();
    on->backprop = [on, pa] {
      pa->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        T x = pa->val[i];
        T s = T(1) / (T(1) + std::exp(-x));
        pa->grad[i] += on->grad[i] * (s + x * s * (T(1) - s));
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  auto out = Tensor<T>::from(std::move(shape), a.data());
  auto* on = out.node().get();
  on->op = "reshape";
  on->parents = {a.node()};
  on->requires_grad = a.requires_grad();
  if (on->requires_grad) {
    auto pa = a.node();
    on->backprop = [on, pa] {
      pa->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) pa->grad[i] += on->grad[i];
    };
  }
  return out;
}

template <class T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<int>& axes) {
  const int r = a.rank();
  if (static_cast<int>(axes.size()) != r) throw ShapeError("permute: axes rank mismatch");
  std::vector<bool> seen(r, false);
  Shape out_shape(r);
  for (int i = 0; i < r; ++i) {
    if (axes[i] < 0 || axes[i] >= r || seen[axes[i]]) throw ShapeError("permute: invalid axes");
    seen[axes[i]] = true;
    out_shape[i] = a.shape()[axes[i]];
  }
  // strides of the input
  std::vector<std::size_t> in_stride(r, 1);
  for (int i = r - 2; i >= 0; --i)
    in_stride[i] = in_stride[i + 1] * static_cast<std::size_t>(a.shape()[i + 1]);
  std::vector<std::size_t> gather_stride(r);
  for (int i = 0; i < r; ++i) gather_stride[i] = in_stride[axes[i]];

  const auto& av = a.data();
  std::vector<T> v(a.numel());
  std::vector<int> idx(r, 0);
  std::size_t src = 0;
  for (std::size_t o = 0; o < v.size(); ++o) {
    v[o] = av[src];
    // odometer increment over out_shape
    for (int i = r - 1; i >= 0; --i) {
      src += gather_stride[i];
      if (++idx[i] < out_shape[i]) break;
      src -= gather_stride[i] * static_cast<std::size_t>(out_shape[i]);
      idx[i] = 0;
    }
  }
  auto out = Tensor<T>::from(out_shape, std::move(v));
  auto* on = out.node().get();
  on->op = "permute";
  on->parents = {a.node()};
  on->requires_grad = a.requires_grad();
  if (on->requires_grad) {
    auto pa = a.node();
    on->backprop = [on, pa, out_shape, gather_stride, r] {
      pa->ensure_grad();
      std::vector<int> ix(r, 0);
      std::size_t src = 0;
      for (std::size_t o = 0; o < on->grad.size(); ++o) {
        pa->grad[src] += on->grad[o];
        for (int i = r - 1; i >= 0; --i) {
          src += gather_stride[i];
          if (++ix[i] < out_shape[i]) break;
          src -= gather_stride[i] * static_cast<std::size_t>(out_shape[i]);
          ix[i] = 0;
        }
      }
    };
  }
  return out;
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expects a rank-2 tensor");
  return permute(a, {1, 0});
}

template <class T>
Tensor<T> slice(const Tensor<T>& a, int axis, int start, int len) {
  auto sp = split_axis(a.shape(), axis);
  if (start < 0 || len <= 0 || start + len > static_cast<int>(sp.n))
    throw ShapeError("slice: range [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") invalid for axis extent " +
                     std::to_string(sp.n));
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  std::vector<T> v(sp.outer * static_cast<std::size_t>(len) * sp.inner);
  const auto& av = a.data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (int j = 0; j < len; ++j) {
      const T* src = &av[(o * sp.n + static_cast<std::size_t>(start + j)) * sp.inner];
      T* dst = &v[(o * static_cast<std::size_t>(len) + static_cast<std::size_t>(j)) * sp.inner];
      std::copy(src, src + sp.inner, dst);
    }
  auto out = Tensor<T>::from(std::move(out_shape), std::move(v));
  auto* on = out.node().get();
  on->op = "slice";
  on->parents = {a.node()};
  on->requires_grad = a.requires_grad();
  if (on->requires_grad) {
    auto pa = a.node();
    on->backprop = [on, pa, sp, start, len] {
      pa->ensure_grad();
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (int j = 0; j < len; ++j) {
          const T* g = &on->grad[(o * static_cast<std::size_t>(len) + static_cast<std::size_t>(j)) * sp.inner];
          T* dst = &pa->grad[(o * sp.n + static_cast<std::size_t>(start + j)) * sp.inner];
          for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += g[i];
        }
    };
  }
  return out;
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const int r = parts[0].rank();
  Shape out_shape = parts[0].shape();
  int total = 0;
  for (const auto& p : parts) {
    if (p.rank() != r) throw ShapeError("concat: rank mismatch");
    for (int i = 0; i < r; ++i)
      if (i != axis && p.shape()[i] != out_shape[i])
        throw ShapeError("concat: extent mismatch on axis " + std::to_string(i));
    total += p.shape()[axis];
  }
  out_shape[axis] = total;
  auto sp_out = split_axis(out_shape, axis);
  std::vector<T> v(shape_numel(out_shape));
  std::size_t off = 0;
  for (const auto& p : parts) {
    auto sp = split_axis(p.shape(), axis);
    const auto& pv = p.data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      const T* src = &pv[o * sp.n * sp.inner];
      T* dst = &v[(o * sp_out.n + off) * sp_out.inner];
      std::copy(src, src + sp.n * sp.inner, dst);
    }
    off += sp.n;
  }
  auto out = Tensor<T>::from(out_shape, std::move(v));
  auto* on = out.node().get();
  on->op = "concat";
  bool req = false;
  for (const auto& p : parts) {
    on->parents.push_back(p.node());
    req = req || p.requires_grad();
  }
  on->requires_grad = req;
  if (req) {
    auto parents = on->parents;
    std::vector<std::size_t> widths;
    for (const auto& p : parts) widths.push_back(split_axis(p.shape(), axis).n);
    on->backprop = [on, parents, widths, sp_out] {
      std::size_t off = 0;
      for (std::size_t k = 0; k < parents.size(); ++k) {
        auto& p = parents[k];
        std::size_t w = widths[k];
        if (p->requires_grad) {
          p->ensure_grad();
          for (std::size_t o = 0; o < sp_out.outer; ++o) {
            const T* g = &on->grad[(o * sp_out.n + off) * sp_out.inner];
            T* dst = &p->grad[o * w * sp_out.inner];
            for (std::size_t i = 0; i < w * sp_out.inner; ++i) dst[i] += g[i];
          }
        }
        off += w;
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> mean(const Tensor<T>& a, int axis) {
  auto sp = split_axis(a.shape(), axis);
  Shape out_shape;
  for (int i = 0; i < a.rank(); ++i)
    if (i != axis) out_shape.push_back(a.shape()[i]);
  if (out_shape.empty()) out_shape = {1};
  std::vector<T> v(sp.outer * sp.inner, T(0));
  const auto& av = a.data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t k = 0; k < sp.n; ++k) {
      const T* src = &av[(o * sp.n + k) * sp.inner];
      T* dst = &v[o * sp.inner];
      for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
    }
  const T inv = T(1) / static_cast<T>(sp.n);
  for (T& x : v) x *= inv;
  auto out = Tensor<T>::from(std::move(out_shape), std::move(v));
  auto* on = out.node().get();
  on->op = "mean";
  on->parents = {a.node()};
  on->requires_grad = a.requires_grad();
  if (on->requires_grad) {
    auto pa = a.node();
    on->backprop = [on, pa, sp, inv] {
      pa->ensure_grad();
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t k = 0; k < sp.n; ++k) {
          const T* g = &on->grad[o * sp.inner];
          T* dst = &pa->grad[(o * sp.n + k) * sp.inner];
          for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += g[i] * inv;
        }
    };
  }
  return out;
}

template <class T>
Tensor<T> mean_all(const Tensor<T>& a) {
  const auto& av = a.data();
  T acc = T(0);
  for (T x : av) acc += x;
  const T inv = T(1) / static_cast<T>(av.size());
  auto out = Tensor<T>::scalar(acc * inv);
  auto* on = out.node().get();
  on->op = "mean_all";
  on->parents = {a.node()};
  on->requires_grad = a.requires_grad();
  if (on->requires_grad) {
    auto pa = a.node();
    on->backprop = [on, pa, inv] {
      pa->ensure_grad();
      const T g = on->grad[0] * inv;
      for (std::size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += g;
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul: expects rank-2 operands");
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  std::vector<T> v(static_cast<std::size_t>(m) * n, T(0));
  const auto &av = a.data(), &bv = b.data();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const T x = av[static_cast<std::size_t>(i) * k + p];
      const T* brow = &bv[static_cast<std::size_t>(p) * n];
      T* orow = &v[static_cast<std::size_t>(i) * n];
      for (int j = 0; j < n; ++j) orow[j] += x * brow[j];
    }
  auto out = Tensor<T>::from({m, n}, std::move(v));
  auto* on = out.node().get();
  on->op = "matmul";
  on->parents = {a.node(), b.node()};
  on->requires_grad = a.requires_grad() || b.requires_grad();
  if (on->requires_grad) {
    auto pa = a.node(), pb = b.node();
    on->backprop = [on, pa, pb, m, k, n] {
      if (pa->requires_grad) {
        pa->ensure_grad();  // dA = G B^T
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            const T g = on->grad[static_cast<std::size_t>(i) * n + j];
            const T* brow = &pb->val[0] + j;  // column j, stride n
            T* arow = &pa->grad[static_cast<std::size_t>(i) * k];
            for (int p = 0; p < k; ++p) arow[p] += g * brow[static_cast<std::size_t>(p) * n];
          }
      }
      if (pb->requires_grad) {
        pb->ensure_grad();  // dB = A^T G
        for (int p = 0; p < k; ++p)
          for (int i = 0; i < m; ++i) {
            const T x = pa->val[static_cast<std::size_t>(i) * k + p];
            const T* grow = &on->grad[static_cast<std::size_t>(i) * n];
            T* brow = &pb->grad[static_cast<std::size_t>(p) * n];
            for (int j = 0; j < n; ++j) brow[j] += x * grow[j];
          }
      }
    };
  }
  return out;
}

// Batched matrix product over the leading axis. With trans_b, b is [B, n, k]
// and the product is a . b^T per batch.
template <class T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool trans_b = false) {
  if (a.rank() != 3 || b.rank() != 3) throw ShapeError("bmm: expects rank-3 operands");
  const int B = a.dim(0), m = a.dim(1), k = a.dim(2);
  const int Bb = b.dim(0);
  const int n = trans_b ? b.dim(1) : b.dim(2);
  const int kb = trans_b ? b.dim(2) : b.dim(1);
  if (B != Bb || k != kb)
    throw ShapeError("bmm: incompatible shapes " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  std::vector<T> v(static_cast<std::size_t>(B) * m * n, T(0));
  const auto &av = a.data(), &bv = b.data();
  const std::size_t as = static_cast<std::size_t>(m) * k;
  const std::size_t bs = static_cast<std::size_t>(n) * k;  // same count either way
  const std::size_t os = static_cast<std::size_t>(m) * n;
  for (int bi = 0; bi < B; ++bi) {
    const T* A = &av[bi * as];
    const T* Bm = &bv[bi * bs];
    T* O = &v[bi * os];
    if (!trans_b) {
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          const T x = A[static_cast<std::size_t>(i) * k + p];
          const T* brow = &Bm[static_cast<std::size_t>(p) * n];
          T* orow = &O[static_cast<std::size_t>(i) * n];
          for (int j = 0; j < n; ++j) orow[j] += x * brow[j];
        }
    } else {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const T* arow = &A[static_cast<std::size_t>(i) * k];
          const T* brow = &Bm[static_cast<std::size_t>(j) * k];
          T acc = T(0);
          for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
          O[static_cast<std::size_t>(i) * n + j] = acc;
        }
    }
  }
  auto out = Tensor<T>::from({B, m, n}, std::move(v));
  auto* on = out.node().get();
  on->op = "bmm";
  on->parents = {a.node(), b.node()};
  on->requires_grad = a.requires_grad() || b.requires_grad();
  if (on->requires_grad) {
    auto pa = a.node(), pb = b.node();
    on->backprop = [on, pa, pb, B, m, k, n, trans_b, as, bs, os] {
      for (int bi = 0; bi < B; ++bi) {
        const T* G = &on->grad[bi * os];
        const T* A = &pa->val[bi * as];
        const T* Bm = &pb->val[bi * bs];
        if (pa->requires_grad) {
          pa->ensure_grad();
          T* dA = &pa->grad[bi * as];
          if (!trans_b) {
            // dA = G B^T
            for (int i = 0; i < m; ++i)
              for (int j = 0; j < n; ++j) {
                const T g = G[static_cast<std::size_t>(i) * n + j];
                T* arow = &dA[static_cast<std::size_t>(i) * k];
                for (int p = 0; p < k; ++p) arow[p] += g * Bm[static_cast<std::size_t>(p) * n + j];
              }
          } else {
            // out = A B^T  =>  dA = G B
            for (int i = 0; i < m; ++i)
              for (int j = 0; j < n; ++j) {
                const T g = G[static_cast<std::size_t>(i) * n + j];
                const T* brow = &Bm[static_cast<std::size_t>(j) * k];
                T* arow = &dA[static_cast<std::size_t>(i) * k];
                for (int p = 0; p < k; ++p) arow[p] += g * brow[p];
              }
          }
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          T* dB = &pb->grad[bi * bs];
          if (!trans_b) {
            // dB = A^T G
            for (int p = 0; p < k; ++p)
              for (int i = 0; i < m; ++i) {
                const T x = A[static_cast<std::size_t>(i) * k + p];
                const T* grow = &G[static_cast<std::size_t>(i) * n];
                T* brow = &dB[static_cast<std::size_t>(p) * n];
                for (int j = 0; j < n; ++j) brow[j] += x * grow[j];
              }
          } else {
            // dB = G^T A
            for (int j = 0; j < n; ++j)
              for (int i = 0; i < m; ++i) {
                const T g = G[static_cast<std::size_t>(i) * n + j];
                const T* arow = &A[static_cast<std::size_t>(i) * k];
                T* brow = &dB[static_cast<std::size_t>(j) * k];
                for (int p = 0; p < k; ++p) brow[p] += g * arow[p];
              }
          }
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalizations
// ---------------------------------------------------------------------------

// Numerically stable softmax along `axis`. A slice whose maximum sits at the
// mask sentinel has no live entries and raises NumericError.
template <class T>
Tensor<T> softmax(const Tensor<T>& a, int axis) {
  auto sp = split_axis(a.shape(), axis);
  const auto& av = a.data();
  std::vector<T> v(a.numel());
  const T degenerate = T(0.5) * T(kMaskSentinel);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.n * sp.inner + i;
      T mx = av[base];
      for (std::size_t k = 1; k < sp.n; ++k)
        mx = std::max(mx, av[base + k * sp.inner]);
      if (mx <= degenerate)
        throw NumericError("softmax: degenerate slice, every entry is masked");
      T sum = T(0);
      for (std::size_t k = 0; k < sp.n; ++k) {
        T e = std::exp(av[base + k * sp.inner] - mx);
        v[base + k * sp.inner] = e;
        sum += e;
      }
      const T inv = T(1) / sum;
      for (std::size_t k = 0; k < sp.n; ++k) v[base + k * sp.inner] *= inv;
    }
  auto out = Tensor<T>::from(a.shape(), std::move(v));
  auto* on = out.node().get();
  on->op = "softmax";
  on->parents = {a.node()};
  on->requires_grad = a.requires_grad();
  if (on->requires_grad) {
    auto pa = a.node();
    on->backprop = [on, pa, sp] {
      pa->ensure_grad();
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t i = 0; i < sp.inner; ++i) {
          const std::size_t base = o * sp.n * sp.inner + i;
          T dot = T(0);
          for (std::size_t k = 0; k < sp.n; ++k)
            dot += on->grad[base + k * sp.inner] * on->val[base + k * sp.inner];
          for (std::size_t k = 0; k < sp.n; ++k) {
            const std::size_t p = base + k * sp.inner;
            pa->grad[p] += on->val[p] * (on->grad[p] - dot);
          }
        }
    };
  }
  return out;
}

// Scales each slice along `axis` to unit Euclidean norm. The denominator is
// max(norm, eps), so zero slices map to zero.
template <class T>
Tensor<T> l2_normalize(const Tensor<T>& a, int axis, T eps = T(1e-8)) {
  if (eps <= T(0)) throw ContractError("l2_normalize: eps must be positive");
  auto sp = split_axis(a.shape(), axis);
  const auto& av = a.data();
  std::vector<T> v(a.numel());
  std::vector<T> norms(sp.outer * sp.inner);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.n * sp.inner + i;
      T ss = T(0);
      for (std::size_t k = 0; k < sp.n; ++k) {
        T x = av[base + k * sp.inner];
        ss += x * x;
      }
      T nrm = std::sqrt(ss);
      T denom = std::max(nrm, eps);
      norms[o * sp.inner + i] = denom;
      const T inv = T(1) / denom;
      for (std::size_t k = 0; k < sp.n; ++k) v[base + k * sp.inner] = av[base + k * sp.inner] * inv;
    }
  auto out = Tensor<T>::from(a.shape(), std::move(v));
  auto* on = out.node().get();
  on->op = "l2_normalize";
  on->parents = {a.node()};
  on->requires_grad = a.requires_grad();
  if (on->requires_grad) {
    auto pa = a.node();
    on->backprop = [on, pa, sp, norms, eps] {
      pa->ensure_grad();
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t i = 0; i < sp.inner; ++i) {
          const std::size_t base = o * sp.n * sp.inner + i;
          const T denom = norms[o * sp.inner + i];
          if (denom <= eps) {
            // linear branch y = x / eps
            const T inv = T(1) / eps;
            for (std::size_t k = 0; k < sp.n; ++k) {
              const std::size_t p = base + k * sp.inner;
              pa->grad[p] += on->grad[p] * inv;
            }
          } else {
            T dot = T(0);
            for (std::size_t k = 0; k < sp.n; ++k) {
              const std::size_t p = base + k * sp.inner;
              dot += on->grad[p] * on->val[p];
            }
            const T inv = T(1) / denom;
            for (std::size_t k = 0; k < sp.n; ++k) {
              const std::size_t p = base + k * sp.inner;
              pa->grad[p] += (on->grad[p] - on->val[p] * dot) * inv;
            }
          }
        }
    };
  }
  return out;
}

// Normalizes each slice along `axis` to zero mean / unit variance (biased).
// Affine parameters, when wanted, are applied separately via mul_axis/add_axis.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& a, int axis, T eps = T(1e-5)) {
  auto sp = split_axis(a.shape(), axis);
  const auto& av = a.data();
  std::vector<T> v(a.numel());
  std::vector<T> istds(sp.outer * sp.inner);
  const T invn = T(1) / static_cast<T>(sp.n);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.n * sp.inner + i;
      T mu = T(0);
      for (std::size_t k = 0; k < sp.n; ++k) mu += av[base + k * sp.inner];
      mu *= invn;
      T var = T(0);
      for (std::size_t k = 0; k < sp.n; ++k) {
        T d = av[base + k * sp.inner] - mu;
        var += d * d;
      }
      var *= invn;
      const T istd = T(1) / std::sqrt(var + eps);
      istds[o * sp.inner + i] = istd;
      for (std::size_t k = 0; k < sp.n; ++k)
        v[base + k * sp.inner] = (av[base + k * sp.inner] - mu) * istd;
    }
  auto out = Tensor<T>::from(a.shape(), std::move(v));
  auto* on = out.node().get();
  on->op = "layer_norm";
  on->parents = {a.node()};
  on->requires_grad = a.requires_grad();
  if (on->requires_grad) {
    auto pa = a.node();
    on->backprop = [on, pa, sp, istds, invn] {
      pa->ensure_grad();
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t i = 0; i < sp.inner; ++i) {
          const std::size_t base = o * sp.n * sp.inner + i;
          const T istd = istds[o * sp.inner + i];
          T gmean = T(0), gymean = T(0);
          for (std::size_t k = 0; k < sp.n; ++k) {
            const std::size_t p = base + k * sp.inner;
            gmean += on->grad[p];
            gymean += on->grad[p] * on->val[p];
          }
          gmean *= invn;
          gymean *= invn;
          for (std::size_t k = 0; k < sp.n; ++k) {
            const std::size_t p = base + k * sp.inner;
            pa->grad[p] += istd * (on->grad[p] - gmean - on->val[p] * gymean);
          }
        }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Axis broadcasts and gathers
// ---------------------------------------------------------------------------

// y = x * v broadcast along `axis` (v has length shape[axis]).
template <class T>
Tensor<T> mul_axis(const Tensor<T>& x, const Tensor<T>& vten, int axis) {
  auto sp = split_axis(x.shape(), axis);
  if (vten.numel() != sp.n)
    throw ShapeError("mul_axis: vector length " + std::to_string(vten.numel()) +
                     " does not match axis extent " + std::to_string(sp.n));
  const auto &xv = x.data(), &vv = vten.data();
  std::vector<T> v(x.numel());
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t k = 0; k < sp.n; ++k) {
      const std::size_t base = (o * sp.n + k) * sp.inner;
      const T s = vv[k];
      for (std::size_t i = 0; i < sp.inner; ++i) v[base + i] = xv[base + i] * s;
    }
  auto out = Tensor<T>::from(x.shape(), std::move(v));
  auto* on = out.node().get();
  on->op = "mul_axis";
  on->parents = {x.node(), vten.node()};
  on->requires_grad = x.requires_grad() || vten.requires_grad();
  if (on->requires_grad) {
    auto px = x.node(), pv = vten.node();
    on->backprop = [on, px, pv, sp] {
      if (px->requires_grad) {
        px->ensure_grad();
        for (std::size_t o = 0; o < sp.outer; ++o)
          for (std::size_t k = 0; k < sp.n; ++k) {
            const std::size_t base = (o * sp.n + k) * sp.inner;
            const T s = pv->val[k];
            for (std::size_t i = 0; i < sp.inner; ++i) px->grad[base + i] += on->grad[base + i] * s;
          }
      }
      if (pv->requires_grad) {
        pv->ensure_grad();
        for (std::size_t o = 0; o < sp.outer; ++o)
          for (std::size_t k = 0; k < sp.n; ++k) {
            const std::size_t base = (o * sp.n + k) * sp.inner;
            T acc = T(0);
            for (std::size_t i = 0; i < sp.inner; ++i) acc += on->grad[base + i] * px->val[base + i];
            pv->grad[k] += acc;
          }
      }
    };
  }
  return out;
}

// y = x + v broadcast along `axis`.
template <class T>
Tensor<T> add_axis(const Tensor<T>& x, const Tensor<T>& vten, int axis) {
  auto sp = split_axis(x.shape(), axis);
  if (vten.numel() != sp.n)
    throw ShapeError("add_axis: vector length " + std::to_string(vten.numel()) +
                     " does not match axis extent " + std::to_string(sp.n));
  const auto &xv = x.data(), &vv = vten.data();
  std::vector<T> v(x.numel());
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t k = 0; k < sp.n; ++k) {
      const std::size_t base = (o * sp.n + k) * sp.inner;
      const T s = vv[k];
      for (std::size_t i = 0; i < sp.inner; ++i) v[base + i] = xv[base + i] + s;
    }
  auto out = Tensor<T>::from(x.shape(), std::move(v));
  auto* on = out.node().get();
  on->op = "add_axis";
  on->parents = {x.node(), vten.node()};
  on->requires_grad = x.requires_grad() || vten.requires_grad();
  if (on->requires_grad) {
    auto px = x.node(), pv = vten.node();
    on->backprop = [on, px, pv, sp] {
      if (px->requires_grad) {
        px->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) px->grad[i] += on->grad[i];
      }
      if (pv->requires_grad) {
        pv->ensure_grad();
        for (std::size_t o = 0; o < sp.outer; ++o)
          for (std::size_t k = 0; k < sp.n; ++k) {
            const std::size_t base = (o * sp.n + k) * sp.inner;
            T acc = T(0);
            for (std::size_t i = 0; i < sp.inner; ++i) acc += on->grad[base + i];
            pv->grad[k] += acc;
          }
      }
    };
  }
  return out;
}

// y[g, ...] = x[g, ...] + b[...] where b matches x with the leading axis
// dropped; the bias is shared across the leading axis.
template <class T>
Tensor<T> add_bcast_outer(const Tensor<T>& x, const Tensor<T>& b) {
  if (x.rank() < 2) throw ShapeError("add_bcast_outer: x must have rank >= 2");
  Shape tail(x.shape().begin() + 1, x.shape().end());
  if (!same_shape(tail, b.shape()))
    throw ShapeError("add_bcast_outer: bias shape " + shape_str(b.shape()) +
                     " does not match trailing shape " + shape_str(tail));
  const std::size_t G = static_cast<std::size_t>(x.dim(0));
  const std::size_t len = b.numel();
  const auto &xv = x.data(), &bv = b.data();
  std::vector<T> v(x.numel());
  for (std::size_t g = 0; g < G; ++g)
    for (std::size_t i = 0; i < len; ++i) v[g * len + i] = xv[g * len + i] + bv[i];
  auto out = Tensor<T>::from(x.shape(), std::move(v));
  auto* on = out.node().get();
  on->op = "add_bcast_outer";
  on->parents = {x.node(), b.node()};
  on->requires_grad = x.requires_grad() || b.requires_grad();
  if (on->requires_grad) {
    auto px = x.node(), pb = b.node();
    on->backprop = [on, px, pb, G, len] {
      if (px->requires_grad) {
        px->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) px->grad[i] += on->grad[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (std::size_t g = 0; g < G; ++g)
          for (std::size_t i = 0; i < len; ++i) pb->grad[i] += on->grad[g * len + i];
      }
    };
  }
  return out;
}

// out[r, m] = table[r, idx[m]]; the adjoint scatter-adds into the table.
template <class T>
Tensor<T> gather_cols(const Tensor<T>& table, const std::vector<int>& idx) {
  if (table.rank() != 2) throw ShapeError("gather_cols: table must be rank-2");
  const int R = table.dim(0), P = table.dim(1);
  for (int j : idx)
    if (j < 0 || j >= P) throw ShapeError("gather_cols: index out of range");
  const int M = static_cast<int>(idx.size());
  const auto& tv = table.data();
  std::vector<T> v(static_cast<std::size_t>(R) * M);
  for (int r = 0; r < R; ++r)
    for (int m = 0; m < M; ++m)
      v[static_cast<std::size_t>(r) * M + m] = tv[static_cast<std::size_t>(r) * P + idx[m]];
  auto out = Tensor<T>::from({R, M}, std::move(v));
  auto* on = out.node().get();
  on->op = "gather_cols";
  on->parents = {table.node()};
  on->requires_grad = table.requires_grad();
  if (on->requires_grad) {
    auto pt = table.node();
    on->backprop = [on, pt, idx, R, P, M] {
      pt->ensure_grad();
      for (int r = 0; r < R; ++r)
        for (int m = 0; m < M; ++m)
          pt->grad[static_cast<std::size_t>(r) * P + idx[m]] +=
              on->grad[static_cast<std::size_t>(r) * M + m];
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Operators
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, b);
}
template <class T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
  return sub(a, b);
}
template <class T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) {
  return mul(a, b);
}
template <class T>
Tensor<T> operator*(const Tensor<T>& a, T s) {
  return scalar_mul(a, s);
}
template <class T>
Tensor<T> operator*(T s, const Tensor<T>& a) {
  return scalar_mul(a, s);
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace that
