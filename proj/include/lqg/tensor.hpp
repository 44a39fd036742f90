#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "lqg/errors.hpp"

// Reverse-mode autodiff over dense row-major tensors. Ops are free functions
// returning new graph nodes; VJPs are themselves written with the same ops,
// so a backward pass recorded with create_graph=true is differentiable again
// (needed for the critic's gradient penalty).
namespace lqg::ad {

using Shape = std::vector<Eigen::Index>;

inline Eigen::Index numel(const Shape& s) {
  Eigen::Index n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

class ShapeError : public ConfigError {
 public:
  ShapeError(const std::string& op, const std::string& detail)
      : ConfigError("shape mismatch in op '" + op + "': " + detail) {}
};

// Thread-local switch: when disabled, ops compute values but record no graph.
struct GradMode {
  static bool& enabled() {
    thread_local bool on = true;
    return on;
  }
};

struct NoGradGuard {
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::enabled() = false; }
  ~NoGradGuard() { GradMode::enabled() = prev_; }
  bool prev_;
};

struct GradGuard {
  explicit GradGuard(bool on) : prev_(GradMode::enabled()) { GradMode::enabled() = on; }
  ~GradGuard() { GradMode::enabled() = prev_; }
  bool prev_;
};

template <class S>
class Tensor;

template <class S>
struct Node {
  using Array = Eigen::Array<S, Eigen::Dynamic, 1>;
  // vjp(grad_out, self_handle) -> per-parent gradient contributions.
  using Vjp = std::function<std::vector<Tensor<S>>(const Tensor<S>&, const Tensor<S>&)>;

  Shape shape;
  Array value;
  bool requires_grad = false;
  bool leaf = false;
  std::string op;  // op kind, or the parameter name for leaves
  std::vector<Tensor<S>> parents;
  Vjp vjp;
  Array grad;  // leaf accumulator; sized lazily, reset to exact zero
};

template <class S>
class Tensor {
 public:
  using Array = Eigen::Array<S, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<S>> n) : node_(std::move(n)) {}

  static Tensor leaf(Shape shape, bool requires_grad, std::string name = "leaf") {
    auto n = std::make_shared<Node<S>>();
    n->shape = std::move(shape);
    n->value = Array::Zero(numel(n->shape));
    n->requires_grad = requires_grad;
    n->leaf = true;
    n->op = std::move(name);
    return Tensor(std::move(n));
  }

  static Tensor constant(Shape shape, Array values, std::string name = "const") {
    auto t = leaf(std::move(shape), false, std::move(name));
    if (t.size() != values.size())
      throw ShapeError(t.node_->op, "constant data size does not match shape");
    t.node_->value = std::move(values);
    return t;
  }

  static Tensor scalar(S v) {
    auto t = leaf(Shape{}, false, "scalar");
    t.node_->value(0) = v;
    return t;
  }

  static Tensor zeros(Shape shape) { return leaf(std::move(shape), false, "zeros"); }

  static Tensor from_matrix(const Eigen::Ref<const Matrix>& m, bool requires_grad = false,
                            std::string name = "leaf") {
    auto t = leaf(Shape{m.rows(), m.cols()}, requires_grad, std::move(name));
    Eigen::Map<Matrix>(t.data(), m.rows(), m.cols()) = m;
    return t;
  }

  explicit operator bool() const { return static_cast<bool>(node_); }
  Node<S>* node() const { return node_.get(); }
  const std::shared_ptr<Node<S>>& handle() const { return node_; }

  const Shape& shape() const { return node_->shape; }
  Eigen::Index size() const { return node_->value.size(); }
  Eigen::Index dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }

  Array& values() { return node_->value; }
  const Array& values() const { return node_->value; }
  S* data() { return node_->value.data(); }
  const S* data() const { return node_->value.data(); }
  S item() const {
    if (size() != 1) throw ShapeError("item", "tensor " + shape_str(shape()) + " is not scalar");
    return node_->value(0);
  }

  bool requires_grad() const { return node_->requires_grad; }
  const std::string& name() const { return node_->op; }

  // Leaf gradient accumulator (plain storage, not part of any graph).
  Array& grad() {
    if (node_->grad.size() != node_->value.size())
      node_->grad = Array::Zero(node_->value.size());
    return node_->grad;
  }
  void zero_grad() { grad().setZero(); }

  // 2-D view. Rank-1 tensors map to a single row.
  Eigen::Map<Matrix> matrix() {
    auto [r, c] = rows_cols();
    return Eigen::Map<Matrix>(data(), r, c);
  }
  Eigen::Map<const Matrix> matrix() const {
    auto [r, c] = rows_cols();
    return Eigen::Map<const Matrix>(data(), r, c);
  }

 private:
  std::pair<Eigen::Index, Eigen::Index> rows_cols() const {
    if (rank() == 2) return {dim(0), dim(1)};
    if (rank() == 1) return {1, dim(0)};
    if (rank() == 0) return {1, 1};
    throw ShapeError("matrix-view", "rank-" + std::to_string(rank()) + " tensor " +
                                        shape_str(shape()));
  }
  std::shared_ptr<Node<S>> node_;
};

namespace detail {

template <class S>
Tensor<S> make_op(std::string op, Shape shape, typename Node<S>::Array value,
                  std::vector<Tensor<S>> parents, typename Node<S>::Vjp vjp) {
  auto n = std::make_shared<Node<S>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = std::move(op);
  bool rg = false;
  if (GradMode::enabled()) {
    for (const auto& p : parents) rg = rg || p.requires_grad();
  }
  if (rg) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->vjp = std::move(vjp);
  }
  return Tensor<S>(std::move(n));
}

template <class S>
void require_same_shape(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw ShapeError(op, shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and scalar ops
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape("add", a, b);
  return detail::make_op<S>(
      "add", a.shape(), a.values() + b.values(), {a, b},
      [](const Tensor<S>& g, const Tensor<S>&) { return std::vector<Tensor<S>>{g, g}; });
}

template <class S>
Tensor<S> neg(const Tensor<S>& a) {
  return detail::make_op<S>("neg", a.shape(), -a.values(), {a},
                            [](const Tensor<S>& g, const Tensor<S>&) {
                              return std::vector<Tensor<S>>{neg(g)};
                            });
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape("sub", a, b);
  return detail::make_op<S>("sub", a.shape(), a.values() - b.values(), {a, b},
                            [](const Tensor<S>& g, const Tensor<S>&) {
                              return std::vector<Tensor<S>>{g, neg(g)};
                            });
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape("mul", a, b);
  return detail::make_op<S>("mul", a.shape(), a.values() * b.values(), {a, b},
                            [](const Tensor<S>& g, const Tensor<S>& self) {
                              const auto& a2 = self.node()->parents[0];
                              const auto& b2 = self.node()->parents[1];
                              return std::vector<Tensor<S>>{mul(g, b2), mul(g, a2)};
                            });
}

template <class S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape("div", a, b);
  return detail::make_op<S>(
      "div", a.shape(), a.values() / b.values(), {a, b},
      [](const Tensor<S>& g, const Tensor<S>& self) {
        const auto& a2 = self.node()->parents[0];
        const auto& b2 = self.node()->parents[1];
        auto gb = neg(div(mul(g, a2), mul(b2, b2)));
        return std::vector<Tensor<S>>{div(g, b2), std::move(gb)};
      });
}

template <class S>
Tensor<S> add_scalar(const Tensor<S>& a, S c) {
  return detail::make_op<S>("add_scalar", a.shape(), a.values() + c, {a},
                            [](const Tensor<S>& g, const Tensor<S>&) {
                              return std::vector<Tensor<S>>{g};
                            });
}

template <class S>
Tensor<S> mul_scalar(const Tensor<S>& a, S c) {
  return detail::make_op<S>("mul_scalar", a.shape(), a.values() * c, {a},
                            [c](const Tensor<S>& g, const Tensor<S>&) {
                              return std::vector<Tensor<S>>{mul_scalar(g, c)};
                            });
}

template <class S>
Tensor<S> tanh(const Tensor<S>& a) {
  return detail::make_op<S>(
      "tanh", a.shape(), a.values().tanh(), {a},
      [](const Tensor<S>& g, const Tensor<S>& self) {
        auto one_minus_y2 = add_scalar(neg(mul(self, self)), S(1));
        return std::vector<Tensor<S>>{mul(g, one_minus_y2)};
      });
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  using Array = typename Tensor<S>::Array;
  Array y = ((a.values() * S(-1)).exp() + S(1)).inverse();
  return detail::make_op<S>(
      "sigmoid", a.shape(), std::move(y), {a},
      [](const Tensor<S>& g, const Tensor<S>& self) {
        auto one_minus_y = add_scalar(neg(self), S(1));
        return std::vector<Tensor<S>>{mul(g, mul(self, one_minus_y))};
      });
}

// leaky_relu with slope 0 is relu. The local slope field is captured at
// forward time; its dependence on x is piecewise constant, so second
// derivatives treat it as fixed (the usual a.e. convention).
template <class S>
Tensor<S> leaky_relu(const Tensor<S>& a, S slope) {
  using Array = typename Tensor<S>::Array;
  Array coeff = (a.values() > S(0)).select(Array::Constant(a.size(), S(1)),
                                           Array::Constant(a.size(), slope));
  Array y = a.values() * coeff;
  auto coeff_t = Tensor<S>::constant(a.shape(), std::move(coeff), "lrelu_coeff");
  return detail::make_op<S>("leaky_relu", a.shape(), std::move(y), {a},
                            [coeff_t](const Tensor<S>& g, const Tensor<S>&) {
                              return std::vector<Tensor<S>>{mul(g, coeff_t)};
                            });
}

template <class S>
Tensor<S> relu(const Tensor<S>& a) {
  return leaky_relu(a, S(0));
}

template <class S>
Tensor<S> exp(const Tensor<S>& a) {
  return detail::make_op<S>("exp", a.shape(), a.values().exp(), {a},
                            [](const Tensor<S>& g, const Tensor<S>& self) {
                              return std::vector<Tensor<S>>{mul(g, self)};
                            });
}

template <class S>
Tensor<S> log(const Tensor<S>& a) {
  return detail::make_op<S>("log", a.shape(), a.values().log(), {a},
                            [](const Tensor<S>& g, const Tensor<S>& self) {
                              return std::vector<Tensor<S>>{div(g, self.node()->parents[0])};
                            });
}

template <class S>
Tensor<S> sqrt(const Tensor<S>& a) {
  return detail::make_op<S>(
      "sqrt", a.shape(), a.values().sqrt(), {a},
      [](const Tensor<S>& g, const Tensor<S>& self) {
        return std::vector<Tensor<S>>{mul_scalar(div(g, self), S(0.5))};
      });
}

template <class S>
Tensor<S> square(const Tensor<S>& a) {
  return detail::make_op<S>(
      "square", a.shape(), a.values().square(), {a},
      [](const Tensor<S>& g, const Tensor<S>& self) {
        return std::vector<Tensor<S>>{mul_scalar(mul(g, self.node()->parents[0]), S(2))};
      });
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
  if (numel(shape) != a.size())
    throw ShapeError("reshape", shape_str(a.shape()) + " -> " + shape_str(shape));
  Shape prev = a.shape();
  return detail::make_op<S>("reshape", std::move(shape), a.values(), {a},
                            [prev](const Tensor<S>& g, const Tensor<S>&) {
                              return std::vector<Tensor<S>>{reshape(g, prev)};
                            });
}

// Broadcast a scalar to an arbitrary shape.
template <class S>
Tensor<S> expand_scalar(const Tensor<S>& a, Shape shape) {
  if (a.size() != 1) throw ShapeError("expand_scalar", "source is not scalar");
  using Array = typename Tensor<S>::Array;
  return detail::make_op<S>("expand_scalar", shape,
                            Array::Constant(numel(shape), a.values()(0)), {a},
                            [](const Tensor<S>& g, const Tensor<S>&) {
                              return std::vector<Tensor<S>>{sum(g)};
                            });
}

// Constant view: same values, detached from the graph.
template <class S>
Tensor<S> detach(const Tensor<S>& a) {
  return Tensor<S>::constant(a.shape(), a.values(), "detached");
}

// ---------------------------------------------------------------------------
// Reductions and broadcasted row/column ops (2-D)
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> sum(const Tensor<S>& a) {
  using Array = typename Tensor<S>::Array;
  Array v(1);
  v(0) = a.values().sum();
  Shape prev = a.shape();
  return detail::make_op<S>("sum", Shape{}, std::move(v), {a},
                            [prev](const Tensor<S>& g, const Tensor<S>&) {
                              return std::vector<Tensor<S>>{expand_scalar(g, prev)};
                            });
}

template <class S>
Tensor<S> mean(const Tensor<S>& a) {
  return mul_scalar(sum(a), S(1) / static_cast<S>(a.size()));
}

// Sum over rows: [m,n] -> [n].
template <class S>
Tensor<S> sum0(const Tensor<S>& a) {
  if (a.rank() != 2) throw ShapeError("sum0", "expected rank-2, got " + shape_str(a.shape()));
  using Array = typename Tensor<S>::Array;
  Array v = a.matrix().colwise().sum().transpose().array();
  Eigen::Index m = a.dim(0);
  return detail::make_op<S>("sum0", Shape{a.dim(1)}, std::move(v), {a},
                            [m](const Tensor<S>& g, const Tensor<S>&) {
                              return std::vector<Tensor<S>>{rowrep(g, m)};
                            });
}

// Sum over columns: [m,n] -> [m].
template <class S>
Tensor<S> sum1(const Tensor<S>& a) {
  if (a.rank() != 2) throw ShapeError("sum1", "expected rank-2, got " + shape_str(a.shape()));
  using Array = typename Tensor<S>::Array;
  Array v = a.matrix().rowwise().sum().array();
  Eigen::Index n = a.dim(1);
  return detail::make_op<S>("sum1", Shape{a.dim(0)}, std::move(v), {a},
                            [n](const Tensor<S>& g, const Tensor<S>&) {
                              return std::vector<Tensor<S>>{colrep(g, n)};
                            });
}

// Tile a row vector [n] into [m,n].
template <class S>
Tensor<S> rowrep(const Tensor<S>& v, Eigen::Index m) {
  if (v.rank() != 1) throw ShapeError("rowrep", "expected rank-1, got " + shape_str(v.shape()));
  Eigen::Index n = v.dim(0);
  typename Tensor<S>::Array out(m * n);
  Eigen::Map<typename Tensor<S>::Matrix>(out.data(), m, n).rowwise() =
      v.matrix().row(0);
  return detail::make_op<S>("rowrep", Shape{m, n}, std::move(out), {v},
                            [](const Tensor<S>& g, const Tensor<S>&) {
                              return std::vector<Tensor<S>>{sum0(g)};
                            });
}

// Tile a column vector [m] into [m,n].
template <class S>
Tensor<S> colrep(const Tensor<S>& v, Eigen::Index n) {
  if (v.rank() != 1) throw ShapeError("colrep", "expected rank-1, got " + shape_str(v.shape()));
  Eigen::Index m = v.dim(0);
  typename Tensor<S>::Array out(m * n);
  Eigen::Map<typename Tensor<S>::Matrix> o(out.data(), m, n);
  for (Eigen::Index i = 0; i < m; ++i) o.row(i).setConstant(v.values()(i));
  return detail::make_op<S>("colrep", Shape{m, n}, std::move(out), {v},
                            [](const Tensor<S>& g, const Tensor<S>&) {
                              return std::vector<Tensor<S>>{sum1(g)};
                            });
}

// X[m,n] + b[n] broadcast over rows (bias add).
template <class S>
Tensor<S> add_rowvec(const Tensor<S>& x, const Tensor<S>& b) {
  if (x.rank() != 2 || b.rank() != 1 || x.dim(1) != b.dim(0))
    throw ShapeError("add_rowvec", shape_str(x.shape()) + " vs " + shape_str(b.shape()));
  typename Tensor<S>::Array out = x.values();
  Eigen::Map<typename Tensor<S>::Matrix>(out.data(), x.dim(0), x.dim(1)).rowwise() +=
      b.matrix().row(0);
  return detail::make_op<S>("add_rowvec", x.shape(), std::move(out), {x, b},
                            [](const Tensor<S>& g, const Tensor<S>&) {
                              return std::vector<Tensor<S>>{g, sum0(g)};
                            });
}

// X[m,n] * s[n] broadcast over rows.
template <class S>
Tensor<S> mul_rowvec(const Tensor<S>& x, const Tensor<S>& s) {
  if (x.rank() != 2 || s.rank() != 1 || x.dim(1) != s.dim(0))
    throw ShapeError("mul_rowvec", shape_str(x.shape()) + " vs " + shape_str(s.shape()));
  typename Tensor<S>::Array out = x.values();
  Eigen::Map<typename Tensor<S>::Matrix> o(out.data(), x.dim(0), x.dim(1));
  o.array().rowwise() *= s.matrix().row(0).array();
  return detail::make_op<S>(
      "mul_rowvec", x.shape(), std::move(out), {x, s},
      [](const Tensor<S>& g, const Tensor<S>& self) {
        const auto& x2 = self.node()->parents[0];
        const auto& s2 = self.node()->parents[1];
        return std::vector<Tensor<S>>{mul_rowvec(g, s2), sum0(mul(g, x2))};
      });
}

// Row i of X[m,n] scaled by s[m](i).
template <class S>
Tensor<S> scale_rows(const Tensor<S>& x, const Tensor<S>& s) {
  if (x.rank() != 2 || s.rank() != 1 || x.dim(0) != s.dim(0))
    throw ShapeError("scale_rows", shape_str(x.shape()) + " vs " + shape_str(s.shape()));
  typename Tensor<S>::Array out = x.values();
  Eigen::Map<typename Tensor<S>::Matrix> o(out.data(), x.dim(0), x.dim(1));
  o.array().colwise() *= s.values();
  return detail::make_op<S>(
      "scale_rows", x.shape(), std::move(out), {x, s},
      [](const Tensor<S>& g, const Tensor<S>& self) {
        const auto& x2 = self.node()->parents[0];
        const auto& s2 = self.node()->parents[1];
        return std::vector<Tensor<S>>{scale_rows(g, s2), sum1(mul(g, x2))};
      });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul", shape_str(a.shape()) + " x " + shape_str(b.shape()));
  typename Tensor<S>::Array out(a.dim(0) * b.dim(1));
  Eigen::Map<typename Tensor<S>::Matrix>(out.data(), a.dim(0), b.dim(1)).noalias() =
      a.matrix() * b.matrix();
  return detail::make_op<S>(
      "matmul", Shape{a.dim(0), b.dim(1)}, std::move(out), {a, b},
      [](const Tensor<S>& g, const Tensor<S>& self) {
        const auto& a2 = self.node()->parents[0];
        const auto& b2 = self.node()->parents[1];
        return std::vector<Tensor<S>>{matmul(g, transpose(b2)), matmul(transpose(a2), g)};
      });
}

template <class S>
Tensor<S> transpose(const Tensor<S>& a) {
  if (a.rank() != 2) throw ShapeError("transpose", "expected rank-2, got " + shape_str(a.shape()));
  typename Tensor<S>::Array out(a.size());
  Eigen::Map<typename Tensor<S>::Matrix>(out.data(), a.dim(1), a.dim(0)) =
      a.matrix().transpose();
  return detail::make_op<S>("transpose", Shape{a.dim(1), a.dim(0)}, std::move(out), {a},
                            [](const Tensor<S>& g, const Tensor<S>&) {
                              return std::vector<Tensor<S>>{transpose(g)};
                            });
}

// Global L2 norm (scalar). Composed of differentiable primitives, so it
// supports double backward away from zero.
template <class S>
Tensor<S> l2norm(const Tensor<S>& a) {
  return sqrt(sum(square(a)));
}

// Per-row L2 norm: [m,n] -> [m].
template <class S>
Tensor<S> rownorm(const Tensor<S>& a) {
  return sqrt(sum1(square(a)));
}

template <class S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) { return add(a, b); }
template <class S>
Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) { return sub(a, b); }
template <class S>
Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) { return mul(a, b); }
template <class S>
Tensor<S> operator-(const Tensor<S>& a) { return neg(a); }

// ---------------------------------------------------------------------------
// Backward drivers
// ---------------------------------------------------------------------------

namespace detail {

// Reverse post-order over the requires_grad subgraph rooted at `root`:
// every node appears before its parents.
template <class S>
std::vector<Tensor<S>> reverse_topo(const Tensor<S>& root) {
  std::vector<Tensor<S>> order;
  if (!root.requires_grad()) return order;
  std::unordered_set<const Node<S>*> seen;
  // Iterative DFS with explicit post-order emission.
  std::vector<std::pair<Tensor<S>, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    const auto& parents = t.node()->parents;
    bool descended = false;
    while (next < parents.size()) {
      const Tensor<S>& p = parents[next++];
      if (p.requires_grad() && !seen.count(p.node())) {
        seen.insert(p.node());
        stack.emplace_back(p, 0);
        descended = true;
        break;
      }
    }
    if (!descended && next >= stack.back().first.node()->parents.size()) {
      order.push_back(stack.back().first);
      stack.pop_back();
    }
  }
  std::reverse(order.begin(), order.end());
  return order;
}

template <class S>
std::unordered_map<const Node<S>*, Tensor<S>> sweep(const Tensor<S>& output,
                                                    const Tensor<S>& cotangent,
                                                    bool create_graph) {
  std::unordered_map<const Node<S>*, Tensor<S>> acc;
  if (!output.requires_grad()) return acc;
  if (cotangent.shape() != output.shape())
    throw ShapeError("backward", "cotangent " + shape_str(cotangent.shape()) +
                                     " vs output " + shape_str(output.shape()));
  auto order = reverse_topo(output);
  acc.emplace(output.node(), cotangent);
  GradGuard guard(create_graph);
  for (const auto& t : order) {
    auto it = acc.find(t.node());
    if (it == acc.end()) continue;
    Tensor<S> g = it->second;
    if (t.node()->leaf || !t.node()->vjp) continue;
    auto contributions = t.node()->vjp(g, t);
    const auto& parents = t.node()->parents;
    for (std::size_t i = 0; i < parents.size(); ++i) {
      if (!parents[i].requires_grad()) continue;
      if (i >= contributions.size() || !contributions[i]) continue;
      auto pit = acc.find(parents[i].node());
      if (pit == acc.end()) {
        acc.emplace(parents[i].node(), contributions[i]);
      } else {
        pit->second = add(pit->second, contributions[i]);
      }
    }
  }
  return acc;
}

}  // namespace detail

// Accumulates d(loss)/d(leaf) into every reached requires_grad leaf's .grad.
// Leaves listed in `params` that do not participate keep (or get) exact-zero
// gradients, so a full parameter set can always be consumed by the optimizer.
template <class S>
void backward(const Tensor<S>& loss, std::span<Tensor<S>> params = {}) {
  if (loss.size() != 1)
    throw ShapeError("backward", "loss " + shape_str(loss.shape()) + " is not scalar");
  for (auto& p : params) p.grad();  // materialize zero accumulators
  if (!loss.requires_grad()) return;
  Tensor<S> seed = Tensor<S>::constant(loss.shape(),
                                       Tensor<S>::Array::Constant(1, S(1)), "seed");
  auto acc = detail::sweep(loss, seed, /*create_graph=*/false);
  for (auto& [node, g] : acc) {
    if (!node->leaf) continue;
    auto* n = const_cast<Node<S>*>(node);
    if (n->grad.size() != n->value.size()) n->grad = Node<S>::Array::Zero(n->value.size());
    n->grad += g.values();
  }
}

// Pure-function gradients of `output` w.r.t. `wrt`, contracted with
// `cotangent`. Does not touch any .grad accumulator. With create_graph=true
// the returned tensors are graph nodes differentiable once more.
template <class S>
std::vector<Tensor<S>> grad_of(const Tensor<S>& output, const Tensor<S>& cotangent,
                               std::span<const Tensor<S>> wrt, bool create_graph) {
  auto acc = detail::sweep(output, cotangent, create_graph);
  std::vector<Tensor<S>> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    auto it = acc.find(w.node());
    if (it == acc.end()) {
      out.push_back(Tensor<S>::zeros(w.shape()));
    } else {
      out.push_back(it->second);
    }
  }
  return out;
}

}  // namespace lqg::ad
