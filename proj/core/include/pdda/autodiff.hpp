#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <vector>

#include "pdda/tensor.hpp"

namespace pdda::ad {

enum class OpKind : std::uint8_t {
  leaf,
  // elementwise
  add,
  sub,
  mul,
  div,
  neg,
  exp,
  log,
  sqrt,
  silu,
  relu,
  clamp,
  scale,
  add_scalar,
  // contractions, reductions and data movement
  matmul,
  transpose,
  conv2d,
  avg_pool2d,
  upsample2d,
  sum,
  mean,
  sum_last,
  dot,
  l2_norm,
  softmax,
  log_softmax,
  reshape,
  gather,
};

const char* name(OpKind kind);

class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while the graph lives.
class Var {
 public:
  Var() = default;

  const Shape& shape() const;
  std::span<const double> data() const;
  std::size_t size() const;
  /// Value of a single-element node.
  double item() const;
  Tensor value() const;
  bool requires_grad() const;

  std::uint32_t id() const { return id_; }
  Graph* graph() const { return graph_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, std::uint32_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Append-only tape of recorded operations. Nodes are stored in creation
/// order; inputs always precede the node that consumes them, so backward is
/// a single sweep in reverse append order.
///
/// A graph built with `record_backward = false` evaluates the same kernels
/// but keeps no backward closures (inference mode).
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::uint32_t self)>;

  struct Node {
    OpKind kind = OpKind::leaf;
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until reached by backward
    std::vector<std::uint32_t> inputs;
    bool requires_grad = false;
    BackwardFn backward;
  };

  explicit Graph(bool record_backward = true) : record_(record_backward) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor t);
  Var variable(Tensor t);

  /// Seeds d(output)/d(output) = 1 for a single-element output.
  void backward(Var output);
  /// Vector-Jacobian product with an explicit cotangent for `output`.
  void backward(Var output, std::span<const double> seed);

  /// Gradient accumulated at `v` by the last backward call (zeros if unreached).
  std::vector<double> grad(Var v) const;
  Tensor grad_tensor(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return record_; }
  const Node& node(std::uint32_t id) const { return nodes_[id]; }
  OpKind kind(Var v) const { return nodes_[v.id()].kind; }

  // Used by op implementations.
  Var record(OpKind kind, Shape shape, std::vector<double> value,
             std::initializer_list<Var> inputs, BackwardFn backward);
  std::vector<double>& grad_buffer(std::uint32_t id);
  bool wants_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }

 private:
  void check_owner(Var v) const;

  bool record_;
  std::deque<Node> nodes_;  // stable addresses: Var accessors hand out references
};

// ---- elementwise --------------------------------------------------------

enum class Elementwise : std::uint8_t {
  add, sub, mul, div, neg, exp, log, sqrt, silu, relu, clamp
};

struct ElementwiseParams {
  double lo = -1.0;  // clamp bounds
  double hi = 1.0;
};

/// Binary kinds broadcast right-aligned dimensions that are equal or 1.
/// log/sqrt of negative input and division by zero throw instead of
/// producing NaN.
Var elementwise(Elementwise kind, Var a, std::optional<Var> b = std::nullopt,
                ElementwiseParams params = {});

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var silu(Var a);
Var relu(Var a);
Var clamp(Var a, double lo, double hi);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(double c, Var a) { return scale(a, c); }

// ---- contractions and reductions ---------------------------------------

/// (m,k) x (k,n) -> (m,n)
Var matmul(Var a, Var b);
Var transpose(Var a);
/// x: (N,C,H,W); weight: (O,C,K,K) with K odd; bias: (O) or invalid Var.
/// Stride 1, zero padding K/2 so the resolution is preserved.
Var conv2d(Var x, Var weight, Var bias = {});
/// Pools the last two dimensions by k; both must be divisible by k.
Var avg_pool2d(Var x, std::size_t k);
/// Nearest-neighbour upsampling of the last two dimensions by k.
Var upsample2d(Var x, std::size_t k);
Var sum(Var a);
Var mean(Var a);
/// Sums the last axis, keeping it with extent 1.
Var sum_last(Var a);
Var mean_last(Var a);
Var dot(Var a, Var b);
Var l2_norm(Var a);
Var softmax(Var a);
Var log_softmax(Var a);
Var reshape(Var a, Shape shape);
/// out[j] = a[indices[j]]; backward scatters-adds.
Var gather(Var a, std::vector<std::size_t> indices, Shape shape);

// ---- gradient checking --------------------------------------------------

using ScalarFn = std::function<Var(Graph&, Var)>;

/// Max over coordinates of |analytic - central difference| /
/// max(1, |central difference|). `coords` restricts the check to a subset of
/// coordinates (all when empty).
double finite_diff_check(const ScalarFn& loss_fn, const Tensor& x, double h,
                         std::span<const std::size_t> coords = {});

}  // namespace pdda::ad
