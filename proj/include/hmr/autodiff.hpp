#pragma once

// Tape-based reverse-mode automatic differentiation over dense float64 arrays.
//
// A Graph owns every node recorded while an expression is evaluated; Vars are
// lightweight handles into it. Nodes are appended in creation order, so the
// tape is topologically sorted by construction and backward() is a single
// reverse sweep. Binary elementwise ops accept equal shapes or one operand of
// size 1; any other broadcasting must be spelled with expand().
//
// A Graph is confined to one thread. Parameters live outside graphs and are
// bound to a graph as leaves with Graph::param().

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmr::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles with an explicit shape.
struct Array {
  Shape shape;
  std::vector<double> data;

  Array() = default;
  explicit Array(Shape s, double fill = 0.0);
  Array(Shape s, std::vector<double> values);

  static Array scalar(double v) { return Array({1}, {v}); }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  friend bool operator==(const Array&, const Array&) = default;
};

/// Thrown when a primitive receives incompatible operand shapes.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& op, const Shape& a, const Shape& b);
  ShapeError(const std::string& op, const Shape& a, const std::string& detail);
};

/// A trainable tensor that outlives individual graphs.
struct Parameter {
  std::string name;
  Array value;
  Array grad;

  Parameter() = default;
  Parameter(std::string n, Array v);
  void zero_grad();
};

class Graph;

/// Handle to a node of a Graph.
class Var {
 public:
  Var() = default;

  bool valid() const { return graph_ != nullptr; }
  Graph* graph() const { return graph_; }
  std::size_t id() const { return id_; }

  const Array& value() const;
  const Shape& shape() const;
  std::size_t size() const;
  /// Value of a single-element Var.
  double item() const;
  bool requires_grad() const;
  /// Gradient accumulated by the last backward(); nullptr when none flowed here.
  const Array* grad() const;

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  struct Node {
    const char* op = "leaf";
    Array value;
    Array grad;  // empty until a gradient reaches this node
    bool requires_grad = false;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  Var constant(Array value);
  Var variable(Array value);
  /// Leaf bound to `p`; backward() adds dOut/dp into p.grad.
  Var param(Parameter& p);

  /// Reverse sweep from a single-element output.
  void backward(const Var& output);

  /// Appends a node. `fn` may be empty when no parent requires grad.
  Var record(const char* op, Array value, std::vector<std::size_t> parents, BackwardFn fn);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  Node& node(std::size_t id) { return nodes_[id]; }
  /// Gradient buffer of a node, zero-initialised on first access.
  Array& grad_buffer(std::size_t id);
  bool any_requires_grad(std::initializer_list<Var> vars) const;

  /// Sign pattern of every relu/abs input seen so far; used to detect kinks.
  const std::vector<std::int8_t>& kink_signature() const { return kinks_; }
  void note_kinks(const Array& input);

 private:
  std::deque<Node> nodes_;  // stable addresses: Var::value()/shape() references survive later nodes
  std::vector<std::int8_t> kinks_;
};

// Elementwise binary ops (equal shapes, or one side of size 1).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);

Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);

// Unary elementwise.
Var relu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
Var abs(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var sigmoid(const Var& a);
/// log(1 + exp(a)), evaluated without overflow.
Var softplus(const Var& a);

// Reductions.
Var sum(const Var& a);
Var mean(const Var& a);
/// [..., n] -> [..., 1]
Var sum_last(const Var& a);

// Linear algebra.
/// [m, k] x [k, n] -> [m, n]
Var matmul(const Var& a, const Var& b);
/// [b, m, k] x [b, k, n] -> [b, m, n]
Var bmm(const Var& a, const Var& b);
/// [..., m, n] -> [..., n, m]
Var transpose_last2(const Var& a);

// Layout.
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
/// Columns [begin, end) of the last axis.
Var slice_last(const Var& a, std::size_t begin, std::size_t end);
Var reshape(const Var& a, Shape shape);
/// Explicit broadcast: every axis of `a` is either 1 or equal to `shape`.
Var expand(const Var& a, Shape shape);
/// Flat gather: out[i] = a.data[indices[i]], shape [indices.size()].
Var take(const Var& a, std::vector<std::size_t> indices);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose perturbation crossed a relu/abs kink
};

using ScalarExpr = std::function<Var(Graph&, const Var&)>;

/// Compares backward() against fourth-order central differences at `point`.
GradCheckReport grad_check_report(const ScalarExpr& expr, const Array& point, double epsilon = 1e-3);
double grad_check(const ScalarExpr& expr, const Array& point, double epsilon = 1e-3);

/// Same check with respect to externally owned parameters; `expr` must bind
/// them through Graph::param. Parameter values are restored on return.
GradCheckReport grad_check_params(const std::function<Var(Graph&)>& expr,
                                  std::span<Parameter* const> params, double epsilon = 1e-3);

}  // namespace hmr::ad
