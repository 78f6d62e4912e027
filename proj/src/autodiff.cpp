#include "hmr/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>

namespace hmr::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

Graph& graph_of(const Var& a) {
  if (!a.valid()) throw std::invalid_argument("operation on an unbound Var");
  return *a.graph();
}

Graph& graph_of(const Var& a, const Var& b) {
  Graph& g = graph_of(a);
  if (b.graph() != &g) throw std::invalid_argument("operands belong to different graphs");
  return g;
}

template <class Fwd, class Deriv>
Var unary(const char* name, const Var& a, Fwd fwd, Deriv deriv) {
  Graph& g = graph_of(a);
  const Array& x = a.value();
  Array out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  Graph::BackwardFn fn;
  if (a.requires_grad()) {
    fn = [pa = a.id(), deriv](Graph& gr, std::size_t self) {
      const Array& gy = gr.node(self).grad;
      const Array& xv = gr.node(pa).value;
      const Array& yv = gr.node(self).value;
      Array& gx = gr.grad_buffer(pa);
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * deriv(xv[i], yv[i]);
    };
  }
  return g.record(name, std::move(out), {a.id()}, std::move(fn));
}

enum class Bcast { none, left, right };

Bcast broadcast_kind(const char* name, const Array& a, const Array& b, Shape& out_shape) {
  if (a.shape == b.shape) {
    out_shape = a.shape;
    return Bcast::none;
  }
  if (a.size() == 1 && b.size() == 1) {
    out_shape = a.rank() >= b.rank() ? a.shape : b.shape;
    return Bcast::none;
  }
  if (a.size() == 1) {
    out_shape = b.shape;
    return Bcast::left;
  }
  if (b.size() == 1) {
    out_shape = a.shape;
    return Bcast::right;
  }
  throw ShapeError(name, a.shape, b.shape);
}

// Binary elementwise op. `fwd(x, y)`; `dx(x, y, out)`, `dy(x, y, out)` are partials.
template <class Fwd, class Dx, class Dy>
Var binary(const char* name, const Var& a, const Var& b, Fwd fwd, Dx dx, Dy dy) {
  Graph& g = graph_of(a, b);
  const Array& x = a.value();
  const Array& y = b.value();
  Shape shape;
  const Bcast kind = broadcast_kind(name, x, y, shape);
  Array out(shape);
  const std::size_t n = out.size();
  const std::size_t sx = (kind == Bcast::left) ? 0 : 1;
  const std::size_t sy = (kind == Bcast::right) ? 0 : 1;
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(x[i * sx], y[i * sy]);
  Graph::BackwardFn fn;
  if (a.requires_grad() || b.requires_grad()) {
    fn = [pa = a.id(), pb = b.id(), sx, sy, dx, dy](Graph& gr, std::size_t self) {
      const Array& gz = gr.node(self).grad;
      const Array& xv = gr.node(pa).value;
      const Array& yv = gr.node(pb).value;
      const Array& zv = gr.node(self).value;
      if (gr.node(pa).requires_grad) {
        Array& gx = gr.grad_buffer(pa);
        for (std::size_t i = 0; i < gz.size(); ++i)
          gx[i * sx] += gz[i] * dx(xv[i * sx], yv[i * sy], zv[i]);
      }
      if (gr.node(pb).requires_grad) {
        Array& gy = gr.grad_buffer(pb);
        for (std::size_t i = 0; i < gz.size(); ++i)
          gy[i * sy] += gz[i] * dy(xv[i * sx], yv[i * sy], zv[i]);
      }
    };
  }
  return g.record(name, std::move(out), {a.id(), b.id()}, std::move(fn));
}

std::size_t last_dim(const char* name, const Array& a) {
  if (a.rank() == 0) throw ShapeError(name, a.shape, "rank must be at least 1");
  return a.shape.back();
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Array::Array(Shape s, double fill) : shape(std::move(s)), data(shape_size(shape), fill) {}

Array::Array(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != shape_size(shape))
    throw ShapeError("array", shape, "data length " + std::to_string(data.size()));
}

ShapeError::ShapeError(const std::string& op, const Shape& a, const Shape& b)
    : std::invalid_argument(op + ": incompatible shapes " + shape_string(a) + " and " +
                            shape_string(b)) {}

ShapeError::ShapeError(const std::string& op, const Shape& a, const std::string& detail)
    : std::invalid_argument(op + ": bad shape " + shape_string(a) + " (" + detail + ")") {}

Parameter::Parameter(std::string n, Array v)
    : name(std::move(n)), value(std::move(v)), grad(value.shape) {}

void Parameter::zero_grad() {
  if (grad.shape != value.shape) grad = Array(value.shape);
  std::fill(grad.data.begin(), grad.data.end(), 0.0);
}

const Array& Var::value() const { return graph_->node(id_).value; }
const Shape& Var::shape() const { return value().shape; }
std::size_t Var::size() const { return value().size(); }
bool Var::requires_grad() const { return graph_->node(id_).requires_grad; }

double Var::item() const {
  const Array& v = value();
  if (v.size() != 1) throw ShapeError("item", v.shape, "expected a single element");
  return v[0];
}

const Array* Var::grad() const {
  const Array& gr = graph_->node(id_).grad;
  return gr.data.empty() ? nullptr : &gr;
}

Var Graph::constant(Array value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::variable(Array value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::param(Parameter& p) {
  Node n;
  n.op = "param";
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(const char* op, Array value, std::vector<std::size_t> parents, BackwardFn fn) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  const std::size_t id = nodes_.size();
  for (std::size_t p : parents) {
    if (p >= id) throw std::logic_error(std::string(op) + ": parent recorded after child (cycle)");
    n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  }
  n.parents = std::move(parents);
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, id);
}

Array& Graph::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.data.empty()) n.grad = Array(n.value.shape);
  return n.grad;
}

bool Graph::any_requires_grad(std::initializer_list<Var> vars) const {
  return std::any_of(vars.begin(), vars.end(), [](const Var& v) { return v.requires_grad(); });
}

void Graph::note_kinks(const Array& input) {
  for (double v : input.data) kinks_.push_back(static_cast<std::int8_t>((v > 0) - (v < 0)));
}

void Graph::backward(const Var& output) {
  if (output.graph() != this) throw std::invalid_argument("backward: output belongs to another graph");
  const std::size_t root = output.id();
  if (nodes_[root].value.size() != 1)
    throw ShapeError("backward", nodes_[root].value.shape, "output must be a scalar");
  for (Node& n : nodes_) n.grad = Array();
  if (!nodes_[root].requires_grad) return;
  grad_buffer(root)[0] = 1.0;
  for (std::size_t i = root + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.data.empty() || !n.requires_grad) continue;
    for (std::size_t p : n.parents)
      if (p >= i) throw std::logic_error("backward: cycle detected in tape");
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr) {
      Parameter& p = *n.param;
      if (p.grad.shape != p.value.shape) p.grad = Array(p.value.shape);
      for (std::size_t k = 0; k < n.grad.size(); ++k) p.grad[k] += n.grad[k];
    }
  }
}

Var add(const Var& a, const Var& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Var div(const Var& a, const Var& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double z) { return -z / y; });
}

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator*(const Var& a, const Var& b) { return mul(a, b); }
Var operator/(const Var& a, const Var& b) { return div(a, b); }
Var operator-(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double c) {
  return unary(
      "scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(const Var& a, double c) {
  return unary(
      "add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var relu(const Var& a) {
  graph_of(a).note_kinks(a.value());
  return unary(
      "relu", a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var exp(const Var& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt(const Var& a) {
  return unary(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Var square(const Var& a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var abs(const Var& a) {
  graph_of(a).note_kinks(a.value());
  return unary(
      "abs", a, [](double x) { return std::abs(x); },
      [](double x, double) { return static_cast<double>((x > 0) - (x < 0)); });
}

Var sin(const Var& a) {
  return unary(
      "sin", a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Var cos(const Var& a) {
  return unary(
      "cos", a, [](double x) { return std::cos(x); },
      [](double x, double) { return -std::sin(x); });
}

Var sigmoid(const Var& a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var softplus(const Var& a) {
  return unary(
      "softplus", a,
      [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
}

Var sum(const Var& a) {
  Graph& g = graph_of(a);
  const Array& x = a.value();
  double s = 0.0;
  for (double v : x.data) s += v;
  Graph::BackwardFn fn = [pa = a.id()](Graph& gr, std::size_t self) {
    const double gy = gr.node(self).grad[0];
    Array& gx = gr.grad_buffer(pa);
    for (double& v : gx.data) v += gy;
  };
  return g.record("sum", Array::scalar(s), {a.id()}, std::move(fn));
}

Var mean(const Var& a) {
  const std::size_t n = a.size();
  if (n == 0) throw ShapeError("mean", a.shape(), "empty array");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var sum_last(const Var& a) {
  Graph& g = graph_of(a);
  const Array& x = a.value();
  const std::size_t n = last_dim("sum_last", x);
  Shape shape = x.shape;
  shape.back() = 1;
  Array out(shape);
  for (std::size_t r = 0; r < out.size(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += x[r * n + c];
    out[r] = s;
  }
  Graph::BackwardFn fn = [pa = a.id(), n](Graph& gr, std::size_t self) {
    const Array& gy = gr.node(self).grad;
    Array& gx = gr.grad_buffer(pa);
    for (std::size_t r = 0; r < gy.size(); ++r)
      for (std::size_t c = 0; c < n; ++c) gx[r * n + c] += gy[r];
  };
  return g.record("sum_last", std::move(out), {a.id()}, std::move(fn));
}

Var matmul(const Var& a, const Var& b) {
  Graph& g = graph_of(a, b);
  const Array& x = a.value();
  const Array& y = b.value();
  if (x.rank() != 2 || y.rank() != 2 || x.shape[1] != y.shape[0]) throw ShapeError("matmul", x.shape, y.shape);
  const auto m = static_cast<Eigen::Index>(x.shape[0]);
  const auto k = static_cast<Eigen::Index>(x.shape[1]);
  const auto n = static_cast<Eigen::Index>(y.shape[1]);
  Array out({x.shape[0], y.shape[1]});
  MMap(out.data.data(), m, n).noalias() = CMap(x.data.data(), m, k) * CMap(y.data.data(), k, n);
  Graph::BackwardFn fn = [pa = a.id(), pb = b.id(), m, k, n](Graph& gr, std::size_t self) {
    CMap gz(gr.node(self).grad.data.data(), m, n);
    if (gr.node(pa).requires_grad) {
      CMap yv(gr.node(pb).value.data.data(), k, n);
      MMap(gr.grad_buffer(pa).data.data(), m, k).noalias() += gz * yv.transpose();
    }
    if (gr.node(pb).requires_grad) {
      CMap xv(gr.node(pa).value.data.data(), m, k);
      MMap(gr.grad_buffer(pb).data.data(), k, n).noalias() += xv.transpose() * gz;
    }
  };
  return g.record("matmul", std::move(out), {a.id(), b.id()}, std::move(fn));
}

Var bmm(const Var& a, const Var& b) {
  Graph& g = graph_of(a, b);
  const Array& x = a.value();
  const Array& y = b.value();
  if (x.rank() != 3 || y.rank() != 3 || x.shape[0] != y.shape[0] || x.shape[2] != y.shape[1])
    throw ShapeError("bmm", x.shape, y.shape);
  const std::size_t batch = x.shape[0];
  const auto m = static_cast<Eigen::Index>(x.shape[1]);
  const auto k = static_cast<Eigen::Index>(x.shape[2]);
  const auto n = static_cast<Eigen::Index>(y.shape[2]);
  Array out({batch, x.shape[1], y.shape[2]});
  for (std::size_t i = 0; i < batch; ++i)
    MMap(out.data.data() + i * m * n, m, n).noalias() =
        CMap(x.data.data() + i * m * k, m, k) * CMap(y.data.data() + i * k * n, k, n);
  Graph::BackwardFn fn = [pa = a.id(), pb = b.id(), batch, m, k, n](Graph& gr, std::size_t self) {
    const double* gz = gr.node(self).grad.data.data();
    const bool need_a = gr.node(pa).requires_grad;
    const bool need_b = gr.node(pb).requires_grad;
    double* ga = need_a ? gr.grad_buffer(pa).data.data() : nullptr;
    double* gb = need_b ? gr.grad_buffer(pb).data.data() : nullptr;
    const double* xv = gr.node(pa).value.data.data();
    const double* yv = gr.node(pb).value.data.data();
    for (std::size_t i = 0; i < batch; ++i) {
      CMap gzi(gz + i * m * n, m, n);
      if (need_a) MMap(ga + i * m * k, m, k).noalias() += gzi * CMap(yv + i * k * n, k, n).transpose();
      if (need_b) MMap(gb + i * k * n, k, n).noalias() += CMap(xv + i * m * k, m, k).transpose() * gzi;
    }
  };
  return g.record("bmm", std::move(out), {a.id(), b.id()}, std::move(fn));
}

Var transpose_last2(const Var& a) {
  Graph& g = graph_of(a);
  const Array& x = a.value();
  if (x.rank() < 2) throw ShapeError("transpose_last2", x.shape, "rank must be at least 2");
  const std::size_t m = x.shape[x.rank() - 2];
  const std::size_t n = x.shape[x.rank() - 1];
  const std::size_t batch = x.size() / (m * n);
  Shape shape = x.shape;
  std::swap(shape[shape.size() - 2], shape[shape.size() - 1]);
  Array out(shape);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[b * m * n + j * m + i] = x[b * m * n + i * n + j];
  Graph::BackwardFn fn = [pa = a.id(), batch, m, n](Graph& gr, std::size_t self) {
    const Array& gy = gr.node(self).grad;
    Array& gx = gr.grad_buffer(pa);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[b * m * n + i * n + j] += gy[b * m * n + j * m + i];
  };
  return g.record("transpose_last2", std::move(out), {a.id()}, std::move(fn));
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no operands");
  Graph& g = graph_of(parts[0]);
  const Shape& first = parts[0].shape();
  last_dim("concat", parts[0].value());
  const Shape lead(first.begin(), first.end() - 1);
  const std::size_t rows = shape_size(lead);
  std::vector<std::size_t> widths;
  std::vector<std::size_t> ids;
  std::size_t total = 0;
  for (const Var& p : parts) {
    graph_of(parts[0], p);
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(lead.begin(), lead.end(), s.begin()))
      throw ShapeError("concat", first, s);
    widths.push_back(s.back());
    ids.push_back(p.id());
    total += s.back();
  }
  Shape shape = first;
  shape.back() = total;
  Array out(shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Array& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.data.begin() + r * widths[k], widths[k], out.data.begin() + r * total + offset);
    offset += widths[k];
  }
  Graph::BackwardFn fn = [ids, widths, rows, total](Graph& gr, std::size_t self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (gr.node(ids[k]).requires_grad) {
        const Array& gy = gr.node(self).grad;
        Array& gx = gr.grad_buffer(ids[k]);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < widths[k]; ++c) gx[r * widths[k] + c] += gy[r * total + off + c];
      }
      off += widths[k];
    }
  };
  return g.record("concat", std::move(out), ids, std::move(fn));
}

Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var slice_last(const Var& a, std::size_t begin, std::size_t end) {
  Graph& g = graph_of(a);
  const Array& x = a.value();
  const std::size_t n = last_dim("slice_last", x);
  if (begin >= end || end > n)
    throw ShapeError("slice_last", x.shape, "range [" + std::to_string(begin) + "," + std::to_string(end) + ")");
  const std::size_t w = end - begin;
  Shape shape = x.shape;
  shape.back() = w;
  Array out(shape);
  const std::size_t rows = x.size() / n;
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x.data.begin() + r * n + begin, w, out.data.begin() + r * w);
  Graph::BackwardFn fn = [pa = a.id(), rows, n, w, begin](Graph& gr, std::size_t self) {
    const Array& gy = gr.node(self).grad;
    Array& gx = gr.grad_buffer(pa);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < w; ++c) gx[r * n + begin + c] += gy[r * w + c];
  };
  return g.record("slice_last", std::move(out), {a.id()}, std::move(fn));
}

Var reshape(const Var& a, Shape shape) {
  Graph& g = graph_of(a);
  if (shape_size(shape) != a.size()) throw ShapeError("reshape", a.shape(), shape);
  Array out(std::move(shape), a.value().data);
  Graph::BackwardFn fn = [pa = a.id()](Graph& gr, std::size_t self) {
    const Array& gy = gr.node(self).grad;
    Array& gx = gr.grad_buffer(pa);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  };
  return g.record("reshape", std::move(out), {a.id()}, std::move(fn));
}

Var expand(const Var& a, Shape shape) {
  Graph& g = graph_of(a);
  const Array& x = a.value();
  if (x.rank() != shape.size()) throw ShapeError("expand", x.shape, shape);
  for (std::size_t d = 0; d < shape.size(); ++d)
    if (x.shape[d] != shape[d] && x.shape[d] != 1) throw ShapeError("expand", x.shape, shape);
  // Map every output index to its source index.
  const std::size_t rank = shape.size();
  std::vector<std::size_t> src_stride(rank, 0);
  std::size_t stride = 1;
  for (std::size_t d = rank; d-- > 0;) {
    src_stride[d] = (x.shape[d] == 1) ? 0 : stride;
    stride *= x.shape[d];
  }
  Array out(shape);
  std::vector<std::size_t> source(out.size());
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t s = 0;
    for (std::size_t d = 0; d < rank; ++d) s += idx[d] * src_stride[d];
    source[i] = s;
    out[i] = x[s];
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  Graph::BackwardFn fn = [pa = a.id(), source = std::move(source)](Graph& gr, std::size_t self) {
    const Array& gy = gr.node(self).grad;
    Array& gx = gr.grad_buffer(pa);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[source[i]] += gy[i];
  };
  return g.record("expand", std::move(out), {a.id()}, std::move(fn));
}

Var take(const Var& a, std::vector<std::size_t> indices) {
  Graph& g = graph_of(a);
  const Array& x = a.value();
  Array out({indices.size()});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= x.size()) throw ShapeError("take", x.shape, "index " + std::to_string(indices[i]));
    out[i] = x[indices[i]];
  }
  if (indices.empty()) out.shape = {0};
  Graph::BackwardFn fn = [pa = a.id(), indices = std::move(indices)](Graph& gr, std::size_t self) {
    const Array& gy = gr.node(self).grad;
    Array& gx = gr.grad_buffer(pa);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[indices[i]] += gy[i];
  };
  return g.record("take", std::move(out), {a.id()}, std::move(fn));
}

namespace {

// The floor grows with |f| because the rounding noise of a difference quotient does.
double relative_error(double analytic, double numeric, double value) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8 * std::max(1.0, std::abs(value))});
  return std::abs(analytic - numeric) / denom;
}

// Fourth-order central difference; nullopt when any probe lands on the other
// side of a relu/abs kink than the base point.
template <class Eval>
std::optional<double> central_difference(Eval&& eval, double epsilon) {
  double f[4];
  const double offsets[4] = {-2.0, -1.0, 1.0, 2.0};
  for (int k = 0; k < 4; ++k) {
    auto v = eval(offsets[k] * epsilon);
    if (!v) return std::nullopt;
    f[k] = *v;
  }
  return (f[0] - 8.0 * f[1] + 8.0 * f[2] - f[3]) / (12.0 * epsilon);
}

}  // namespace

GradCheckReport grad_check_report(const ScalarExpr& expr, const Array& point, double epsilon) {
  GradCheckReport report;
  Array analytic(point.shape);
  std::vector<std::int8_t> base_kinks;
  double value = 0.0;
  {
    Graph g;
    Var x = g.variable(point);
    Var out = expr(g, x);
    value = out.item();
    g.backward(out);
    if (const Array* gx = x.grad()) analytic = *gx;
    base_kinks = g.kink_signature();
  }
  Array probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const auto numeric = central_difference(
        [&](double delta) -> std::optional<double> {
          probe[i] = point[i] + delta;
          Graph g;
          Var x = g.constant(probe);
          const double v = expr(g, x).item();
          probe[i] = point[i];
          if (g.kink_signature() != base_kinks) return std::nullopt;
          return v;
        },
        epsilon);
    if (!numeric) {
      ++report.skipped;
      continue;
    }
    report.max_relative_error = std::max(report.max_relative_error, relative_error(analytic[i], *numeric, value));
    ++report.checked;
  }
  return report;
}

double grad_check(const ScalarExpr& expr, const Array& point, double epsilon) {
  return grad_check_report(expr, point, epsilon).max_relative_error;
}

GradCheckReport grad_check_params(const std::function<Var(Graph&)>& expr,
                                  std::span<Parameter* const> params, double epsilon) {
  GradCheckReport report;
  for (Parameter* p : params) p->zero_grad();
  std::vector<std::int8_t> base_kinks;
  double value = 0.0;
  {
    Graph g;
    Var out = expr(g);
    value = out.item();
    g.backward(out);
    base_kinks = g.kink_signature();
  }
  std::vector<Array> analytic;
  for (Parameter* p : params) analytic.push_back(p->grad);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      const auto numeric = central_difference(
          [&](double delta) -> std::optional<double> {
            p.value[i] = orig + delta;
            Graph g;
            const double v = expr(g).item();
            p.value[i] = orig;
            if (g.kink_signature() != base_kinks) return std::nullopt;
            return v;
          },
          epsilon);
      if (!numeric) {
        ++report.skipped;
        continue;
      }
      report.max_relative_error = std::max(report.max_relative_error, relative_error(analytic[k][i], *numeric, value));
      ++report.checked;
    }
  }
  for (Parameter* p : params) p->zero_grad();
  return report;
}

}  // namespace hmr::ad
