#pragma once

// Minimal reverse-mode differentiation over small dense tensor expressions.
//
// A Graph is built once from named leaves and a closed set of operations,
// then evaluated or differentiated against a set of leaf bindings. Graphs are
// not mutated by evaluate/gradient, so a finished graph may be shared across
// threads.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace repo::diff {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BindingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-major dense tensor of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_))
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v) {
    Shape s{v.size()};
    return Tensor(std::move(s), std::move(v));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor(Shape{rows, cols}, std::move(v));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  /// Rows/cols view a tensor as a matrix: rank-0 is 1x1, rank-1 is 1xN.
  std::size_t rows() const {
    if (shape_.size() < 2) return 1;
    return shape_size(Shape(shape_.begin(), shape_.end() - 1));
  }
  std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  double item() const {
    if (data_.size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_string(shape_));
    return data_[0];
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  Tensor& operator+=(const Tensor& other) {
    if (other.shape_ != shape_)
      throw ShapeError("accumulate " + shape_string(other.shape_) + " into " + shape_string(shape_));
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Kernels shared by the graph evaluator and by direct (non-graph) callers.
// Keeping one implementation makes both paths bit-identical.
namespace kernels {

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor out(Shape{n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
      out.at(i, j) = acc;
    }
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

/// Adds a row vector to every row of a matrix.
inline Tensor broadcast_add(const Tensor& a, const Tensor& row) {
  Tensor out = a;
  const std::size_t c = a.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + row[i % c];
  return out;
}

inline Tensor tanh(const Tensor& a) {
  Tensor out = a;
  for (auto& v : out.values()) v = std::tanh(v);
  return out;
}

/// Row-wise log-softmax over the last axis, max-subtracted.
inline Tensor log_softmax(const Tensor& a) {
  Tensor out = a;
  const std::size_t r = a.rows(), c = a.cols();
  for (std::size_t i = 0; i < r; ++i) {
    double mx = a.at(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, a.at(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(a.at(i, j) - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) = a.at(i, j) - lse;
  }
  return out;
}

inline Tensor gather_rows(const Tensor& table, std::span<const std::size_t> idx) {
  const std::size_t c = table.cols();
  Tensor out(Shape{idx.size(), c});
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) = table.at(idx[i], j);
  return out;
}

/// log_softmax(a)[i, idx[i]] for each row i, as an [R x 1] column.
inline Tensor log_softmax_pick(const Tensor& a, std::span<const std::size_t> idx) {
  const Tensor ls = log_softmax(a);
  Tensor out(Shape{a.rows(), 1});
  for (std::size_t i = 0; i < a.rows(); ++i) out[i] = ls.at(i, idx[i]);
  return out;
}

}  // namespace kernels

enum class OpKind {
  Leaf,
  MatMul,
  Add,
  BroadcastAdd,
  Tanh,
  LogSoftmax,
  GatherRows,
  LogSoftmaxPick,
  Scale,
  Sum,
  Mean,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::Leaf: return "leaf";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::BroadcastAdd: return "broadcast_add";
    case OpKind::Tanh: return "tanh";
    case OpKind::LogSoftmax: return "log_softmax";
    case OpKind::GatherRows: return "gather_rows";
    case OpKind::LogSoftmaxPick: return "log_softmax_pick";
    case OpKind::Scale: return "scale";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
  }
  return "?";
}

using NodeId = std::size_t;
using Bindings = std::map<std::string, Tensor, std::less<>>;
using GradientMap = std::map<std::string, Tensor, std::less<>>;

/// Post-processes the gradient a node sends to one of its inputs. Used only
/// to inject faults when testing the gradient checker.
using BackwardOverride = std::function<void(OpKind, std::size_t input_slot, Tensor& grad_in)>;

class Graph {
 public:
  /// Leaf whose value is supplied through bindings at evaluation time.
  NodeId input(std::string name, Shape shape) {
    for (const auto& n : nodes_)
      if (n.kind == OpKind::Leaf && n.name == name)
        throw BindingError("duplicate leaf name '" + name + "'");
    Node n;
    n.kind = OpKind::Leaf;
    n.name = std::move(name);
    n.shape = std::move(shape);
    return push(std::move(n));
  }

  /// Leaf with a fixed embedded value.
  NodeId constant(Tensor value) {
    Node n;
    n.kind = OpKind::Leaf;
    n.shape = value.shape();
    n.value = std::move(value);
    return push(std::move(n));
  }

  NodeId matmul(NodeId a, NodeId b) {
    const auto& sa = shape_of(a);
    const auto& sb = shape_of(b);
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
      throw ShapeError(node_label(nodes_.size(), OpKind::MatMul) + ": cannot multiply " +
                       shape_string(sa) + " by " + shape_string(sb));
    return push(make(OpKind::MatMul, {a, b}, Shape{sa[0], sb[1]}));
  }

  NodeId add(NodeId a, NodeId b) {
    if (shape_of(a) != shape_of(b))
      throw ShapeError(node_label(nodes_.size(), OpKind::Add) + ": operand shapes " +
                       shape_string(shape_of(a)) + " and " + shape_string(shape_of(b)) + " differ");
    return push(make(OpKind::Add, {a, b}, shape_of(a)));
  }

  /// a: [R x C], row: [1 x C] or [C].
  NodeId broadcast_add(NodeId a, NodeId row) {
    const auto& sa = shape_of(a);
    const auto& sr = shape_of(row);
    const bool ok = sa.size() == 2 && shape_size(sr) == sa[1] &&
                    (sr.size() == 1 || (sr.size() == 2 && sr[0] == 1));
    if (!ok)
      throw ShapeError(node_label(nodes_.size(), OpKind::BroadcastAdd) + ": cannot broadcast " +
                       shape_string(sr) + " over rows of " + shape_string(sa));
    return push(make(OpKind::BroadcastAdd, {a, row}, sa));
  }

  NodeId tanh(NodeId a) { return push(make(OpKind::Tanh, {a}, shape_of(a))); }

  NodeId log_softmax(NodeId a) {
    if (shape_of(a).empty())
      throw ShapeError(node_label(nodes_.size(), OpKind::LogSoftmax) + ": needs rank >= 1");
    return push(make(OpKind::LogSoftmax, {a}, shape_of(a)));
  }

  /// Selects rows of a [N x C] table: result [len(idx) x C].
  NodeId gather_rows(NodeId table, std::vector<std::size_t> idx) {
    const auto& st = shape_of(table);
    if (st.size() != 2)
      throw ShapeError(node_label(nodes_.size(), OpKind::GatherRows) + ": table must be a matrix, got " +
                       shape_string(st));
    for (auto i : idx)
      if (i >= st[0])
        throw ShapeError(node_label(nodes_.size(), OpKind::GatherRows) + ": row index " +
                         std::to_string(i) + " out of range for " + shape_string(st));
    Node n = make(OpKind::GatherRows, {table}, Shape{idx.size(), st[1]});
    n.indices = std::move(idx);
    return push(std::move(n));
  }

  /// Fused log_softmax + per-row pick: result [R x 1] of log p(idx[r] | row r).
  NodeId log_softmax_pick(NodeId logits, std::vector<std::size_t> idx) {
    const auto& s = shape_of(logits);
    if (s.size() != 2 || idx.size() != s[0])
      throw ShapeError(node_label(nodes_.size(), OpKind::LogSoftmaxPick) + ": need one index per row of " +
                       shape_string(s) + ", got " + std::to_string(idx.size()));
    for (auto i : idx)
      if (i >= s[1])
        throw ShapeError(node_label(nodes_.size(), OpKind::LogSoftmaxPick) + ": class index " +
                         std::to_string(i) + " out of range for " + shape_string(s));
    Node n = make(OpKind::LogSoftmaxPick, {logits}, Shape{s[0], 1});
    n.indices = std::move(idx);
    return push(std::move(n));
  }

  NodeId scale(NodeId a, double factor) {
    Node n = make(OpKind::Scale, {a}, shape_of(a));
    n.factor = factor;
    return push(std::move(n));
  }

  NodeId sum(NodeId a) { return push(make(OpKind::Sum, {a}, Shape{})); }
  NodeId mean(NodeId a) { return push(make(OpKind::Mean, {a}, Shape{})); }

  /// Defaults to the most recently added node.
  void set_root(NodeId id) {
    check_id(id);
    root_ = id;
  }
  NodeId root() const {
    if (nodes_.empty()) throw BindingError("empty graph has no root");
    return root_.value_or(nodes_.size() - 1);
  }

  std::size_t node_count() const { return nodes_.size(); }
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  const Shape& shape_of(NodeId id) const {
    check_id(id);
    return nodes_[id].shape;
  }

  std::vector<std::string> input_names() const {
    std::vector<std::string> out;
    for (const auto& n : nodes_)
      if (n.kind == OpKind::Leaf && !n.value) out.push_back(n.name);
    return out;
  }

  Tensor evaluate(const Bindings& bindings) const {
    return forward(bindings).at(root());
  }

  /// Reverse pass from the scalar root; returns d root / d leaf for each
  /// requested input leaf.
  GradientMap gradient(const Bindings& bindings, const std::vector<std::string>& wrt,
                       const BackwardOverride& override_rule = {}) const {
    const NodeId r = root();
    if (shape_size(nodes_[r].shape) != 1)
      throw ShapeError("gradient requires a scalar root, root " + node_label(r, nodes_[r].kind) +
                       " has shape " + shape_string(nodes_[r].shape));
    for (const auto& name : wrt)
      if (!find_input(name))
        throw BindingError("gradient requested for unknown leaf '" + name + "'");

    const std::vector<Tensor> values = forward(bindings);
    std::vector<std::optional<Tensor>> grads(nodes_.size());
    grads[r] = Tensor(nodes_[r].shape, 1.0);

    for (NodeId id = r + 1; id-- > 0;) {
      if (!grads[id]) continue;
      const Node& n = nodes_[id];
      const Tensor& g = *grads[id];
      auto send = [&](std::size_t slot, Tensor gi) {
        if (override_rule) override_rule(n.kind, slot, gi);
        auto& dst = grads[n.inputs[slot]];
        if (dst) *dst += gi;
        else dst = std::move(gi);
      };
      switch (n.kind) {
        case OpKind::Leaf:
          break;
        case OpKind::MatMul: {
          const Tensor& a = values[n.inputs[0]];
          const Tensor& b = values[n.inputs[1]];
          const std::size_t rows = a.rows(), k = a.cols(), m = b.cols();
          Tensor ga(a.shape()), gb(b.shape());
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              for (std::size_t j = 0; j < m; ++j) acc += g.at(i, j) * b.at(p, j);
              ga.at(i, p) = acc;
            }
          for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < m; ++j) {
              double acc = 0.0;
              for (std::size_t i = 0; i < rows; ++i) acc += a.at(i, p) * g.at(i, j);
              gb.at(p, j) = acc;
            }
          send(0, std::move(ga));
          send(1, std::move(gb));
          break;
        }
        case OpKind::Add:
          send(0, g);
          send(1, g);
          break;
        case OpKind::BroadcastAdd: {
          const Shape& rs = nodes_[n.inputs[1]].shape;
          Tensor gr(rs);
          const std::size_t c = g.cols();
          for (std::size_t i = 0; i < g.size(); ++i) gr[i % c] += g[i];
          send(0, g);
          send(1, std::move(gr));
          break;
        }
        case OpKind::Tanh: {
          const Tensor& y = values[id];
          Tensor gi(g.shape());
          for (std::size_t i = 0; i < g.size(); ++i) gi[i] = g[i] * (1.0 - y[i] * y[i]);
          send(0, std::move(gi));
          break;
        }
        case OpKind::LogSoftmax: {
          // dx_j = g_j - softmax_j * sum_k g_k
          const Tensor& y = values[id];
          Tensor gi(g.shape());
          const std::size_t rows = y.rows(), c = y.cols();
          for (std::size_t i = 0; i < rows; ++i) {
            double gs = 0.0;
            for (std::size_t j = 0; j < c; ++j) gs += g.at(i, j);
            for (std::size_t j = 0; j < c; ++j) gi.at(i, j) = g.at(i, j) - std::exp(y.at(i, j)) * gs;
          }
          send(0, std::move(gi));
          break;
        }
        case OpKind::GatherRows: {
          Tensor gt(nodes_[n.inputs[0]].shape);
          const std::size_t c = gt.cols();
          for (std::size_t i = 0; i < n.indices.size(); ++i)
            for (std::size_t j = 0; j < c; ++j) gt.at(n.indices[i], j) += g.at(i, j);
          send(0, std::move(gt));
          break;
        }
        case OpKind::LogSoftmaxPick: {
          // d/dx_j log softmax(x)_k = [j == k] - softmax_j
          const Tensor ls = kernels::log_softmax(values[n.inputs[0]]);
          Tensor gi(ls.shape());
          const std::size_t c = ls.cols();
          for (std::size_t i = 0; i < ls.rows(); ++i)
            for (std::size_t j = 0; j < c; ++j)
              gi.at(i, j) = g[i] * ((j == n.indices[i] ? 1.0 : 0.0) - std::exp(ls.at(i, j)));
          send(0, std::move(gi));
          break;
        }
        case OpKind::Scale: {
          Tensor gi = g;
          for (auto& v : gi.values()) v *= n.factor;
          send(0, std::move(gi));
          break;
        }
        case OpKind::Sum:
          send(0, Tensor(nodes_[n.inputs[0]].shape, g.item()));
          break;
        case OpKind::Mean: {
          const Shape& s = nodes_[n.inputs[0]].shape;
          send(0, Tensor(s, g.item() / static_cast<double>(shape_size(s))));
          break;
        }
      }
    }

    GradientMap out;
    for (const auto& name : wrt) {
      const NodeId id = *find_input(name);
      out.emplace(name, grads[id] ? std::move(*grads[id]) : Tensor(nodes_[id].shape));
    }
    return out;
  }

 private:
  struct Node {
    OpKind kind = OpKind::Leaf;
    std::vector<NodeId> inputs;
    Shape shape;
    std::string name;
    std::optional<Tensor> value;
    std::vector<std::size_t> indices;
    double factor = 1.0;
  };

  Node make(OpKind kind, std::vector<NodeId> inputs, Shape shape) const {
    for (auto i : inputs) check_id(i);
    Node n;
    n.kind = kind;
    n.inputs = std::move(inputs);
    n.shape = std::move(shape);
    return n;
  }

  NodeId push(Node n) {
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  void check_id(NodeId id) const {
    if (id >= nodes_.size()) throw ShapeError("node id " + std::to_string(id) + " does not exist");
  }

  std::string node_label(NodeId id, OpKind kind) const {
    return "node " + std::to_string(id) + " (" + op_name(kind) + ")";
  }

  std::optional<NodeId> find_input(std::string_view name) const {
    for (NodeId i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].kind == OpKind::Leaf && !nodes_[i].value && nodes_[i].name == name) return i;
    return std::nullopt;
  }

  std::vector<Tensor> forward(const Bindings& bindings) const {
    std::vector<Tensor> v(nodes_.size());
    for (NodeId id = 0; id < nodes_.size(); ++id) {
      const Node& n = nodes_[id];
      switch (n.kind) {
        case OpKind::Leaf: {
          if (n.value) {
            v[id] = *n.value;
            break;
          }
          auto it = bindings.find(n.name);
          if (it == bindings.end()) throw BindingError("unbound leaf '" + n.name + "'");
          if (it->second.shape() != n.shape)
            throw ShapeError("node " + std::to_string(id) + " (leaf '" + n.name + "'): bound shape " +
                             shape_string(it->second.shape()) + ", declared " + shape_string(n.shape));
          v[id] = it->second;
          break;
        }
        case OpKind::MatMul: v[id] = kernels::matmul(v[n.inputs[0]], v[n.inputs[1]]); break;
        case OpKind::Add: v[id] = kernels::add(v[n.inputs[0]], v[n.inputs[1]]); break;
        case OpKind::BroadcastAdd: v[id] = kernels::broadcast_add(v[n.inputs[0]], v[n.inputs[1]]); break;
        case OpKind::Tanh: v[id] = kernels::tanh(v[n.inputs[0]]); break;
        case OpKind::LogSoftmax: v[id] = kernels::log_softmax(v[n.inputs[0]]); break;
        case OpKind::GatherRows: v[id] = kernels::gather_rows(v[n.inputs[0]], n.indices); break;
        case OpKind::LogSoftmaxPick: v[id] = kernels::log_softmax_pick(v[n.inputs[0]], n.indices); break;
        case OpKind::Scale: {
          Tensor t = v[n.inputs[0]];
          for (auto& x : t.values()) x *= n.factor;
          v[id] = std::move(t);
          break;
        }
        case OpKind::Sum: {
          const auto& d = v[n.inputs[0]].values();
          v[id] = Tensor::scalar(std::accumulate(d.begin(), d.end(), 0.0));
          break;
        }
        case OpKind::Mean: {
          const auto& d = v[n.inputs[0]].values();
          v[id] = Tensor::scalar(std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size()));
          break;
        }
      }
    }
    return v;
  }

  std::vector<Node> nodes_;
  std::optional<NodeId> root_;
};

/// Relative error between an analytic and a numeric derivative. The floor
/// keeps near-zero components from reporting round-off as relative error.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradientCheckReport {
  std::map<std::string, double, std::less<>> max_relative_error;
  double tolerance = 0.0;
  bool passed = false;

  double worst() const {
    double w = 0.0;
    for (const auto& [_, e] : max_relative_error) w = std::max(w, e);
    return w;
  }
};

/// Compares analytic gradients of a scalar function against central finite
/// differences, perturbing every entry of every named point tensor.
template <typename ValueFn, typename GradFn>
GradientCheckReport check_gradient_fn(ValueFn&& value, GradFn&& grad, Bindings point,
                                      const std::vector<std::string>& wrt, double step,
                                      double tolerance) {
  if (!(step > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  GradientCheckReport report;
  report.tolerance = tolerance;
  const GradientMap analytic = grad(std::as_const(point));
  for (const auto& name : wrt) {
    Tensor& x = point.at(name);
    const Tensor& a = analytic.at(name);
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double orig = x[i];
      x[i] = orig + step;
      const double fp = value(std::as_const(point));
      x[i] = orig - step;
      const double fm = value(std::as_const(point));
      x[i] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      double err = relative_error(a[i], numeric);
      if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();
      worst = std::max(worst, err);
    }
    report.max_relative_error[name] = worst;
  }
  report.passed = report.worst() < tolerance;
  return report;
}

inline GradientCheckReport check_gradient(const Graph& graph, const Bindings& bindings,
                                          const std::vector<std::string>& wrt, double step,
                                          double tolerance, const BackwardOverride& override_rule = {}) {
  return check_gradient_fn([&](const Bindings& b) { return graph.evaluate(b).item(); },
                           [&](const Bindings& b) { return graph.gradient(b, wrt, override_rule); },
                           bindings, wrt, step, tolerance);
}

}  // namespace repo::diff
