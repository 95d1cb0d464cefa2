#pragma once
#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lekit/error.hpp"
#include "lekit/matrix.hpp"

namespace lekit {

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

enum class Op : std::uint8_t {
  Constant,
  Parameter,
  MatMul,
  Add,
  Sub,
  Mul,        // elementwise
  ScalarMul,  // by a fixed double
  Sigmoid,
  Softplus,
  Exp,
  Log,
  Square,
  SumAll,      // -> 1x1
  RowSoftmax,
  RowSum,      // n x c -> n x 1
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Parameter: return "parameter";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "subtract";
    case Op::Mul: return "multiply";
    case Op::ScalarMul: return "scalar_mul";
    case Op::Sigmoid: return "sigmoid";
    case Op::Softplus: return "softplus";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Square: return "square";
    case Op::SumAll: return "sum_all";
    case Op::RowSoftmax: return "row_softmax";
    case Op::RowSum: return "row_sum";
  }
  return "?";
}

/// Gradients for parameter leaves, keyed by node id. Shapes mirror the
/// parameters they differentiate.
struct GradientSet {
  std::unordered_map<NodeId, Matrix> grads;

  bool contains(NodeId id) const { return grads.count(id) != 0; }
  const Matrix& at(NodeId id) const { return grads.at(id); }
};

/// Record of one recorded primitive. Inputs always precede the node, so the
/// node list is topologically ordered by construction.
struct TapeNode {
  Op op;
  NodeId a = kNoNode;
  NodeId b = kNoNode;
  double scalar = 0.0;  // ScalarMul factor
  Matrix value;
  bool needs_grad = false;
};

/// Wengert list over whole matrices. Elementwise Add/Sub/Mul accept equal
/// shapes or a 1x1 operand broadcast against the other side. Every forward
/// output is checked finite; Log rejects non-positive inputs.
class Tape {
public:
  NodeId constant(Matrix v) { return push({Op::Constant, kNoNode, kNoNode, 0.0, std::move(v), false}); }

  NodeId parameter(Matrix v) { return push({Op::Parameter, kNoNode, kNoNode, 0.0, std::move(v), true}); }

  /// Records one primitive and returns the new node id.
  NodeId forward(Op op, NodeId a, NodeId b = kNoNode, double scalar = 0.0) {
    check_id(a);
    if (is_binary(op)) check_id(b);
    TapeNode n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.scalar = scalar;
    n.value = eval(op, value(a), is_binary(op) ? &value(b) : nullptr, scalar);
    n.needs_grad = nodes_[a].needs_grad || (is_binary(op) && nodes_[b].needs_grad);
    if (!n.value.all_finite())
      throw NumericError(op_name(op), "non-finite entry in output of shape " + n.value.shape_str());
    return push(std::move(n));
  }

  NodeId matmul(NodeId a, NodeId b) { return forward(Op::MatMul, a, b); }
  NodeId add(NodeId a, NodeId b) { return forward(Op::Add, a, b); }
  NodeId sub(NodeId a, NodeId b) { return forward(Op::Sub, a, b); }
  NodeId mul(NodeId a, NodeId b) { return forward(Op::Mul, a, b); }
  NodeId scalar_mul(NodeId a, double c) { return forward(Op::ScalarMul, a, kNoNode, c); }
  NodeId sigmoid(NodeId a) { return forward(Op::Sigmoid, a); }
  NodeId softplus(NodeId a) { return forward(Op::Softplus, a); }
  NodeId exp(NodeId a) { return forward(Op::Exp, a); }
  NodeId log(NodeId a) { return forward(Op::Log, a); }
  NodeId square(NodeId a) { return forward(Op::Square, a); }
  NodeId sum_all(NodeId a) { return forward(Op::SumAll, a); }
  NodeId row_softmax(NodeId a) { return forward(Op::RowSoftmax, a); }
  NodeId row_sum(NodeId a) { return forward(Op::RowSum, a); }

  const Matrix& value(NodeId id) const { return nodes_[check_id(id)].value; }
  const TapeNode& node(NodeId id) const { return nodes_[check_id(id)]; }
  std::size_t size() const { return nodes_.size(); }

  /// Re-evaluates one node from its stored inputs through the same kernels;
  /// bit-identical to the stored value by construction.
  Matrix recompute(NodeId id) const {
    const TapeNode& n = nodes_[check_id(id)];
    if (n.op == Op::Constant || n.op == Op::Parameter) return n.value;
    return eval(n.op, value(n.a), is_binary(n.op) ? &value(n.b) : nullptr, n.scalar);
  }

  /// Reverse-mode sweep from a scalar (1x1) node. Gradients accumulate
  /// additively across fan-out and are returned for parameter leaves only.
  GradientSet backward(NodeId loss) const {
    check_id(loss);
    if (!value(loss).is_scalar())
      throw ShapeError("backward", value(loss).shape_str(), "1x1");

    std::vector<Matrix> bar(static_cast<std::size_t>(loss) + 1);
    bar[loss] = Matrix::ones(1, 1);
    for (NodeId i = loss; i >= 0; --i) {
      const TapeNode& n = nodes_[i];
      if (bar[i].size() == 0 || !n.needs_grad) continue;
      const Matrix& g = bar[i];
      switch (n.op) {
        case Op::Constant:
        case Op::Parameter:
          break;
        case Op::MatMul:
          if (wants(n.a)) accumulate(bar, n.a, matmul_nt(g, value(n.b)));
          if (wants(n.b)) accumulate(bar, n.b, matmul_tn(value(n.a), g));
          break;
        case Op::Add:
          if (wants(n.a)) accumulate_bcast(bar, n.a, g, false);
          if (wants(n.b)) accumulate_bcast(bar, n.b, g, false);
          break;
        case Op::Sub:
          if (wants(n.a)) accumulate_bcast(bar, n.a, g, false);
          if (wants(n.b)) accumulate_bcast(bar, n.b, g, true);
          break;
        case Op::Mul: {
          const Matrix& av = value(n.a);
          const Matrix& bv = value(n.b);
          if (av.same_shape(bv)) {
            if (wants(n.a)) accumulate(bar, n.a, hadamard(g, bv));
            if (wants(n.b)) accumulate(bar, n.b, hadamard(g, av));
          } else if (bv.is_scalar()) {
            if (wants(n.a)) accumulate(bar, n.a, scale(g, bv(0, 0)));
            if (wants(n.b)) accumulate(bar, n.b, sum_all(hadamard(g, av)));
          } else {  // av is 1x1
            if (wants(n.a)) accumulate(bar, n.a, sum_all(hadamard(g, bv)));
            if (wants(n.b)) accumulate(bar, n.b, scale(g, av(0, 0)));
          }
          break;
        }
        case Op::ScalarMul:
          accumulate(bar, n.a, scale(g, n.scalar));
          break;
        case Op::Sigmoid: {
          const Matrix& s = n.value;
          Matrix d(s.rows, s.cols);
          for (std::size_t k = 0; k < s.size(); ++k)
            d.data[k] = g.data[k] * s.data[k] * (1.0 - s.data[k]);
          accumulate(bar, n.a, std::move(d));
          break;
        }
        case Op::Softplus: {
          const Matrix& x = value(n.a);
          Matrix d(x.rows, x.cols);
          for (std::size_t k = 0; k < x.size(); ++k)
            d.data[k] = g.data[k] * stable_sigmoid(x.data[k]);
          accumulate(bar, n.a, std::move(d));
          break;
        }
        case Op::Exp:
          accumulate(bar, n.a, hadamard(g, n.value));
          break;
        case Op::Log: {
          const Matrix& x = value(n.a);
          Matrix d(x.rows, x.cols);
          for (std::size_t k = 0; k < x.size(); ++k) d.data[k] = g.data[k] / x.data[k];
          accumulate(bar, n.a, std::move(d));
          break;
        }
        case Op::Square: {
          const Matrix& x = value(n.a);
          Matrix d(x.rows, x.cols);
          for (std::size_t k = 0; k < x.size(); ++k) d.data[k] = g.data[k] * 2.0 * x.data[k];
          accumulate(bar, n.a, std::move(d));
          break;
        }
        case Op::SumAll: {
          const Matrix& x = value(n.a);
          accumulate(bar, n.a, Matrix::full(x.rows, x.cols, g(0, 0)));
          break;
        }
        case Op::RowSoftmax: {
          const Matrix& s = n.value;
          Matrix d(s.rows, s.cols);
          for (std::size_t r = 0; r < s.rows; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < s.cols; ++c) dot += g(r, c) * s(r, c);
            for (std::size_t c = 0; c < s.cols; ++c) d(r, c) = s(r, c) * (g(r, c) - dot);
          }
          accumulate(bar, n.a, std::move(d));
          break;
        }
        case Op::RowSum: {
          const Matrix& x = value(n.a);
          Matrix d(x.rows, x.cols);
          for (std::size_t r = 0; r < x.rows; ++r)
            for (std::size_t c = 0; c < x.cols; ++c) d(r, c) = g(r, 0);
          accumulate(bar, n.a, std::move(d));
          break;
        }
      }
    }

    GradientSet out;
    for (NodeId i = 0; i <= loss; ++i)
      if (nodes_[i].op == Op::Parameter && bar[i].size() != 0) out.grads.emplace(i, std::move(bar[i]));
    return out;
  }

private:
  static bool is_binary(Op op) {
    return op == Op::MatMul || op == Op::Add || op == Op::Sub || op == Op::Mul;
  }

  bool wants(NodeId id) const { return nodes_[id].needs_grad; }

  NodeId check_id(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
      throw Error("tape: invalid node id " + std::to_string(id));
    return id;
  }

  NodeId push(TapeNode n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  static Matrix eval(Op op, const Matrix& a, const Matrix* b, double scalar) {
    switch (op) {
      case Op::MatMul: return matmul(a, *b);
      case Op::Add: return broadcast_zip(op, a, *b);
      case Op::Sub: return broadcast_zip(op, a, *b);
      case Op::Mul: return broadcast_zip(op, a, *b);
      case Op::ScalarMul: return scale(a, scalar);
      case Op::Sigmoid: return map_sigmoid(a);
      case Op::Softplus: return map_softplus(a);
      case Op::Exp: return map_exp(a);
      case Op::Log: return map_log(a);
      case Op::Square: return map_square(a);
      case Op::SumAll: return sum_all(a);
      case Op::RowSoftmax: return row_softmax(a);
      case Op::RowSum: return row_sum(a);
      case Op::Constant:
      case Op::Parameter: break;
    }
    throw Error("tape: eval on leaf op");
  }

  static Matrix broadcast_zip(Op op, const Matrix& a, const Matrix& b) {
    auto f = [op](double x, double y) {
      switch (op) {
        case Op::Add: return x + y;
        case Op::Sub: return x - y;
        default: return x * y;
      }
    };
    if (a.same_shape(b)) {
      Matrix c(a.rows, a.cols);
      for (std::size_t i = 0; i < a.size(); ++i) c.data[i] = f(a.data[i], b.data[i]);
      return c;
    }
    if (b.is_scalar()) {
      const double y = b(0, 0);
      Matrix c(a.rows, a.cols);
      for (std::size_t i = 0; i < a.size(); ++i) c.data[i] = f(a.data[i], y);
      return c;
    }
    if (a.is_scalar()) {
      const double x = a(0, 0);
      Matrix c(b.rows, b.cols);
      for (std::size_t i = 0; i < b.size(); ++i) c.data[i] = f(x, b.data[i]);
      return c;
    }
    throw ShapeError(op_name(op), a.shape_str(), b.shape_str());
  }

  /// bar[id] += g, resolving 1x1 broadcast back to a scalar node.
  void accumulate_bcast(std::vector<Matrix>& bar, NodeId id, const Matrix& g, bool negate) const {
    const Matrix& target = value(id);
    Matrix contrib;
    if (target.same_shape(g)) {
      contrib = negate ? scale(g, -1.0) : g;
    } else {  // target is 1x1, g is the broadcast result shape
      contrib = sum_all(g);
      if (negate) contrib(0, 0) = -contrib(0, 0);
    }
    accumulate(bar, id, std::move(contrib));
  }

  void accumulate(std::vector<Matrix>& bar, NodeId id, Matrix contrib) const {
    if (!nodes_[id].needs_grad) return;
    Matrix& slot = bar[id];
    if (slot.size() == 0) {
      slot = std::move(contrib);
      return;
    }
    for (std::size_t i = 0; i < slot.size(); ++i) slot.data[i] += contrib.data[i];
  }

  std::vector<TapeNode> nodes_;
};

}  // namespace lekit
