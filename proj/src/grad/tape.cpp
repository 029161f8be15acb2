#include "se/grad/tape.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "se/errors.hpp"

namespace se::grad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct MatrixView {
  std::size_t rows;
  std::size_t cols;
};

MatrixView view_of(const Tensor& t) {
  if (t.rank() > 2) throw DimensionError("operand of rank " + std::to_string(t.rank()) + " not supported");
  return {t.rows(), t.cols()};
}

// Shape of a broadcast binary op, or DimensionError.
Tensor::Shape broadcast_shape(const Tensor& a, const Tensor& b, OpKind kind) {
  if (a.same_shape(b)) return a.shape();
  const MatrixView va = view_of(a);
  const MatrixView vb = view_of(b);
  const std::size_t rows = std::max(va.rows, vb.rows);
  const std::size_t cols = std::max(va.cols, vb.cols);
  const bool ok = (va.rows == rows || va.rows == 1) && (vb.rows == rows || vb.rows == 1) &&
                  (va.cols == cols || va.cols == 1) && (vb.cols == cols || vb.cols == 1);
  if (!ok) {
    throw DimensionError(std::string(op_name(kind)) + ": cannot broadcast " + shape_string(a.shape()) +
                         " with " + shape_string(b.shape()));
  }
  if (va.rows == rows && va.cols == cols) return a.shape();
  if (vb.rows == rows && vb.cols == cols) return b.shape();
  return {rows, cols};
}

inline std::size_t broadcast_index(const MatrixView& v, std::size_t r, std::size_t c) {
  return (v.rows == 1 ? 0 : r) * v.cols + (v.cols == 1 ? 0 : c);
}

template <typename Fn>
Tensor elementwise_binary(const Tensor& a, const Tensor& b, OpKind kind, Fn fn) {
  Tensor out(broadcast_shape(a, b, kind));
  if (a.same_shape(b)) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(a[i], b[i]);
    return out;
  }
  const MatrixView vo = view_of(out);
  const MatrixView va = view_of(a);
  const MatrixView vb = view_of(b);
  for (std::size_t r = 0; r < vo.rows; ++r) {
    for (std::size_t c = 0; c < vo.cols; ++c) {
      out[r * vo.cols + c] = fn(a[broadcast_index(va, r, c)], b[broadcast_index(vb, r, c)]);
    }
  }
  return out;
}

// Sums an output-shaped adjoint down to the (possibly broadcast) input shape.
Tensor reduce_to(const Tensor& adjoint, const Tensor& input, const std::vector<double>* weights = nullptr) {
  Tensor out(input.shape());
  if (adjoint.same_shape(input)) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = adjoint[i] * (weights ? (*weights)[i] : 1.0);
    return out;
  }
  const MatrixView vo = view_of(adjoint);
  const MatrixView vi = view_of(input);
  for (std::size_t r = 0; r < vo.rows; ++r) {
    for (std::size_t c = 0; c < vo.cols; ++c) {
      const std::size_t k = r * vo.cols + c;
      out[broadcast_index(vi, r, c)] += adjoint[k] * (weights ? (*weights)[k] : 1.0);
    }
  }
  return out;
}

// Matrix dimensions of a matmul operand: rank-1 lhs is a row, rank-1 rhs a column.
MatrixView matmul_lhs(const Tensor& a) {
  if (a.rank() == 0) throw DimensionError("matmul: scalar operand");
  return view_of(a);
}

MatrixView matmul_rhs(const Tensor& b) {
  if (b.rank() == 0) throw DimensionError("matmul: scalar operand");
  if (b.rank() == 1) return {b.shape()[0], 1};
  return view_of(b);
}

void accumulate(std::vector<Tensor>& adjoints, std::vector<bool>& touched, std::size_t id, Tensor delta) {
  if (!touched[id]) {
    adjoints[id] = std::move(delta);
    touched[id] = true;
    return;
  }
  Tensor& target = adjoints[id];
  for (std::size_t i = 0; i < target.size(); ++i) target[i] += delta[i];
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kConstant: return "constant";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kTanh: return "tanh";
    case OpKind::kRelu: return "relu";
    case OpKind::kAffine: return "affine";
    case OpKind::kSlice: return "slice";
    case OpKind::kConcat: return "concat";
    case OpKind::kScale: return "scale";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (tape == nullptr) throw ContractError("unbound variable");
  return tape->value(id);
}

Var Tape::variable(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite leaf value");
  nodes_.push_back(Node{OpKind::kLeaf, {}, {}, std::move(value), true});
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite constant value");
  nodes_.push_back(Node{OpKind::kConstant, {}, {}, std::move(value), false});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs) {
  if (kind == OpKind::kLeaf || kind == OpKind::kConstant) {
    throw ContractError("leaves are created with variable() or constant()");
  }
  std::vector<std::size_t> ids;
  ids.reserve(inputs.size());
  bool requires_grad = false;
  for (const Var& v : inputs) {
    if (v.tape != this) throw ContractError(std::string(op_name(kind)) + ": operand from another tape");
    ids.push_back(v.id);
    requires_grad = requires_grad || nodes_[v.id].requires_grad;
  }
  Tensor value = evaluate(kind, inputs, attrs);
  if (!value.all_finite()) {
    throw NumericError(std::string(op_name(kind)) + " produced a non-finite value");
  }
  nodes_.push_back(Node{kind, std::move(ids), attrs, std::move(value), requires_grad});
  return Var{this, nodes_.size() - 1};
}

Tensor Tape::evaluate(OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs) const {
  auto expect_arity = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw ContractError(std::string(op_name(kind)) + " expects " + std::to_string(n) + " operands");
    }
  };
  auto in = [&](std::size_t i) -> const Tensor& { return nodes_[inputs[i].id].value; };

  switch (kind) {
    case OpKind::kAdd:
      expect_arity(2);
      return elementwise_binary(in(0), in(1), kind, [](double x, double y) { return x + y; });
    case OpKind::kSub:
      expect_arity(2);
      return elementwise_binary(in(0), in(1), kind, [](double x, double y) { return x - y; });
    case OpKind::kMul:
      expect_arity(2);
      return elementwise_binary(in(0), in(1), kind, [](double x, double y) { return x * y; });
    case OpKind::kMatmul: {
      expect_arity(2);
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const MatrixView va = matmul_lhs(a);
      const MatrixView vb = matmul_rhs(b);
      if (va.cols != vb.rows) {
        throw DimensionError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
      }
      Tensor::Shape shape;
      if (a.rank() == 2) shape.push_back(va.rows);
      if (b.rank() == 2) shape.push_back(vb.cols);
      Tensor out(shape);
      MatrixMap(out.data(), va.rows, vb.cols).noalias() =
          ConstMatrixMap(a.data(), va.rows, va.cols) * ConstMatrixMap(b.data(), vb.rows, vb.cols);
      return out;
    }
    case OpKind::kSum: {
      expect_arity(1);
      const Tensor& a = in(0);
      if (attrs.axis == 1) {
        const MatrixView v = view_of(a);
        Tensor out({v.rows, 1});
        for (std::size_t r = 0; r < v.rows; ++r) {
          double acc = 0.0;
          for (std::size_t c = 0; c < v.cols; ++c) acc += a[r * v.cols + c];
          out[r] = acc;
        }
        return out;
      }
      if (attrs.axis != -1) throw ContractError("sum: unsupported axis " + std::to_string(attrs.axis));
      double acc = 0.0;
      for (double x : a.values()) acc += x;
      return Tensor::scalar(acc);
    }
    case OpKind::kMean: {
      expect_arity(1);
      const Tensor& a = in(0);
      double acc = 0.0;
      for (double x : a.values()) acc += x;
      return Tensor::scalar(acc / static_cast<double>(a.size()));
    }
    case OpKind::kExp:
    case OpKind::kLog:
    case OpKind::kTanh:
    case OpKind::kRelu:
    case OpKind::kScale: {
      expect_arity(1);
      Tensor out = in(0);
      Eigen::Map<Eigen::ArrayXd> x(out.data(), static_cast<Eigen::Index>(out.size()));
      switch (kind) {
        case OpKind::kExp: x = x.exp(); break;
        case OpKind::kLog: x = x.log(); break;
        case OpKind::kTanh: x = x.tanh(); break;
        case OpKind::kRelu: x = x.max(0.0); break;
        default: x *= attrs.factor; break;
      }
      return out;
    }
    case OpKind::kAffine: {
      expect_arity(3);
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const Tensor& b = in(2);
      const MatrixView vx = view_of(x);
      const MatrixView vw = view_of(w);
      if (w.rank() != 2 || vx.cols != vw.rows || b.size() != vw.cols || view_of(b).rows != 1) {
        throw DimensionError("affine: x " + shape_string(x.shape()) + ", W " + shape_string(w.shape()) +
                             ", b " + shape_string(b.shape()));
      }
      Tensor out({vx.rows, vw.cols});
      MatrixMap o(out.data(), vx.rows, vw.cols);
      o.noalias() = ConstMatrixMap(x.data(), vx.rows, vx.cols) * ConstMatrixMap(w.data(), vw.rows, vw.cols);
      o.rowwise() += ConstMatrixMap(b.data(), 1, vw.cols).row(0);
      return out;
    }
    case OpKind::kSlice: {
      expect_arity(1);
      const Tensor& a = in(0);
      const MatrixView v = view_of(a);
      if (attrs.begin >= attrs.end || attrs.end > v.cols) {
        throw DimensionError("slice [" + std::to_string(attrs.begin) + ", " + std::to_string(attrs.end) +
                             ") of " + shape_string(a.shape()));
      }
      const std::size_t width = attrs.end - attrs.begin;
      Tensor out(a.rank() == 2 ? Tensor::Shape{v.rows, width} : Tensor::Shape{width});
      for (std::size_t r = 0; r < v.rows; ++r) {
        for (std::size_t c = 0; c < width; ++c) out[r * width + c] = a[r * v.cols + attrs.begin + c];
      }
      return out;
    }
    case OpKind::kConcat: {
      if (inputs.empty()) throw ContractError("concat of nothing");
      const std::size_t rows = view_of(in(0)).rows;
      bool all_vectors = true;
      std::size_t total = 0;
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        const MatrixView v = view_of(in(i));
        if (v.rows != rows) throw DimensionError("concat: row counts differ");
        all_vectors = all_vectors && in(i).rank() == 1;
        total += v.cols;
      }
      Tensor out(all_vectors ? Tensor::Shape{total} : Tensor::Shape{rows, total});
      std::size_t offset = 0;
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Tensor& part = in(i);
        const std::size_t width = view_of(part).cols;
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < width; ++c) out[r * total + offset + c] = part[r * width + c];
        }
        offset += width;
      }
      return out;
    }
    case OpKind::kLeaf:
    case OpKind::kConstant:
      break;
  }
  throw ContractError("unsupported op");
}

Gradients Tape::backward(Var root) const {
  if (root.tape != this) throw ContractError("backward: root from another tape");
  const Tensor& root_value = nodes_.at(root.id).value;
  if (root_value.size() != 1) {
    throw ContractError("backward: root must be scalar, got shape " + shape_string(root_value.shape()));
  }
  std::vector<Tensor> adjoints(nodes_.size());
  std::vector<bool> touched(nodes_.size(), false);
  adjoints[root.id] = Tensor(root_value.shape(), 1.0);
  touched[root.id] = true;

  for (std::size_t i = root.id + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!touched[i] || !node.requires_grad) continue;
    if (node.kind == OpKind::kLeaf || node.kind == OpKind::kConstant) continue;
    propagate(node, adjoints[i], adjoints, touched);
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!touched[i]) adjoints[i] = Tensor(nodes_[i].value.shape());
  }
  return Gradients(std::move(adjoints), std::move(touched));
}

void Tape::propagate(const Node& node, const Tensor& adjoint, std::vector<Tensor>& adjoints,
                     std::vector<bool>& touched) const {
  auto wants = [&](std::size_t k) { return nodes_[node.inputs[k]].requires_grad; };
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[node.inputs[k]].value; };
  auto send = [&](std::size_t k, Tensor delta) { accumulate(adjoints, touched, node.inputs[k], std::move(delta)); };

  switch (node.kind) {
    case OpKind::kAdd:
      if (wants(0)) send(0, reduce_to(adjoint, in(0)));
      if (wants(1)) send(1, reduce_to(adjoint, in(1)));
      break;
    case OpKind::kSub:
      if (wants(0)) send(0, reduce_to(adjoint, in(0)));
      if (wants(1)) {
        Tensor d = reduce_to(adjoint, in(1));
        for (double& x : d.values()) x = -x;
        send(1, std::move(d));
      }
      break;
    case OpKind::kMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const MatrixView vo = view_of(adjoint);
      // Other operand expanded to the output shape, used as per-element weights.
      auto expanded = [&](const Tensor& t) {
        std::vector<double> w(adjoint.size());
        if (t.same_shape(adjoint)) {
          w.assign(t.values().begin(), t.values().end());
          return w;
        }
        const MatrixView vt = view_of(t);
        for (std::size_t r = 0; r < vo.rows; ++r) {
          for (std::size_t c = 0; c < vo.cols; ++c) w[r * vo.cols + c] = t[broadcast_index(vt, r, c)];
        }
        return w;
      };
      if (wants(0)) {
        const auto w = expanded(b);
        send(0, reduce_to(adjoint, a, &w));
      }
      if (wants(1)) {
        const auto w = expanded(a);
        send(1, reduce_to(adjoint, b, &w));
      }
      break;
    }
    case OpKind::kMatmul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const MatrixView va = matmul_lhs(a);
      const MatrixView vb = matmul_rhs(b);
      ConstMatrixMap g(adjoint.data(), va.rows, vb.cols);
      if (wants(0)) {
        Tensor d(a.shape());
        MatrixMap(d.data(), va.rows, va.cols).noalias() =
            g * ConstMatrixMap(b.data(), vb.rows, vb.cols).transpose();
        send(0, std::move(d));
      }
      if (wants(1)) {
        Tensor d(b.shape());
        MatrixMap(d.data(), vb.rows, vb.cols).noalias() =
            ConstMatrixMap(a.data(), va.rows, va.cols).transpose() * g;
        send(1, std::move(d));
      }
      break;
    }
    case OpKind::kSum: {
      const Tensor& a = in(0);
      Tensor d(a.shape());
      if (node.attrs.axis == 1) {
        const MatrixView v = view_of(a);
        for (std::size_t r = 0; r < v.rows; ++r) {
          for (std::size_t c = 0; c < v.cols; ++c) d[r * v.cols + c] = adjoint[r];
        }
      } else {
        for (double& x : d.values()) x = adjoint[0];
      }
      send(0, std::move(d));
      break;
    }
    case OpKind::kMean: {
      const Tensor& a = in(0);
      send(0, Tensor(a.shape(), adjoint[0] / static_cast<double>(a.size())));
      break;
    }
    case OpKind::kExp:
    case OpKind::kLog:
    case OpKind::kTanh:
    case OpKind::kRelu:
    case OpKind::kScale: {
      const Tensor& a = in(0);
      const Tensor& out = node.value;
      Tensor d(a.shape());
      for (std::size_t i = 0; i < d.size(); ++i) {
        double local = 0.0;
        switch (node.kind) {
          case OpKind::kExp: local = out[i]; break;
          case OpKind::kLog: local = 1.0 / a[i]; break;
          case OpKind::kTanh: local = 1.0 - out[i] * out[i]; break;
          case OpKind::kRelu: local = a[i] > 0.0 ? 1.0 : 0.0; break;
          default: local = node.attrs.factor; break;
        }
        d[i] = adjoint[i] * local;
      }
      send(0, std::move(d));
      break;
    }
    case OpKind::kAffine: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const MatrixView vx = view_of(x);
      const MatrixView vw = view_of(w);
      ConstMatrixMap g(adjoint.data(), vx.rows, vw.cols);
      if (wants(0)) {
        Tensor d(x.shape());
        MatrixMap(d.data(), vx.rows, vx.cols).noalias() =
            g * ConstMatrixMap(w.data(), vw.rows, vw.cols).transpose();
        send(0, std::move(d));
      }
      if (wants(1)) {
        Tensor d(w.shape());
        MatrixMap(d.data(), vw.rows, vw.cols).noalias() =
            ConstMatrixMap(x.data(), vx.rows, vx.cols).transpose() * g;
        send(1, std::move(d));
      }
      if (wants(2)) {
        Tensor d(in(2).shape());
        MatrixMap(d.data(), 1, vw.cols).noalias() = g.colwise().sum();
        send(2, std::move(d));
      }
      break;
    }
    case OpKind::kSlice: {
      const Tensor& a = in(0);
      const MatrixView v = view_of(a);
      const std::size_t width = node.attrs.end - node.attrs.begin;
      Tensor d(a.shape());
      for (std::size_t r = 0; r < v.rows; ++r) {
        for (std::size_t c = 0; c < width; ++c) d[r * v.cols + node.attrs.begin + c] = adjoint[r * width + c];
      }
      send(0, std::move(d));
      break;
    }
    case OpKind::kConcat: {
      const MatrixView vo = view_of(adjoint);
      std::size_t offset = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const Tensor& part = in(k);
        const std::size_t width = view_of(part).cols;
        if (wants(k)) {
          Tensor d(part.shape());
          for (std::size_t r = 0; r < vo.rows; ++r) {
            for (std::size_t c = 0; c < width; ++c) d[r * width + c] = adjoint[r * vo.cols + offset + c];
          }
          send(k, std::move(d));
        }
        offset += width;
      }
      break;
    }
    case OpKind::kLeaf:
    case OpKind::kConstant:
      break;
  }
}

namespace {

Tape& owner(Var a, std::string_view op) {
  if (a.tape == nullptr) throw ContractError(std::string(op) + ": unbound variable");
  return *a.tape;
}

}  // namespace

Var add(Var a, Var b) { return owner(a, "add").record(OpKind::kAdd, {a, b}); }
Var sub(Var a, Var b) { return owner(a, "sub").record(OpKind::kSub, {a, b}); }
Var mul(Var a, Var b) { return owner(a, "mul").record(OpKind::kMul, {a, b}); }
Var matmul(Var a, Var b) { return owner(a, "matmul").record(OpKind::kMatmul, {a, b}); }
Var sum(Var a) { return owner(a, "sum").record(OpKind::kSum, {a}); }

Var sum_rows(Var a) {
  OpAttrs attrs;
  attrs.axis = 1;
  return owner(a, "sum").record(OpKind::kSum, {a}, attrs);
}

Var mean(Var a) { return owner(a, "mean").record(OpKind::kMean, {a}); }
Var exp(Var a) { return owner(a, "exp").record(OpKind::kExp, {a}); }
Var log(Var a) { return owner(a, "log").record(OpKind::kLog, {a}); }
Var tanh(Var a) { return owner(a, "tanh").record(OpKind::kTanh, {a}); }
Var relu(Var a) { return owner(a, "relu").record(OpKind::kRelu, {a}); }
Var affine(Var x, Var w, Var b) { return owner(x, "affine").record(OpKind::kAffine, {x, w, b}); }

Var slice(Var a, std::size_t begin, std::size_t end) {
  OpAttrs attrs;
  attrs.begin = begin;
  attrs.end = end;
  return owner(a, "slice").record(OpKind::kSlice, {a}, attrs);
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat of nothing");
  return owner(parts[0], "concat").record(OpKind::kConcat, parts);
}

Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var scale(Var a, double factor) {
  OpAttrs attrs;
  attrs.factor = factor;
  return owner(a, "scale").record(OpKind::kScale, {a}, attrs);
}

}  // namespace se::grad
