#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

#include "se/grad/tensor.hpp"

namespace se::grad {

enum class OpKind {
  kLeaf,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kMatmul,
  kSum,
  kMean,
  kExp,
  kLog,
  kTanh,
  kRelu,
  kAffine,
  kSlice,
  kConcat,
  kScale,
};

std::string_view op_name(OpKind kind);

/// Per-op parameters. `axis` selects the reduction for kSum (-1: all,
/// 1: across columns giving one value per row); `begin`/`end` are the
/// column range for kSlice; `factor` is the multiplier for kScale.
struct OpAttrs {
  int axis = -1;
  std::size_t begin = 0;
  std::size_t end = 0;
  double factor = 1.0;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Tensor::Shape& shape() const { return value().shape(); }
};

/// Adjoints produced by Tape::backward, indexed by node id.
class Gradients {
 public:
  Gradients() = default;
  Gradients(std::vector<Tensor> adjoints, std::vector<bool> touched)
      : adjoints_(std::move(adjoints)), touched_(std::move(touched)) {}

  /// d(root)/d(v); zeros when v does not influence the root.
  const Tensor& wrt(Var v) const { return adjoints_.at(v.id); }
  const Tensor& operator[](std::size_t id) const { return adjoints_.at(id); }
  bool touched(std::size_t id) const { return touched_.at(id); }
  std::size_t size() const { return adjoints_.size(); }

 private:
  std::vector<Tensor> adjoints_;
  std::vector<bool> touched_;
};

/// Define-by-run recording of tensor operations with reverse-mode
/// differentiation. Nodes are appended in evaluation order, so the reverse
/// of insertion order is a valid reverse topological order.
///
/// Every op checks that its output is finite and throws NumericError
/// otherwise. A tape is single-threaded.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient.
  Var variable(Tensor value);
  /// Leaf that never receives a gradient.
  Var constant(Tensor value);

  Var record(OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs = {});
  Var record(OpKind kind, std::initializer_list<Var> inputs, const OpAttrs& attrs = {}) {
    return record(kind, std::span<const Var>(inputs.begin(), inputs.size()), attrs);
  }

  /// Reverse pass from a single-element root.
  Gradients backward(Var root) const;

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  OpKind kind(std::size_t id) const { return nodes_.at(id).kind; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    OpAttrs attrs;
    Tensor value;
    bool requires_grad;
  };

  Tensor evaluate(OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs) const;
  void propagate(const Node& node, const Tensor& adjoint, std::vector<Tensor>& adjoints,
                 std::vector<bool>& touched) const;

  std::vector<Node> nodes_;
};

// Op builders; each records onto the tape owning its first argument.
// Binary elementwise ops broadcast size-1 dimensions of rank <= 2 operands.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// Matrix product. A rank-1 right operand is a column, a rank-1 left
/// operand a row; the corresponding output dimension is dropped.
Var matmul(Var a, Var b);
Var sum(Var a);
/// Row-wise sum of a matrix: [R, C] -> [R, 1].
Var sum_rows(Var a);
Var mean(Var a);
Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var relu(Var a);
/// x W + b with x [R, I], W [I, O], b [O] or [1, O].
Var affine(Var x, Var w, Var b);
/// Columns [begin, end) of a matrix (elements of a vector).
Var slice(Var a, std::size_t begin, std::size_t end);
/// Column-wise concatenation of matrices with equal row counts.
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
Var scale(Var a, double factor);

}  // namespace se::grad
