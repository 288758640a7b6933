#ifndef DCLM_TAPE_HPP
#define DCLM_TAPE_HPP

#include "dclm/tensor.hpp"
#include "dclm/types.hpp"

#include <cstddef>
#include <unordered_map>
#include <vector>

namespace dclm {

enum class OpKind {
  Leaf,
  Constant,
  MatMul,
  Add,
  Mul,
  Concat,
  Sigmoid,
  Tanh,
  Mean,
  Slice,
  Lookup,
  Scale,
  SoftmaxXent,
};

const char* op_name(OpKind op);

// Handle into a Tape's node pool.
struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Per-thread gradient buffer keyed by parameter tensor. Lets several
// windows run backward concurrently and be reduced in a fixed order
// afterwards, independent of thread count.
class GradSink {
 public:
  void add(Tensor* t, const Matrix& g);
  // Adds a single-row contribution (gcol is the row as a column vector).
  void add_row(Tensor* t, int row, const Matrix& gcol);
  const Matrix* find(const Tensor* t) const;
  void clear();

 private:
  std::unordered_map<Tensor*, Matrix> buf_;
};

// Reverse-mode gradient tape. Forward values are computed eagerly as ops
// are recorded; backward() walks the recorded nodes in reverse and pushes
// leaf gradients into the bound tensors (or a GradSink).
class Tape {
 public:
  // Records a differentiable leaf aliased to t. Gradients flushed by
  // backward() accumulate into t.grad (or into the sink's buffer for t).
  Var leaf(Tensor& t);

  // Records a value that does not receive gradients.
  Var constant(const Matrix& m);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  // Stacks a on top of b. Column counts must match.
  Var concat(Var a, Var b);
  Var sigmoid(Var a);
  Var tanh(Var a);
  // Mean over all elements, yielding a 1x1 value.
  Var mean(Var a);
  // Rows [row0, row1) of a.
  Var slice(Var a, int row0, int row1);
  // Row `row` of a 2-d leaf, returned as a column vector.
  Var lookup(Var table, int row);
  Var scale(Var a, Scalar s);
  // logits: column vector of unnormalised scores; target: class index.
  // Yields the 1x1 negative log-likelihood of target under softmax(logits).
  Var softmax_cross_entropy(Var logits, int target);

  const Matrix& value(Var v) const;
  int rows(Var v) const { return static_cast<int>(value(v).rows()); }
  int cols(Var v) const { return static_cast<int>(value(v).cols()); }

  // Runs reverse accumulation from a 1x1 loss node. Leaf gradients are
  // added to each bound tensor's grad slot, or into sink when given.
  // The recorded nodes are cleared afterwards.
  void backward(Var loss);
  void backward(Var loss, GradSink& sink);

  // Discards recorded nodes but keeps their buffers for reuse.
  void reset();

  std::size_t size() const { return used_; }

 private:
  struct Node {
    OpKind op = OpKind::Leaf;
    int in0 = -1;
    int in1 = -1;
    int a0 = 0;
    int a1 = 0;
    Scalar s0 = 0;
    Matrix value;
    Matrix grad;
    Matrix aux;        // softmax probabilities
    Tensor* bound = nullptr;
    bool has_grad = false;
  };

  Node& fresh(OpKind op);
  Node& at(Var v);
  const Node& at(Var v) const;

  template <typename D>
  void accumulate(Node& n, const Eigen::MatrixBase<D>& g) {
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      n.grad += g;
    }
  }

  void run_backward(Var loss, GradSink* sink);

  std::vector<Node> nodes_;
  std::size_t used_ = 0;
};

}  // namespace dclm

#endif  // DCLM_TAPE_HPP
