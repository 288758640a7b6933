#include "dclm/tape.hpp"

#include <cmath>
#include <sstream>

namespace dclm {

namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

[[noreturn]] void shape_fail(OpKind op, const Matrix& a, const Matrix& b,
                             const char* what) {
  std::ostringstream os;
  os << op_name(op) << ": " << what << " (" << shape_str(a) << " vs "
     << shape_str(b) << ")";
  throw ShapeError(os.str());
}

}  // namespace

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Constant: return "constant";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Mul: return "mul";
    case OpKind::Concat: return "concat";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Tanh: return "tanh";
    case OpKind::Mean: return "mean";
    case OpKind::Slice: return "slice";
    case OpKind::Lookup: return "lookup";
    case OpKind::Scale: return "scale";
    case OpKind::SoftmaxXent: return "softmax_cross_entropy";
  }
  return "?";
}

void GradSink::add(Tensor* t, const Matrix& g) {
  auto it = buf_.find(t);
  if (it == buf_.end()) {
    buf_.emplace(t, g);
  } else {
    it->second += g;
  }
}

void GradSink::add_row(Tensor* t, int row, const Matrix& gcol) {
  auto it = buf_.find(t);
  if (it == buf_.end()) {
    it = buf_.emplace(t, Matrix::Zero(t->value.rows(), t->value.cols())).first;
  }
  it->second.row(row) += gcol.transpose();
}

const Matrix* GradSink::find(const Tensor* t) const {
  auto it = buf_.find(const_cast<Tensor*>(t));
  return it == buf_.end() ? nullptr : &it->second;
}

void GradSink::clear() { buf_.clear(); }

Tape::Node& Tape::fresh(OpKind op) {
  if (used_ == nodes_.size()) {
    nodes_.emplace_back();
  }
  Node& n = nodes_[used_++];
  n.op = op;
  n.in0 = -1;
  n.in1 = -1;
  n.a0 = 0;
  n.a1 = 0;
  n.s0 = 0;
  n.bound = nullptr;
  n.has_grad = false;
  return n;
}

Tape::Node& Tape::at(Var v) {
  if (v.idx < 0 || static_cast<std::size_t>(v.idx) >= used_) {
    throw ShapeError("tape: handle does not refer to a live node");
  }
  return nodes_[v.idx];
}

const Tape::Node& Tape::at(Var v) const {
  if (v.idx < 0 || static_cast<std::size_t>(v.idx) >= used_) {
    throw ShapeError("tape: handle does not refer to a live node");
  }
  return nodes_[v.idx];
}

Var Tape::leaf(Tensor& t) {
  if (t.value.size() == 0) {
    throw ShapeError("leaf: tensor has no value");
  }
  Node& n = fresh(OpKind::Leaf);
  n.value = t.value;
  n.bound = &t;
  return Var{static_cast<int>(used_ - 1)};
}

Var Tape::constant(const Matrix& m) {
  if (m.size() == 0) {
    throw ShapeError("constant: value is empty");
  }
  Node& n = fresh(OpKind::Constant);
  n.value = m;
  return Var{static_cast<int>(used_ - 1)};
}

Var Tape::matmul(Var a, Var b) {
  const Matrix& va = at(a).value;
  const Matrix& vb = at(b).value;
  if (va.cols() != vb.rows()) {
    shape_fail(OpKind::MatMul, va, vb, "inner dimensions differ");
  }
  Node& n = fresh(OpKind::MatMul);
  n.in0 = a.idx;
  n.in1 = b.idx;
  n.value = at(a).value * at(b).value;
  return Var{static_cast<int>(used_ - 1)};
}

Var Tape::add(Var a, Var b) {
  if (at(a).value.rows() != at(b).value.rows() ||
      at(a).value.cols() != at(b).value.cols()) {
    shape_fail(OpKind::Add, at(a).value, at(b).value, "shapes differ");
  }
  // fresh() may grow the pool, so inputs are re-fetched through at().
  Node& n = fresh(OpKind::Add);
  n.in0 = a.idx;
  n.in1 = b.idx;
  n.value = at(a).value + at(b).value;
  return Var{static_cast<int>(used_ - 1)};
}

Var Tape::mul(Var a, Var b) {
  if (at(a).value.rows() != at(b).value.rows() ||
      at(a).value.cols() != at(b).value.cols()) {
    shape_fail(OpKind::Mul, at(a).value, at(b).value, "shapes differ");
  }
  Node& n = fresh(OpKind::Mul);
  n.in0 = a.idx;
  n.in1 = b.idx;
  n.value = at(a).value.cwiseProduct(at(b).value);
  return Var{static_cast<int>(used_ - 1)};
}

Var Tape::concat(Var a, Var b) {
  if (at(a).value.cols() != at(b).value.cols()) {
    shape_fail(OpKind::Concat, at(a).value, at(b).value,
               "column counts differ");
  }
  Node& n = fresh(OpKind::Concat);
  n.in0 = a.idx;
  n.in1 = b.idx;
  const Matrix& va = at(a).value;
  const Matrix& vb = at(b).value;
  n.value.resize(va.rows() + vb.rows(), va.cols());
  n.value.topRows(va.rows()) = va;
  n.value.bottomRows(vb.rows()) = vb;
  return Var{static_cast<int>(used_ - 1)};
}

Var Tape::sigmoid(Var a) {
  Node& n = fresh(OpKind::Sigmoid);
  n.in0 = a.idx;
  const Matrix& va = at(a).value;
  n.value = va.unaryExpr([](Scalar x) { return Scalar(1) / (Scalar(1) + std::exp(-x)); });
  return Var{static_cast<int>(used_ - 1)};
}

Var Tape::tanh(Var a) {
  Node& n = fresh(OpKind::Tanh);
  n.in0 = a.idx;
  n.value = at(a).value.array().tanh().matrix();
  return Var{static_cast<int>(used_ - 1)};
}

Var Tape::mean(Var a) {
  Node& n = fresh(OpKind::Mean);
  n.in0 = a.idx;
  n.value.resize(1, 1);
  n.value(0, 0) = at(a).value.mean();
  return Var{static_cast<int>(used_ - 1)};
}

Var Tape::slice(Var a, int row0, int row1) {
  if (row0 < 0 || row1 > at(a).value.rows() || row0 >= row1) {
    std::ostringstream os;
    os << "slice: rows [" << row0 << ", " << row1 << ") out of range for "
       << shape_str(at(a).value);
    throw ShapeError(os.str());
  }
  Node& n = fresh(OpKind::Slice);
  n.in0 = a.idx;
  n.a0 = row0;
  n.a1 = row1;
  n.value = at(a).value.middleRows(row0, row1 - row0);
  return Var{static_cast<int>(used_ - 1)};
}

Var Tape::lookup(Var table, int row) {
  if (row < 0 || row >= at(table).value.rows()) {
    std::ostringstream os;
    os << "lookup: row " << row << " out of range for "
       << shape_str(at(table).value);
    throw ShapeError(os.str());
  }
  Node& n = fresh(OpKind::Lookup);
  n.in0 = table.idx;
  n.a0 = row;
  n.value = at(table).value.row(row).transpose();
  return Var{static_cast<int>(used_ - 1)};
}

Var Tape::scale(Var a, Scalar s) {
  Node& n = fresh(OpKind::Scale);
  n.in0 = a.idx;
  n.s0 = s;
  n.value = at(a).value * s;
  return Var{static_cast<int>(used_ - 1)};
}

Var Tape::softmax_cross_entropy(Var logits, int target) {
  if (at(logits).value.cols() != 1) {
    std::ostringstream os;
    os << "softmax_cross_entropy: logits must be a column vector, got "
       << shape_str(at(logits).value);
    throw ShapeError(os.str());
  }
  if (target < 0 || target >= at(logits).value.rows()) {
    std::ostringstream os;
    os << "softmax_cross_entropy: target " << target << " out of range for "
       << shape_str(at(logits).value);
    throw ShapeError(os.str());
  }
  Node& n = fresh(OpKind::SoftmaxXent);
  n.in0 = logits.idx;
  n.a0 = target;
  const Matrix& z = at(logits).value;
  const Scalar zmax = z.maxCoeff();
  Matrix ex = (z.array() - zmax).exp();
  const Scalar denom = ex.sum();
  n.aux = ex / denom;
  n.value.resize(1, 1);
  n.value(0, 0) = std::log(denom) + zmax - z(target, 0);
  return Var{static_cast<int>(used_ - 1)};
}

const Matrix& Tape::value(Var v) const { return at(v).value; }

void Tape::backward(Var loss) { run_backward(loss, nullptr); }

void Tape::backward(Var loss, GradSink& sink) { run_backward(loss, &sink); }

void Tape::run_backward(Var loss, GradSink* sink) {
  Node& top = at(loss);
  if (top.value.rows() != 1 || top.value.cols() != 1) {
    std::ostringstream os;
    os << "backward: loss must be 1x1, got " << shape_str(top.value);
    throw ShapeError(os.str());
  }
  accumulate(top, Matrix::Ones(1, 1));

  for (std::size_t k = used_; k-- > 0;) {
    Node& n = nodes_[k];
    if (!n.has_grad) continue;
    const Matrix& g = n.grad;
    switch (n.op) {
      case OpKind::Leaf:
        if (sink) {
          sink->add(n.bound, g);
        } else {
          n.bound->accumulate_grad(g);
        }
        break;
      case OpKind::Constant:
        break;
      case OpKind::MatMul: {
        Node& a = nodes_[n.in0];
        Node& b = nodes_[n.in1];
        accumulate(a, g * b.value.transpose());
        accumulate(b, a.value.transpose() * g);
        break;
      }
      case OpKind::Add:
        accumulate(nodes_[n.in0], g);
        accumulate(nodes_[n.in1], g);
        break;
      case OpKind::Mul:
        accumulate(nodes_[n.in0], g.cwiseProduct(nodes_[n.in1].value));
        accumulate(nodes_[n.in1], g.cwiseProduct(nodes_[n.in0].value));
        break;
      case OpKind::Concat: {
        Node& a = nodes_[n.in0];
        Node& b = nodes_[n.in1];
        accumulate(a, g.topRows(a.value.rows()));
        accumulate(b, g.bottomRows(b.value.rows()));
        break;
      }
      case OpKind::Sigmoid:
        accumulate(nodes_[n.in0],
                   g.cwiseProduct(n.value.cwiseProduct(
                       (Matrix::Ones(n.value.rows(), n.value.cols()) - n.value))));
        break;
      case OpKind::Tanh:
        accumulate(nodes_[n.in0],
                   (g.array() * (1 - n.value.array().square())).matrix());
        break;
      case OpKind::Mean: {
        Node& a = nodes_[n.in0];
        const Scalar w = g(0, 0) / static_cast<Scalar>(a.value.size());
        accumulate(a, Matrix::Constant(a.value.rows(), a.value.cols(), w));
        break;
      }
      case OpKind::Slice: {
        Node& a = nodes_[n.in0];
        Matrix ga = Matrix::Zero(a.value.rows(), a.value.cols());
        ga.middleRows(n.a0, n.a1 - n.a0) = g;
        accumulate(a, ga);
        break;
      }
      case OpKind::Lookup: {
        Node& a = nodes_[n.in0];
        if (a.op == OpKind::Leaf) {
          // Scatter straight into the bound tensor so a table lookup never
          // materialises a dense table-sized gradient.
          if (sink) {
            sink->add_row(a.bound, n.a0, g);
          } else {
            a.bound->accumulate_row_grad(n.a0, g);
          }
        } else {
          Matrix ga = Matrix::Zero(a.value.rows(), a.value.cols());
          ga.row(n.a0) = g.transpose();
          accumulate(a, ga);
        }
        break;
      }
      case OpKind::Scale:
        accumulate(nodes_[n.in0], g * n.s0);
        break;
      case OpKind::SoftmaxXent: {
        Matrix gz = n.aux * g(0, 0);
        gz(n.a0, 0) -= g(0, 0);
        accumulate(nodes_[n.in0], gz);
        break;
      }
    }
  }
  reset();
}

void Tape::reset() { used_ = 0; }

}  // namespace dclm
