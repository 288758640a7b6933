#ifndef DCLM_TENSOR_HPP
#define DCLM_TENSOR_HPP

#include "dclm/types.hpp"

#include <cstdint>
#include <numeric>
#include <vector>

namespace dclm {

// Dense real-valued array with an explicit shape (rank 1 or 2) and an
// optional gradient slot of the same shape. Rank-1 tensors are stored as
// n x 1 column vectors.
struct Tensor {
  std::vector<int> shape;
  Matrix value;
  Matrix grad;  // 0x0 until gradients are accumulated

  Tensor() = default;

  static Tensor zeros_vector(int n) {
    Tensor t;
    t.shape = {n};
    t.value = Matrix::Zero(n, 1);
    return t;
  }

  static Tensor zeros_matrix(int rows, int cols) {
    Tensor t;
    t.shape = {rows, cols};
    t.value = Matrix::Zero(rows, cols);
    return t;
  }

  static Tensor from_vector(Vector v) {
    Tensor t;
    t.shape = {static_cast<int>(v.size())};
    t.value = std::move(v);
    return t;
  }

  static Tensor from_matrix(Matrix m) {
    Tensor t;
    t.shape = {static_cast<int>(m.rows()), static_cast<int>(m.cols())};
    t.value = std::move(m);
    return t;
  }

  int rank() const { return static_cast<int>(shape.size()); }

  std::int64_t size() const {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }

  bool has_grad() const { return grad.size() > 0; }

  // Adds g into the gradient slot, allocating it on first use.
  void accumulate_grad(const Matrix& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }

  // Adds a contribution to one row only (gcol holds the row as a column).
  void accumulate_row_grad(int row, const Matrix& gcol) {
    if (grad.size() == 0) {
      grad = Matrix::Zero(value.rows(), value.cols());
    }
    grad.row(row) += gcol.transpose();
  }

  void zero_grad() {
    if (grad.size() > 0) grad.setZero();
  }

  void drop_grad() { grad.resize(0, 0); }
};

}  // namespace dclm

#endif  // DCLM_TENSOR_HPP
