#include "dclm/lstm.hpp"

namespace dclm {

Matrix uniform_init(int rows, int cols, Scalar lo, Scalar hi, Rng& rng) {
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      m(r, c) = rng.uniform(lo, hi);
    }
  }
  return m;
}

void init_lstm_params(ParameterSet& params, const std::string& prefix,
                      int in_dim, int hidden, Rng& rng) {
  const Scalar w = 0.08;
  params.add(prefix + ".wx",
             Tensor::from_matrix(uniform_init(4 * hidden, in_dim, -w, w, rng)));
  params.add(prefix + ".wh",
             Tensor::from_matrix(uniform_init(4 * hidden, hidden, -w, w, rng)));
  Tensor b = Tensor::zeros_vector(4 * hidden);
  b.value.block(hidden, 0, hidden, 1).setOnes();
  params.add(prefix + ".b", std::move(b));
}

LstmVars bind_lstm(Tape& tape, ParameterSet& params,
                   const std::string& prefix) {
  LstmVars cell;
  cell.wx = tape.leaf(params.get(prefix + ".wx"));
  cell.wh = tape.leaf(params.get(prefix + ".wh"));
  cell.b = tape.leaf(params.get(prefix + ".b"));
  const int rows4h = tape.rows(cell.b);
  if (rows4h % 4 != 0) {
    throw ShapeError("lstm: bias length of " + prefix +
                     " is not divisible by 4");
  }
  cell.hidden = rows4h / 4;
  return cell;
}

LstmVarState zero_state(Tape& tape, int hidden) {
  LstmVarState s;
  s.h = tape.constant(Matrix::Zero(hidden, 1));
  s.c = tape.constant(Matrix::Zero(hidden, 1));
  return s;
}

LstmVarState lstm_step(Tape& tape, const LstmVars& cell, Var x,
                       const LstmVarState& state) {
  const int h = cell.hidden;
  Var pre = tape.add(tape.add(tape.matmul(cell.wx, x),
                              tape.matmul(cell.wh, state.h)),
                     cell.b);
  Var gi = tape.sigmoid(tape.slice(pre, 0, h));
  Var gf = tape.sigmoid(tape.slice(pre, h, 2 * h));
  Var go = tape.sigmoid(tape.slice(pre, 2 * h, 3 * h));
  Var gc = tape.tanh(tape.slice(pre, 3 * h, 4 * h));
  LstmVarState next;
  next.c = tape.add(tape.mul(gf, state.c), tape.mul(gi, gc));
  next.h = tape.mul(go, tape.tanh(next.c));
  return next;
}

}  // namespace dclm
