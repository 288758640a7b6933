#ifndef DCLM_LSTM_HPP
#define DCLM_LSTM_HPP

#include "dclm/params.hpp"
#include "dclm/tape.hpp"
#include "dclm/types.hpp"

#include <string>

namespace dclm {

// On-tape recurrent state for one cell.
struct LstmVarState {
  Var h;
  Var c;
};

// Leaf handles for one cell's parameters on the current tape.
struct LstmVars {
  Var wx;
  Var wh;
  Var b;
  int hidden = 0;
};

// Fills a matrix with U(lo, hi) draws in row-major order.
Matrix uniform_init(int rows, int cols, Scalar lo, Scalar hi, Rng& rng);

// Adds <prefix>.wx [4H x in], <prefix>.wh [4H x H], <prefix>.b [4H] to
// params. Gate rows are packed input, forget, output, candidate; biases
// start at zero except the forget rows, which start at 1.
void init_lstm_params(ParameterSet& params, const std::string& prefix,
                      int in_dim, int hidden, Rng& rng);

// Records leaves for a cell's parameters.
LstmVars bind_lstm(Tape& tape, ParameterSet& params,
                   const std::string& prefix);

// Zero state as constants on the tape.
LstmVarState zero_state(Tape& tape, int hidden);

// One step: consumes input x and state (h, c), yields the next state.
LstmVarState lstm_step(Tape& tape, const LstmVars& cell, Var x,
                       const LstmVarState& state);

}  // namespace dclm

#endif  // DCLM_LSTM_HPP
