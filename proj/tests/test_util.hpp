#ifndef DCLM_TESTS_TEST_UTIL_HPP
#define DCLM_TESTS_TEST_UTIL_HPP

#include "dclm/gradcheck.hpp"
#include "dclm/tape.hpp"

#include <doctest.h>

#include <functional>

namespace dclm::testing {

inline Tensor random_tensor(int rows, int cols, Rng& rng) {
  Tensor t =
      cols == 1 ? Tensor::zeros_vector(rows) : Tensor::zeros_matrix(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      t.value(r, c) = rng.uniform(-1.5, 1.5);
    }
  }
  return t;
}

// Finite-difference oracle for a graph builder returning the loss node.
// The builder is re-invoked for every perturbed evaluation.
inline void fd_check(ParameterSet& params,
                     const std::function<Var(Tape&, ParameterSet&)>& build,
                     Scalar tol = 1e-4) {
  Tape tape;
  auto compute = [&] {
    Var loss = build(tape, params);
    tape.backward(loss);
  };
  auto value = [&]() -> Scalar {
    Var loss = build(tape, params);
    Scalar v = tape.value(loss)(0, 0);
    tape.reset();
    return v;
  };
  GradCheckResult res = check_gradients(params, compute, value);
  CAPTURE(res.worst);
  CHECK(res.max_rel_err <= tol);
  CHECK(res.checked > 0);
}

}  // namespace dclm::testing

#endif  // DCLM_TESTS_TEST_UTIL_HPP
