#ifndef DCLM_GRADCHECK_HPP
#define DCLM_GRADCHECK_HPP

#include "dclm/params.hpp"
#include "dclm/types.hpp"

#include <cstdint>
#include <functional>
#include <string>

namespace dclm {

struct GradCheckResult {
  Scalar max_rel_err = 0;
  std::string worst;  // entry with the largest error, as name[r,c]
  std::int64_t checked = 0;

  bool ok(Scalar tol) const { return max_rel_err <= tol; }
};

// Compares analytic gradients against central finite differences.
//
// compute_grads must run forward and backward once, leaving gradients in
// each tensor's grad slot. loss_value must rerun the identical forward
// pass (including any internally seeded randomness) and return the loss.
// Every entry of every parameter is perturbed by +/-eps.
GradCheckResult check_gradients(ParameterSet& params,
                                const std::function<void()>& compute_grads,
                                const std::function<Scalar()>& loss_value,
                                Scalar eps = 1e-4);

}  // namespace dclm

#endif  // DCLM_GRADCHECK_HPP
