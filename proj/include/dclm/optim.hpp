#ifndef DCLM_OPTIM_HPP
#define DCLM_OPTIM_HPP

#include "dclm/params.hpp"
#include "dclm/types.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>

namespace dclm {

struct AdamConfig {
  Scalar alpha = 0.001;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;
};

// Adam with bias correction. Moment buffers are keyed by parameter name
// and allocated on first use; a parameter with no gradient this step is
// treated as having a zero gradient.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(ParameterSet& params);
  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::unordered_map<std::string, std::pair<Matrix, Matrix>> moments_;
};

// Scales all gradients in place so their global L2 norm is at most
// max_norm. Returns the norm before clipping.
Scalar clip_gradients(ParameterSet& params, Scalar max_norm);

// Inverted-dropout mask: entries are 1/keep_prob with probability
// keep_prob and 0 otherwise, so expectations match the no-dropout path.
// keep_prob 1 yields all ones without consuming randomness.
Matrix dropout_mask(int rows, int cols, Scalar keep_prob, Rng& rng);

}  // namespace dclm

#endif  // DCLM_OPTIM_HPP
