#include "dclm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dclm {

GradCheckResult check_gradients(ParameterSet& params,
                                const std::function<void()>& compute_grads,
                                const std::function<Scalar()>& loss_value,
                                Scalar eps) {
  params.drop_grads();
  compute_grads();

  GradCheckResult res;
  for (const auto& name : params.names()) {
    Tensor& p = params.get(name);
    for (int r = 0; r < p.value.rows(); ++r) {
      for (int c = 0; c < p.value.cols(); ++c) {
        const Scalar saved = p.value(r, c);
        p.value(r, c) = saved + eps;
        const Scalar up = loss_value();
        p.value(r, c) = saved - eps;
        const Scalar down = loss_value();
        p.value(r, c) = saved;

        const Scalar fd = (up - down) / (2 * eps);
        const Scalar an = p.has_grad() ? p.grad(r, c) : Scalar(0);
        const Scalar denom = std::max({std::abs(an), std::abs(fd), Scalar(0.01)});
        const Scalar rel = std::abs(an - fd) / denom;
        ++res.checked;
        if (rel > res.max_rel_err) {
          res.max_rel_err = rel;
          std::ostringstream os;
          os << name << "[" << r << "," << c << "]";
          res.worst = os.str();
        }
      }
    }
  }
  return res;
}

}  // namespace dclm
