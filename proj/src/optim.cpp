#include "dclm/optim.hpp"

#include <cmath>

namespace dclm {

void Adam::step(ParameterSet& params) {
  ++t_;
  const Scalar bc1 = 1 - std::pow(cfg_.beta1, static_cast<Scalar>(t_));
  const Scalar bc2 = 1 - std::pow(cfg_.beta2, static_cast<Scalar>(t_));
  for (const auto& name : params.names()) {
    Tensor& p = params.get(name);
    auto it = moments_.find(name);
    if (it == moments_.end()) {
      it = moments_
               .emplace(name,
                        std::make_pair(
                            Matrix::Zero(p.value.rows(), p.value.cols()),
                            Matrix::Zero(p.value.rows(), p.value.cols())))
               .first;
    }
    Matrix& m = it->second.first;
    Matrix& v = it->second.second;
    if (p.has_grad()) {
      const Matrix& g = p.grad;
      m = cfg_.beta1 * m + (1 - cfg_.beta1) * g;
      v = cfg_.beta2 * v + (1 - cfg_.beta2) * g.cwiseProduct(g);
    } else {
      m *= cfg_.beta1;
      v *= cfg_.beta2;
    }
    p.value.array() -=
        cfg_.alpha * (m.array() / bc1) /
        ((v.array() / bc2).sqrt() + cfg_.eps);
  }
}

Scalar clip_gradients(ParameterSet& params, Scalar max_norm) {
  if (max_norm <= 0) {
    throw ConfigError("clip_gradients: max_norm must be positive");
  }
  Scalar sq = 0;
  for (const auto& name : params.names()) {
    const Tensor& p = params.get(name);
    if (p.has_grad()) sq += p.grad.squaredNorm();
  }
  const Scalar norm = std::sqrt(sq);
  if (norm > max_norm) {
    const Scalar s = max_norm / norm;
    for (const auto& name : params.names()) {
      Tensor& p = params.get(name);
      if (p.has_grad()) p.grad *= s;
    }
  }
  return norm;
}

Matrix dropout_mask(int rows, int cols, Scalar keep_prob, Rng& rng) {
  if (keep_prob <= 0 || keep_prob > 1) {
    throw ConfigError("dropout_mask: keep_prob must be in (0, 1]");
  }
  if (keep_prob == 1) return Matrix::Ones(rows, cols);
  Matrix m(rows, cols);
  const Scalar inv = 1 / keep_prob;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      m(r, c) = rng.uniform01() < keep_prob ? inv : Scalar(0);
    }
  }
  return m;
}

}  // namespace dclm
