#pragma once

#include <Eigen/LU>
#include <random>

#include "se/flow/flow.hpp"

namespace se::testing {

// Adds N(0, scale^2) to every trainable tensor so zero-initialised layers
// stop being the identity.
inline void perturb(flow::Flow& model, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  for (auto& t : model.mutable_tensors()) {
    if (!t.trainable) continue;
    for (double& v : t.value.values()) v += normal(rng);
  }
}

// log|det dz/dx| from a central-difference Jacobian of the forward map.
inline double numeric_log_det(const flow::Flow& model, const std::vector<double>& x, double h = 1e-5) {
  const auto d = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd jac(d, d);
  std::vector<double> probe = x;
  for (Eigen::Index j = 0; j < d; ++j) {
    probe[j] = x[j] + h;
    const auto up = flow::forward(model, probe).z;
    probe[j] = x[j] - h;
    const auto down = flow::forward(model, probe).z;
    probe[j] = x[j];
    for (Eigen::Index i = 0; i < d; ++i) jac(i, j) = (up[i] - down[i]) / (2.0 * h);
  }
  return std::log(std::abs(jac.fullPivLu().determinant()));
}

inline Matrix random_batch(std::size_t rows, std::size_t cols, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

}  // namespace se::testing
