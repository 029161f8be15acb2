#pragma once

#include <Eigen/Core>

#include "se/grad/tensor.hpp"

namespace se {

/// Row-major dense matrix; batches of windows are stored one per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline grad::Tensor to_tensor(const Matrix& m) {
  const auto rows = static_cast<std::size_t>(m.rows());
  const auto cols = static_cast<std::size_t>(m.cols());
  return grad::Tensor::matrix(rows, cols, std::vector<double>(m.data(), m.data() + m.size()));
}

inline Matrix to_matrix(const grad::Tensor& t) {
  Matrix m(static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
  std::copy(t.values().begin(), t.values().end(), m.data());
  return m;
}

}  // namespace se
