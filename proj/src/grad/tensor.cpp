#include "se/grad/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "se/errors.hpp"

namespace se::grad {

namespace {

std::size_t element_count(const Tensor::Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  values_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(values.begin(), values.end()) {
  if (values_.size() != element_count(shape_)) {
    throw DimensionError("tensor of shape " + shape_string(shape_) + " given " +
                         std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return vector(std::vector<double>(values));
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i) out.at(i, i) = 1.0;
  return out;
}

std::size_t Tensor::rows() const {
  if (rank() > 2) throw DimensionError("rank " + std::to_string(rank()) + " tensor has no matrix view");
  return rank() == 2 ? shape_[0] : 1;
}

std::size_t Tensor::cols() const {
  if (rank() > 2) throw DimensionError("rank " + std::to_string(rank()) + " tensor has no matrix view");
  if (rank() == 0) return 1;
  return rank() == 1 ? shape_[0] : shape_[1];
}

double Tensor::item() const {
  if (values_.size() != 1) {
    throw ContractError("item() on tensor of shape " + shape_string(shape_));
  }
  return values_[0];
}

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string shape_string(const Tensor::Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

}  // namespace se::grad
