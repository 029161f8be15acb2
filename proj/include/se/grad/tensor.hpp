#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace se::grad {

/// Dense row-major tensor of doubles. Operations in the engine treat a
/// rank-0 tensor as 1x1, a rank-1 tensor of length n as 1xn and a rank-2
/// tensor as a matrix; higher ranks can be stored but not operated on.
class Tensor {
 public:
  using Shape = std::vector<std::size_t>;
  // Aligned so vectorised reductions sum in the same order wherever a buffer lands.
  using Storage = std::vector<double, Eigen::aligned_allocator<double>>;

  Tensor() : values_(1, 0.0) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }
  static Tensor vector(std::initializer_list<double> values);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  /// Value of a single-element tensor.
  double item() const;
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  Shape shape_;
  Storage values_;
};

std::string shape_string(const Tensor::Shape& shape);

}  // namespace se::grad
