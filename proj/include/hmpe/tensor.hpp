#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmpe {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Raised when operand shapes disagree; the message carries both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation produces a NaN or infinity.
class NonFiniteError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Dense row-major f32 array. Every dimension is positive and
/// data().size() == product(shape()).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0F);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  float at(std::size_t i, std::size_t j) const { return data_[offset2(i, j)]; }
  float& at(std::size_t i, std::size_t j) { return data_[offset2(i, j)]; }
  float at(std::size_t i, std::size_t j, std::size_t k) const { return data_[offset3(i, j, k)]; }
  float& at(std::size_t i, std::size_t j, std::size_t k) { return data_[offset3(i, j, k)]; }

  /// Same buffer under a new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t offset2(std::size_t i, std::size_t j) const noexcept { return i * shape_[1] + j; }
  std::size_t offset3(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return (i * shape_[1] + j) * shape_[2] + k;
  }

  Shape shape_;
  std::vector<float> data_;
};

/// Throws ShapeError naming `what` unless tensor has the given rank.
void require_rank(const Tensor& t, std::size_t rank, const char* what);
/// Throws ShapeError unless the two shapes are identical.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);
/// Throws NonFiniteError naming `what` if any element is NaN/Inf.
void require_finite(const Tensor& t, const char* what);

}  // namespace hmpe
