#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace dejavu::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  const double& operator[](std::size_t i) const { return data_[i]; }

  // Rank-2 access.
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const double& at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  double item() const;
  bool all_finite() const;
  void fill(double value);
  Tensor reshaped(Shape shape) const;

  // Elementwise accumulate; shapes must agree.
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double factor);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);

}  // namespace dejavu::ad
