#include "dejavu/ad/tensor.h"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "dejavu/error.h"

namespace dejavu::ad {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  return fmt::format("[{}]", fmt::join(shape, ","));
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError(fmt::format("tensor data length {} does not match shape {}",
                                 data_.size(), shape_string(shape_)));
  }
}

Tensor Tensor::scalar(double value) { return Tensor({}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError(fmt::format("item() on tensor of shape {}", shape_string(shape_)));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError(fmt::format("cannot reshape {} to {}", shape_string(shape_),
                                 shape_string(shape)));
  }
  return Tensor(std::move(shape), data_);
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.data_.size() != data_.size()) {
    throw ShapeError(fmt::format("accumulate {} into {}", shape_string(other.shape_),
                                 shape_string(shape_)));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double factor) {
  for (double& v : data_) v *= factor;
  return *this;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

}  // namespace dejavu::ad
