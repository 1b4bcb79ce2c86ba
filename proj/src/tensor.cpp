#include "tcnn/tensor.hpp"

#include <algorithm>
#include <numeric>

namespace tcnn {

std::string CubeShape::str() const {
  return std::to_string(channels) + "x" + std::to_string(depth) + "x" + std::to_string(height) +
         "x" + std::to_string(width);
}

FeatureCube::FeatureCube(CubeShape shape, double fill) : shape_(shape) {
  if (!shape.valid()) throw ShapeError("feature cube dims must be >= 1, got " + shape.str());
  data_.assign(shape.size(), fill);
}

FeatureCube::FeatureCube(CubeShape shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
  if (!shape.valid()) throw ShapeError("feature cube dims must be >= 1, got " + shape.str());
  if (data_.size() != shape.size()) {
    throw ShapeError("feature cube data length " + std::to_string(data_.size()) +
                     " does not match " + shape.str());
  }
}

void FeatureCube::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

double FeatureCube::sum() const {
  double s = 0.0;
  for (double v : data_) s += v;
  return s;
}

std::size_t element_count(std::span<const int> dims) {
  std::size_t n = 1;
  for (int d : dims) n *= static_cast<std::size_t>(d);
  return n;
}

Tensor::Tensor(std::vector<int> d, double fill) : dims(std::move(d)) {
  data.assign(element_count(dims), fill);
}

void Tensor::zero() { std::fill(data.begin(), data.end(), 0.0); }

}  // namespace tcnn
