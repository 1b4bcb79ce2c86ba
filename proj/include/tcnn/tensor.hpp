#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tcnn {

/// Thrown when tensor shapes do not line up for an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dimensions of a feature cube: channels x depth (frames) x height x width.
struct CubeShape {
  int channels = 1;
  int depth = 1;
  int height = 1;
  int width = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * depth * height * width;
  }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  std::size_t volume() const { return plane() * depth; }
  bool valid() const { return channels >= 1 && depth >= 1 && height >= 1 && width >= 1; }

  friend bool operator==(const CubeShape&, const CubeShape&) = default;
  std::string str() const;
};

/// A C x D x H x W activation volume. Storage is channel-major, then depth,
/// then row-major spatial order.
class FeatureCube {
 public:
  FeatureCube() = default;
  explicit FeatureCube(CubeShape shape, double fill = 0.0);
  FeatureCube(CubeShape shape, std::vector<double> data);

  const CubeShape& shape() const { return shape_; }
  int channels() const { return shape_.channels; }
  int depth() const { return shape_.depth; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(int c, int d, int h, int w) const {
    return ((static_cast<std::size_t>(c) * shape_.depth + d) * shape_.height + h) *
               shape_.width +
           w;
  }
  double& at(int c, int d, int h, int w) { return data_[index(c, d, h, w)]; }
  double at(int c, int d, int h, int w) const { return data_[index(c, d, h, w)]; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  void fill(double v);
  double sum() const;

 private:
  CubeShape shape_;
  std::vector<double> data_;
};

/// A named n-dimensional parameter array (weights, biases, velocities).
struct Tensor {
  std::vector<int> dims;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> d, double fill = 0.0);

  std::size_t size() const { return data.size(); }
  void zero();
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::size_t element_count(std::span<const int> dims);

}  // namespace tcnn
