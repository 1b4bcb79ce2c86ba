#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tcnn/tensor.hpp"

namespace tcnn {

/// Per-axis extents for kernels, padding and pooling windows (depth, height, width).
struct Extent3 {
  int d = 1;
  int h = 1;
  int w = 1;
  friend bool operator==(const Extent3&, const Extent3&) = default;
};

// ---------------------------------------------------------------------------
// 3D convolution, stride 1.

class Conv3D {
 public:
  Conv3D() = default;
  Conv3D(int in_channels, int out_channels, Extent3 kernel, Extent3 padding);

  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }
  const Extent3& kernel() const { return kernel_; }
  const Extent3& padding() const { return padding_; }

  /// Weight layout: out x in x kd x kh x kw.
  Tensor weight;
  Tensor bias;

  std::size_t weight_index(int oc, int ic, int kd, int kh, int kw) const {
    return (((static_cast<std::size_t>(oc) * in_channels_ + ic) * kernel_.d + kd) * kernel_.h +
            kh) *
               kernel_.w +
           kw;
  }

  CubeShape output_shape(const CubeShape& input) const;

 private:
  int in_channels_ = 0;
  int out_channels_ = 0;
  Extent3 kernel_;
  Extent3 padding_;
};

struct Conv3DGrads {
  FeatureCube input;
  Tensor weight;
  Tensor bias;
};

/// Cross-correlation plus bias. Each output accumulates its terms in the
/// order (in_channel, kd, kh, kw) in double precision; padded taps are skipped.
FeatureCube conv3d_forward(const Conv3D& layer, const FeatureCube& input);

/// Accumulating backward: adds into grad_weight / grad_bias, writes grad_input
/// when it is non-null.
void conv3d_backward_accumulate(const Conv3D& layer, const FeatureCube& input,
                                const FeatureCube& grad_out, FeatureCube* grad_input,
                                Tensor& grad_weight, Tensor& grad_bias);

Conv3DGrads conv3d_backward(const Conv3D& layer, const FeatureCube& input,
                            const FeatureCube& grad_out);

// ---------------------------------------------------------------------------
// 3D max pooling with stride equal to the kernel.

struct MaxPool3D {
  Extent3 kernel;
  /// When false, every input axis must be divisible by its kernel axis. When
  /// true, the output covers ceil(input / kernel) windows and the trailing
  /// window on an axis is truncated.
  bool allow_partial = false;

  CubeShape output_shape(const CubeShape& input) const;
};

/// Winning input linear index for each pooled output element.
struct PoolArgmax {
  CubeShape input_shape;
  CubeShape output_shape;
  std::vector<std::int64_t> index;
};

struct PoolResult {
  FeatureCube output;
  PoolArgmax argmax;
};

/// Ties go to the lowest linear input index.
PoolResult maxpool3d_forward(const MaxPool3D& layer, const FeatureCube& input);
FeatureCube maxpool3d_backward(const PoolArgmax& argmax, const FeatureCube& grad_out);

// ---------------------------------------------------------------------------
// Fully connected.

class Linear {
 public:
  Linear() = default;
  Linear(int in_dim, int out_dim);

  int in_dim() const { return in_dim_; }
  int out_dim() const { return out_dim_; }

  /// out_dim x in_dim, row-major.
  Tensor weight;
  Tensor bias;

 private:
  int in_dim_ = 0;
  int out_dim_ = 0;
};

std::vector<double> fc_forward(const Linear& layer, std::span<const double> input);
void fc_backward_accumulate(const Linear& layer, std::span<const double> input,
                            std::span<const double> grad_out, std::span<double> grad_input,
                            Tensor& grad_weight, Tensor& grad_bias);

struct LinearGrads {
  std::vector<double> input;
  Tensor weight;
  Tensor bias;
};
LinearGrads fc_backward(const Linear& layer, std::span<const double> input,
                        std::span<const double> grad_out);

// ---------------------------------------------------------------------------
// Channel-wise 1x1x1 convolution: mixes channels independently at every
// (d, h, w) position.

class Conv1x1 {
 public:
  Conv1x1() = default;
  Conv1x1(int in_channels, int out_channels);

  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }

  /// out x in.
  Tensor weight;
  Tensor bias;

 private:
  int in_channels_ = 0;
  int out_channels_ = 0;
};

FeatureCube conv1x1_forward(const Conv1x1& layer, const FeatureCube& input);
void conv1x1_backward_accumulate(const Conv1x1& layer, const FeatureCube& input,
                                 const FeatureCube& grad_out, FeatureCube* grad_input,
                                 Tensor& grad_weight, Tensor& grad_bias);

// ---------------------------------------------------------------------------
// Elementwise.

std::vector<double> relu_forward(std::span<const double> x);
/// `x` is the forward input.
std::vector<double> relu_backward(std::span<const double> x, std::span<const double> grad_out);
void relu_inplace(FeatureCube& cube);
/// Zeroes grad entries where the forward output was not positive.
void relu_backward_inplace(const FeatureCube& output, FeatureCube& grad);

/// x / ||x||. A zero vector maps to zero.
std::vector<double> l2norm_forward(std::span<const double> x);
/// `x` is the forward input. A zero vector yields a zero gradient.
std::vector<double> l2norm_backward(std::span<const double> x, std::span<const double> grad_out);

double sigmoid(double x);
std::vector<double> softmax(std::span<const double> logits);

}  // namespace tcnn
