#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "tcnn/layers.hpp"
#include "tcnn/rng.hpp"
#include "tcnn/tensor.hpp"

namespace tcnn {

inline constexpr int kClipLength = 8;

/// Which earlier feature cube is paired with conv5 for temporal skip pooling.
enum class SkipSource { kNone, kConv1, kConv2, kConv3, kConv4 };

std::string to_string(SkipSource s);
SkipSource parse_skip_source(const std::string& s);

/// Eight 3x3x3 conv layers (conv1, conv2, conv3a/b, conv4a/b, conv5a/b) with
/// four max-pool layers (1x2x2, then 2x2x2 three times).
struct BackboneConfig {
  int in_channels = 3;
  std::array<int, 8> channels{};
};

/// Full-size widths: 64, 128, 256, 256, 512, 512, 512, 512.
BackboneConfig paper_backbone();

enum ConvIndex { kConv1 = 0, kConv2, kConv3a, kConv3b, kConv4a, kConv4b, kConv5a, kConv5b };

extern const std::array<const char*, 8> kConvNames;
extern const std::array<const char*, 4> kPoolNames;

class Backbone {
 public:
  Backbone() = default;
  explicit Backbone(const BackboneConfig& config);

  const BackboneConfig& config() const { return config_; }
  std::array<Conv3D, 8> convs;
  std::array<MaxPool3D, 4> pools;

  /// He-normal weights, zero biases.
  void initialize(Rng& rng);
  std::vector<Tensor*> params();
  std::vector<const Tensor*> params() const;
  std::vector<std::string> param_names() const;

  /// Channels of the cube a skip source exposes.
  int skip_channels(SkipSource s) const;

 private:
  BackboneConfig config_;
};

bool same_parameters(const Backbone& a, const Backbone& b);

/// Every intermediate needed by the backward pass.
struct BackboneTrace {
  FeatureCube input;
  /// Post-ReLU conv outputs.
  std::array<FeatureCube, 8> conv;
  std::array<FeatureCube, 4> pooled;
  std::array<PoolArgmax, 4> pool_argmax;

  const FeatureCube& conv5() const { return conv[kConv5b]; }
  const FeatureCube& skip(SkipSource s) const;
};

BackboneTrace backbone_forward(const Backbone& net, const FeatureCube& clip);

/// Shapes of every conv and pool output for an input shape, without computing.
struct BackboneShapes {
  std::array<CubeShape, 8> conv;
  std::array<CubeShape, 4> pooled;
};
BackboneShapes backbone_shapes(const Backbone& net, const CubeShape& input);

/// Forward pass that only keeps the skip cube and conv5; intermediates are
/// released as soon as they are consumed.
struct BackboneFeatures {
  FeatureCube skip;
  FeatureCube conv5;
};
BackboneFeatures backbone_features(const Backbone& net, const FeatureCube& clip, SkipSource skip);

/// Accumulates parameter gradients into `grads` given gradients at conv5 and,
/// optionally, at the skip cube.
void backbone_backward(const Backbone& net, const BackboneTrace& trace,
                       const FeatureCube& grad_conv5, SkipSource skip,
                       const FeatureCube* grad_skip, Backbone& grads);

}  // namespace tcnn
