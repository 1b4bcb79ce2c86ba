#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tcnn/anchors.hpp"
#include "tcnn/backbone.hpp"
#include "tcnn/detection.hpp"
#include "tcnn/tpn.hpp"

namespace tcnn {

enum class Scale { kPaper, kDesk };

std::string to_string(Scale s);
Scale parse_scale(const std::string& s);

/// Everything that fixes layer shapes.
struct ModelConfig {
  Scale scale = Scale::kDesk;
  int frame_height = 60;
  int frame_width = 80;
  BackboneConfig backbone;
  TpnConfig tpn;
  RecognitionConfig recognition;
};

/// paper: 300x400 frames, full widths. desk: 60x80 frames, narrow layers and
/// small heads; the same kernels and pooling give a 4x5 conv5 grid.
ModelConfig model_preset(Scale scale, int num_classes, SkipSource skip = SkipSource::kConv2);

/// The TPN and recognition networks. Each owns a backbone; training copies
/// the shared layers between them at stage boundaries.
struct Model {
  ModelConfig config;
  AnchorSet anchors;
  Backbone tpn_backbone;
  TpnHead tpn;
  Backbone recog_backbone;
  RecognitionHead recognition;

  Model() = default;
  Model(const ModelConfig& config, const AnchorSet& anchors);

  /// Seeded initialization; both backbones start identical.
  void initialize(std::uint64_t seed);

  FrameGeometry geometry() const;
  CubeShape clip_shape() const;

  std::vector<std::pair<std::string, Tensor*>> named_params();
  std::vector<std::pair<std::string, const Tensor*>> named_params() const;
};

/// Writes manifest.txt (config, anchors, one line per tensor: name and dims)
/// and one tensor file per parameter. Every file is written atomically.
void save_checkpoint(const Model& model, const std::filesystem::path& dir);
Model load_checkpoint(const std::filesystem::path& dir);

}  // namespace tcnn
