#pragma once

// A narrow model on small frames so training tests finish in seconds.

#include <vector>

#include "tcnn/anchors.hpp"
#include "tcnn/model.hpp"
#include "tcnn/synth.hpp"

namespace tcnn::testing {

inline SynthSpec tiny_spec(int num_classes = 2, std::uint64_t seed = 7) {
  SynthSpec s;
  s.num_classes = num_classes;
  s.height = 32;
  s.width = 40;
  s.frames_per_video = 12;
  s.seed = seed;
  return s;
}

inline ModelConfig tiny_config(int num_classes = 2, SkipSource skip = SkipSource::kConv2) {
  ModelConfig c = model_preset(Scale::kDesk, num_classes, skip);
  c.frame_height = 32;
  c.frame_width = 40;
  c.backbone = {3, {4, 4, 6, 6, 8, 8, 8, 8}};
  c.tpn.reduce_dim = 16;
  c.tpn.fc_dim = 16;
  c.recognition.fc_dim = 16;
  return c;
}

inline AnchorSet tiny_anchors(const std::vector<LabeledVideo>& data, const SynthSpec& spec,
                              int k = 3) {
  std::vector<AnchorBox> boxes;
  for (const LabeledVideo& v : data)
    for (const auto& frame : v.annotation.frames)
      for (const FrameLabel& l : frame)
        boxes.push_back({l.box.width() / spec.width, l.box.height() / spec.height});
  return kmeans_anchors(boxes, k, 1);
}

inline Model tiny_model(const std::vector<LabeledVideo>& data, const SynthSpec& spec,
                        std::uint64_t seed = 3, SkipSource skip = SkipSource::kConv2) {
  Model m(tiny_config(spec.num_classes, skip), tiny_anchors(data, spec));
  m.initialize(seed);
  return m;
}

}  // namespace tcnn::testing
