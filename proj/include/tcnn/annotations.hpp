#pragma once

#include <string>
#include <vector>

#include "tcnn/detection.hpp"
#include "tcnn/geometry.hpp"
#include "tcnn/tensor.hpp"

namespace tcnn {

/// One annotated box on a frame. Class ids start at 1.
struct FrameLabel {
  int class_id = 0;
  Box2D box;
  friend bool operator==(const FrameLabel&, const FrameLabel&) = default;
};

/// Ground truth of one video: per frame, zero or more labeled boxes.
struct VideoAnnotation {
  std::string video_id;
  std::vector<std::vector<FrameLabel>> frames;

  int num_frames() const { return static_cast<int>(frames.size()); }
  /// Class of the first labeled box, or 0 when the video has none.
  int video_class() const;
  bool has_action() const { return video_class() != 0; }
  friend bool operator==(const VideoAnnotation&, const VideoAnnotation&) = default;
};

struct GroundTruthTube {
  int class_id = 0;
  Track track;
};

struct Video {
  std::string id;
  /// 3 x T x H x W.
  FeatureCube frames;
};

struct LabeledVideo {
  Video video;
  VideoAnnotation annotation;
};

/// Maximal runs of consecutive frames carrying a box of the same class. With
/// several boxes of one class on a frame, the k-th box feeds the k-th tube.
std::vector<GroundTruthTube> ground_truth_tubes(const VideoAnnotation& video);

}  // namespace tcnn
