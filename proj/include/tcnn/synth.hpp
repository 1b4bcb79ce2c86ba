#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcnn/annotations.hpp"
#include "tcnn/tensor.hpp"

namespace tcnn {

enum class Motion { kHorizontal, kVertical, kDiagonal, kOscillation };

/// Motion pattern of a class id (1-based); classes cycle through the four.
Motion class_motion(int class_id);

struct SynthSpec {
  int num_classes = 3;
  int height = 60;
  int width = 80;
  int frames_per_video = 16;
  /// Standard deviation of per-pixel noise.
  double noise = 0.1;
  /// Untrimmed videos: chance that a background segment holds a distractor.
  double distractor_rate = 0.5;
  bool untrimmed = false;
  std::uint64_t seed = 0;
};

/// Videos `first`..`first + count - 1` of the dataset defined by `spec`.
/// Each video draws from its own stream, so any subset is reproducible alone.
std::vector<LabeledVideo> generate(const SynthSpec& spec, int first, int count);

/// One video. Trimmed videos carry a single action over every frame; in
/// untrimmed ones the action covers one segment and the rest is background,
/// possibly with a distractor (a textured rectangle moving without any class
/// pattern). `class_id` 0 makes a video with no action at all.
LabeledVideo generate_video(const SynthSpec& spec, int index, int class_id);

/// Class of video `index` in a balanced dataset: 1, 2, ..., N, 1, 2, ...
int dataset_class(const SynthSpec& spec, int index);

enum class ClipMode { kTrainOverlapping, kTestNonOverlapping };

struct Clip {
  /// First frame of the clip in the video.
  int start = 0;
  /// C x 8 x H x W; frames past the end of the video are zero.
  FeatureCube frames;
};

/// Train mode: every 8-frame window (stride 1). Test mode: consecutive
/// non-overlapping windows, the last one zero-padded. Videos shorter than 8
/// frames give one padded clip in both modes.
std::vector<Clip> clip_divide(const FeatureCube& video, ClipMode mode);

/// Clip start frames without materializing the clips.
std::vector<int> clip_starts(int num_frames, ClipMode mode);

/// Copies frames [start, start + 8) of `video`, zero-filling past the end.
FeatureCube extract_clip(const FeatureCube& video, int start);

}  // namespace tcnn
