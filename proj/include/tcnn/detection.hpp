#pragma once

#include <string>
#include <vector>

#include "tcnn/linking.hpp"
#include "tcnn/rng.hpp"
#include "tcnn/toi_pool.hpp"
#include "tcnn/tpn.hpp"

namespace tcnn {

/// A box on one frame of a video.
struct FrameBox {
  int frame = 0;
  Box2D box;
  friend bool operator==(const FrameBox&, const FrameBox&) = default;
};

/// Frame-indexed boxes, sorted by frame, at most one per frame.
using Track = std::vector<FrameBox>;

/// Mean over the union of frames of per-frame IoU; a frame covered by only
/// one track contributes 0. Two empty tracks score 0.
double sequence_iou(const Track& a, const Track& b);

/// Frame boxes of a linked sequence. Clip i covers frames 8i..8i+7; frames at
/// or past `num_frames` (padding) are dropped.
Track sequence_track(const std::vector<std::vector<TubeProposal>>& clips,
                     const LinkedSequence& seq, int num_frames);

struct Detection {
  std::string video_id;
  /// 1..N; background is never emitted.
  int class_id = 0;
  double confidence = 0.0;
  Track track;
};

/// Greedy per-class suppression: the highest-confidence survivor removes
/// every same-class detection whose sequence IoU exceeds `iou_threshold`.
/// Survivors come back ordered by confidence, highest first (stable).
std::vector<Detection> nms_sequences(std::vector<Detection> detections, double iou_threshold);

struct RecognitionConfig {
  int num_classes = 1;  // action classes, background excluded
  ToIOutputSpec spec{1, 4, 4};
  int fc_dim = 4096;
  double dropout = 0.5;
};

/// ToI-pooled conv5 features -> fc6 -> relu -> fc7 -> relu -> dropout ->
/// classifier over N + 1 classes (index 0 = background).
class RecognitionHead {
 public:
  RecognitionHead() = default;
  RecognitionHead(const RecognitionConfig& config, int conv5_channels);

  const RecognitionConfig& config() const { return config_; }
  int input_dim() const { return fc6.in_dim(); }

  Linear fc6;
  Linear fc7;
  Linear cls;

  void initialize(Rng& rng);
  std::vector<Tensor*> params();
  std::vector<const Tensor*> params() const;
  std::vector<std::string> param_names() const;

 private:
  RecognitionConfig config_;
};

/// conv5 cubes of consecutive clips stacked along depth (one slice per clip).
FeatureCube stack_clips(const std::vector<FeatureCube>& clip_conv5);

/// Per clip, the hull of the sequence's 8 frame boxes, mapped to conv5 cells.
TubeOfInterest sequence_tube(const std::vector<std::vector<TubeProposal>>& clips,
                             const LinkedSequence& seq, const FrameGeometry& geometry);

struct RecognitionTrace {
  ToIResult pooled;
  std::vector<double> h6, h7;  // post-ReLU
  std::vector<double> keep;    // dropout multipliers (empty at inference)
  std::vector<double> logits;
  std::vector<double> probs;
};

/// With `dropout_rng` set, applies inverted dropout to fc7's output.
RecognitionTrace recognition_forward(const RecognitionHead& head, const FeatureCube& stacked,
                                     const TubeOfInterest& tube, Rng* dropout_rng = nullptr);

/// Accumulates head gradients from d(loss)/d(logits); returns d(loss)/d(stacked).
FeatureCube recognition_backward(const RecognitionHead& head, const RecognitionTrace& trace,
                                 std::span<const double> grad_logits, RecognitionHead& grads,
                                 bool want_input_grad = true);

/// Class distribution over N + 1 for a linked sequence (inference, no dropout).
std::vector<double> classify_sequence(const std::vector<std::vector<TubeProposal>>& clips,
                                      const LinkedSequence& seq,
                                      const std::vector<FeatureCube>& clip_conv5,
                                      const RecognitionHead& head, const FrameGeometry& geometry);

/// Whole-video classification: every clip's full frame as the tube, pooled
/// to depth 1. Returns the distribution over N + 1.
std::vector<double> classify_video(const std::vector<FeatureCube>& clip_conv5,
                                   const RecognitionHead& head);

}  // namespace tcnn
