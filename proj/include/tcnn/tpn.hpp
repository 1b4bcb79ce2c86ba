#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "tcnn/anchors.hpp"
#include "tcnn/backbone.hpp"
#include "tcnn/geometry.hpp"
#include "tcnn/layers.hpp"
#include "tcnn/toi_pool.hpp"

namespace tcnn {

enum class ProposalLabel { kNegative, kPositive, kIgnore };

/// A scored anchor box on the conv5 grid.
struct BoxProposal {
  Box2D box;
  double actionness = 0.0;
  /// Position in the (cell_y, cell_x, anchor) enumeration order.
  int index = 0;
  int anchor_index = 0;
  int cell_y = 0;
  int cell_x = 0;
  ProposalLabel label = ProposalLabel::kNegative;
};

/// One clip's refined 8-frame box sequence, in original-frame coordinates.
struct TubeProposal {
  int clip_index = 0;
  std::array<Box2D, kClipLength> frame_boxes{};
  double actionness = 0.0;
};

/// Per-frame (dx, dy, dw, dh): center shift in units of the proposal size and
/// log-scale width/height change.
struct RegressionOutput {
  std::array<std::array<double, 4>, kClipLength> deltas{};
};

/// Frame size and conv5 grid size; boxes convert between the two by the exact
/// ratio of the dimensions.
struct FrameGeometry {
  int frame_height = 0;
  int frame_width = 0;
  int grid_height = 0;
  int grid_width = 0;

  Box2D to_frame(const Box2D& grid_box) const {
    return scale_box(grid_box, static_cast<double>(frame_width) / grid_width,
                     static_cast<double>(frame_height) / grid_height);
  }
  Box2D to_grid(const Box2D& frame_box) const {
    return scale_box(frame_box, static_cast<double>(grid_width) / frame_width,
                     static_cast<double>(grid_height) / frame_height);
  }
};

struct TpnConfig {
  SkipSource skip = SkipSource::kConv2;
  ToIOutputSpec skip_spec{kClipLength, 8, 8};
  ToIOutputSpec conv5_spec{1, 4, 4};
  /// Width after the 1x1 reduction and of the two hidden fc layers.
  int reduce_dim = 8192;
  int fc_dim = 4096;
  double actionness_threshold = 0.5;
  double positive_iou = 0.7;
};

class TpnHead {
 public:
  TpnHead() = default;
  TpnHead(const TpnConfig& config, int conv5_channels, int skip_channels, int num_anchors);

  const TpnConfig& config() const { return config_; }
  int num_anchors() const { return score.out_channels(); }
  int conv5_channels() const { return conv5_channels_; }
  int skip_channels() const { return skip_channels_; }
  int skip_part_dim() const;
  int conv5_part_dim() const;
  int descriptor_dim() const { return skip_part_dim() + conv5_part_dim(); }
  /// Descriptors per clip: one per frame with a skip source, one otherwise.
  int slots() const { return config_.skip == SkipSource::kNone ? 1 : kClipLength; }

  /// Actionness logits: conv5 channels -> one channel per anchor.
  Conv1x1 score;
  /// Descriptor reduction ahead of the fc stack.
  Conv1x1 reduce;
  Linear fc6;
  Linear fc7;
  /// 4 outputs per slot with a skip source, 4 x 8 without.
  Linear reg;

  void initialize(Rng& rng);
  std::vector<Tensor*> params();
  std::vector<const Tensor*> params() const;
  std::vector<std::string> param_names() const;

 private:
  TpnConfig config_;
  int conv5_channels_ = 0;
  int skip_channels_ = 0;
};

/// Anchor boxes on a grid, enumerated (y, x, anchor), clamped to the grid.
std::vector<Box2D> anchor_grid(const AnchorSet& anchors, int grid_height, int grid_width);

/// A x 1 x h5 x w5 logits.
FeatureCube anchor_logits(const Conv1x1& score_head, const FeatureCube& conv5);

/// Every anchor at every conv5 cell with its actionness; proposals scoring
/// below `threshold` are dropped.
std::vector<BoxProposal> score_anchors(const FeatureCube& conv5, const AnchorSet& anchors,
                                       const Conv1x1& score_head, double threshold);

/// Keeps the `top_n` highest-actionness proposals at or above `threshold`
/// (ties by enumeration index). If none pass, the single best is kept.
std::vector<BoxProposal> select_proposals(std::vector<BoxProposal> scored, double threshold,
                                          std::size_t top_n);

/// Positive when IoU with any ground truth exceeds `positive_iou`, or when the
/// proposal attains the highest IoU for some ground truth. Everything else is
/// negative.
std::vector<ProposalLabel> label_proposals(std::span<const Box2D> proposals,
                                           std::span<const Box2D> ground_truth,
                                           double positive_iou = 0.7);
void label_proposals(std::vector<BoxProposal>& proposals, std::span<const Box2D> ground_truth,
                     double positive_iou = 0.7);

/// Scales a conv5 box onto the skip cube and repeats it on every skip frame.
TubeOfInterest map_to_skip_layer(const Box2D& conv5_box, int grid_height, int grid_width,
                                 const CubeShape& skip_dims);

struct ClipFeatures {
  /// Unused (may be empty) when `source` is kNone.
  const FeatureCube& skip;
  const FeatureCube& conv5;
  SkipSource source;
};

/// Per-slot descriptors for one proposal plus what the backward pass needs.
struct SkipAssembly {
  std::vector<ToIResult> skip_pool;  // empty without a skip source
  ToIResult conv5_pool;
  /// Raw (pre-normalization) per-slot skip vectors and the conv5 vector.
  std::vector<std::vector<double>> skip_raw;
  std::vector<double> conv5_raw;
  /// descriptor_dim x slots x 1 x 1, L2-normalized halves concatenated.
  FeatureCube descriptors;
};

SkipAssembly assemble_skip_features(const ClipFeatures& clip, const Box2D& conv5_box,
                                    const TpnHead& head);
/// Rejects a proposal that is not labeled positive.
SkipAssembly assemble_skip_features(const ClipFeatures& clip, const BoxProposal& positive,
                                    const TpnHead& head);

struct RegressionTrace {
  FeatureCube reduced;  // post-ReLU, reduce_dim x slots x 1 x 1
  std::vector<std::vector<double>> h6, h7;  // post-ReLU per slot
  RegressionOutput output;
};

RegressionTrace regression_forward(const TpnHead& head, const FeatureCube& descriptors);

/// Gradient of the descriptors given d(loss)/d(deltas); accumulates head
/// parameter gradients (reduce, fc6, fc7, reg) into `grads`.
FeatureCube regression_backward(const TpnHead& head, const FeatureCube& descriptors,
                                const RegressionTrace& trace, const RegressionOutput& grad_deltas,
                                TpnHead& grads);

/// Routes descriptor gradients back to the skip cube and conv5 (accumulated
/// into `grad_skip` / `grad_conv5`, which must already be sized).
void assembly_backward(const SkipAssembly& assembly, const FeatureCube& grad_descriptors,
                       const TpnHead& head, FeatureCube* grad_skip, FeatureCube& grad_conv5);

/// Applies per-frame deltas to the proposal box (mapped to frame coordinates)
/// and clamps to the frame. Actionness is inherited from the proposal.
TubeProposal regress_boxes(const RegressionOutput& regression, const BoxProposal& proposal,
                           const FrameGeometry& geometry, int clip_index);

/// Regression targets of `gt` relative to `proposal`, both in frame coordinates.
std::array<double, 4> regression_targets(const Box2D& proposal, const Box2D& gt);
Box2D apply_deltas(const Box2D& proposal, const std::array<double, 4>& d);

/// Per-frame regression targets for one positive proposal. Frames without an
/// annotated box are masked out of the loss.
struct RegressionTarget {
  BoxProposal proposal;
  std::array<std::array<double, 4>, kClipLength> deltas{};
  std::array<bool, kClipLength> mask{};
};

/// Training targets of one clip.
struct TpnClipTargets {
  /// Sampled anchors (enumeration indices) and their 0/1 labels.
  std::vector<int> anchor_indices;
  std::vector<int> labels;
  std::vector<RegressionTarget> regression;
  /// Divisors of the two loss terms; 0 means this clip's own counts. A batch
  /// spread over several clips sets both to the batch totals and sums.
  double actionness_norm = 0.0;
  double regression_norm = 0.0;
};

struct TpnLossValue {
  double actionness = 0.0;
  double regression = 0.0;
  double total() const { return actionness + regression; }
};

/// Mean binary log loss over the sampled anchors plus smooth-L1 on the deltas
/// of the positives (summed over frames and coordinates, averaged over
/// positives). With `grads` set, parameter gradients accumulate there and
/// feature gradients into `grad_conv5` / `grad_skip` when those are non-null.
TpnLossValue tpn_clip_loss(const TpnHead& head, const ClipFeatures& clip,
                           const TpnClipTargets& targets, TpnHead* grads = nullptr,
                           FeatureCube* grad_skip = nullptr, FeatureCube* grad_conv5 = nullptr);

}  // namespace tcnn
