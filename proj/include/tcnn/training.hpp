#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tcnn/annotations.hpp"
#include "tcnn/model.hpp"
#include "tcnn/pipeline.hpp"
#include "tcnn/rng.hpp"

namespace tcnn {

enum class Stage { kInitTpn, kInitRecog, kUpdateTpn, kFinalizeRecog };
inline constexpr Stage kStages[] = {Stage::kInitTpn, Stage::kInitRecog, Stage::kUpdateTpn,
                                    Stage::kFinalizeRecog};

std::string to_string(Stage s);
Stage parse_stage(const std::string& s);

/// One stage's schedule. Every stage runs the same schedule.
struct TrainConfig {
  double lr_initial = 1e-3;
  double lr_after = 1e-4;
  int lr_drop_batches = 300;
  int total_batches = 500;
  int clips_per_batch = 4;
  Stage stage = Stage::kInitTpn;
  /// alternate_train runs update_tpn for this many times the batch counts.
  /// Its head-only batches are cheap, and the head has to catch up with the
  /// backbone that init_recog moved.
  int update_tpn_factor = 1;

  /// Throws std::invalid_argument unless lr_after < lr_initial and the drop
  /// point precedes the end (a zero-batch schedule is accepted).
  void validate() const;
};

/// lr_initial before the drop point, lr_after from it on.
double learning_rate(const TrainConfig& config, int batch);

/// Anchor composition of a mining batch.
struct BatchPlan {
  int positives = 32;
  int random_negatives = 16;
  int hard_negatives = 16;
};

struct TrainOptions {
  std::uint64_t seed = 0;
  int threads = 1;
  double momentum = 0.9;
  /// Joint L2 norm cap on each batch's gradients; 0 disables.
  double max_grad_norm = 10.0;
  /// Anchors sampled per clip (half positive when available) outside mining.
  int anchors_per_clip = 16;
  /// Sequences sampled per video for recognition training.
  int sequences_per_video = 4;
  /// Linked sequences at or above this IoU with a ground-truth tube carry its
  /// class; below `recog_negative_iou` they are background; others are unused.
  double recog_positive_iou = 0.5;
  double recog_negative_iou = 0.3;
  /// Proposal and linking settings used to build recognition samples.
  DetectConfig proposals;
  /// Hard-negative mining while updating the TPN.
  bool mining = false;
  BatchPlan plan;
  std::size_t mining_pool_size = 128;
  /// Re-mine every this many batches (0: once at the start of the stage).
  int mining_refresh = 100;
};

/// Indices into a labeled proposal list: all positives up to half the batch,
/// then negatives drawn uniformly without replacement to fill the rest.
struct BalancedSample {
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
  /// Set when there were no positives to draw.
  bool no_positives = false;
};

/// n_pos = min(#pos, batch / 2) drawn uniformly among positives, n_neg =
/// min(#neg, batch - n_pos). Ignored labels are never drawn. Throws on an
/// empty label list.
BalancedSample balanced_sample(std::span<const ProposalLabel> labels, std::size_t batch_size,
                               Rng& rng);

struct HardNegative {
  /// Index into the negative clip list the pool was mined from.
  int clip = 0;
  /// Anchor enumeration index on that clip's conv5 grid.
  int anchor_index = 0;
  double actionness = 0.0;
};

/// Highest-actionness boxes from clips without any ground truth, best first.
struct HardNegativePool {
  std::vector<HardNegative> boxes;
};

/// Scores every anchor of every clip (conv5 cubes of negative clips) and
/// keeps the `pool_size` best. Ties go to the earlier clip, then the lower
/// anchor index. Throws when there are no clips.
HardNegativePool mine_hard_negatives(const TpnHead& head, const AnchorSet& anchors,
                                     const std::vector<FeatureCube>& negative_conv5,
                                     std::size_t pool_size);
/// Same, running the backbone over raw negative clips first.
HardNegativePool mine_hard_negatives(const Backbone& backbone, const TpnHead& head,
                                     const AnchorSet& anchors,
                                     const std::vector<FeatureCube>& negative_clips,
                                     std::size_t pool_size);

/// Ground-truth boxes of clip frames [start, start + 8): per instance, the
/// hull over the clip (used for anchor labels) and the per-frame boxes.
struct ClipGroundTruth {
  std::vector<Box2D> hulls;
  std::vector<std::array<std::optional<Box2D>, kClipLength>> frames;
};
ClipGroundTruth clip_ground_truth(const VideoAnnotation& annotation, int start);

/// Anchor labels of a clip on the conv5 grid against the clip's hulls.
std::vector<ProposalLabel> label_clip_anchors(const AnchorSet& anchors,
                                              const FrameGeometry& geometry,
                                              const ClipGroundTruth& gt, double positive_iou);

/// Regression target of a positive anchor: per-frame deltas towards the
/// ground-truth instance it overlaps most.
RegressionTarget anchor_regression_target(const Box2D& anchor_box, int anchor_index,
                                          const FrameGeometry& geometry,
                                          const ClipGroundTruth& gt);

struct LossRecord {
  Stage stage = Stage::kInitTpn;
  int batch = 0;
  double lr = 0.0;
  double actionness = 0.0;
  double regression = 0.0;
  double classification = 0.0;
  double total() const { return actionness + regression + classification; }
};

struct TrainResult {
  std::vector<LossRecord> losses;
  std::vector<std::string> warnings;
};

/// Runs one stage on `data` (trimmed or untrimmed labeled videos). TPN stages
/// draw train-mode clips that contain ground truth; recognition stages draw
/// whole videos. The stage's hand-off copy happens first.
TrainResult train_stage(Model& model, std::span<const LabeledVideo> data,
                        const TrainConfig& config, const TrainOptions& options);

/// The four stages in order: TPN with its backbone; recognition, starting
/// from the TPN backbone, on linked TPN proposals; the TPN head on the
/// recognition backbone; the recognition head on the same frozen backbone.
/// Throws on an empty dataset.
TrainResult alternate_train(Model& model, std::span<const LabeledVideo> data,
                            const TrainConfig& config, const TrainOptions& options);

/// Fraction of all anchor boxes of the given clips scoring at or above
/// `threshold`.
double false_positive_rate(const Backbone& backbone, const TpnHead& head,
                           const std::vector<FeatureCube>& clips, double threshold = 0.5);

}  // namespace tcnn
