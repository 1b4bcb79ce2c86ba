#include "tcnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tcnn/losses.hpp"
#include "tcnn/parallel.hpp"
#include "tcnn/synth.hpp"

namespace tcnn {

std::string to_string(Stage s) {
  switch (s) {
    case Stage::kInitTpn: return "init_tpn";
    case Stage::kInitRecog: return "init_recog";
    case Stage::kUpdateTpn: return "update_tpn";
    case Stage::kFinalizeRecog: return "finalize_recog";
  }
  return "init_tpn";
}

Stage parse_stage(const std::string& s) {
  for (Stage st : kStages)
    if (to_string(st) == s) return st;
  throw std::invalid_argument("unknown training stage '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(lr_initial > 0.0) || !(lr_after > 0.0) || !(lr_after < lr_initial))
    throw std::invalid_argument("TrainConfig: need 0 < lr_after < lr_initial");
  if (total_batches < 0 || lr_drop_batches < 0)
    throw std::invalid_argument("TrainConfig: negative batch count");
  if (total_batches > 0 && lr_drop_batches >= total_batches)
    throw std::invalid_argument("TrainConfig: lr_drop_batches must be below total_batches");
  if (clips_per_batch < 1) throw std::invalid_argument("TrainConfig: clips_per_batch must be >= 1");
  if (update_tpn_factor < 1) throw std::invalid_argument("TrainConfig: update_tpn_factor must be >= 1");
}

double learning_rate(const TrainConfig& config, int batch) {
  return batch < config.lr_drop_batches ? config.lr_initial : config.lr_after;
}

BalancedSample balanced_sample(std::span<const ProposalLabel> labels, std::size_t batch_size,
                               Rng& rng) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == ProposalLabel::kPositive) pos.push_back(i);
    if (labels[i] == ProposalLabel::kNegative) neg.push_back(i);
  }
  if (pos.empty() && neg.empty())
    throw std::invalid_argument("balanced_sample: no labeled proposals");
  BalancedSample s;
  s.no_positives = pos.empty();
  const std::size_t n_pos = std::min(pos.size(), batch_size / 2);
  const std::size_t n_neg = std::min(neg.size(), batch_size - n_pos);
  for (std::size_t i : rng.sample_without_replacement(pos.size(), n_pos)) s.positives.push_back(pos[i]);
  for (std::size_t i : rng.sample_without_replacement(neg.size(), n_neg)) s.negatives.push_back(neg[i]);
  return s;
}

HardNegativePool mine_hard_negatives(const TpnHead& head, const AnchorSet& anchors,
                                     const std::vector<FeatureCube>& negative_conv5,
                                     std::size_t pool_size) {
  if (negative_conv5.empty()) throw std::invalid_argument("mine_hard_negatives: no negative clips");
  if (static_cast<std::size_t>(head.num_anchors()) != anchors.size())
    throw ShapeError("mine_hard_negatives: anchor count does not match the score head");
  HardNegativePool pool;
  const int na = head.num_anchors();
  for (std::size_t c = 0; c < negative_conv5.size(); ++c) {
    const FeatureCube logits = anchor_logits(head.score, negative_conv5[c]);
    const int h5 = logits.height(), w5 = logits.width();
    for (int y = 0; y < h5; ++y)
      for (int x = 0; x < w5; ++x)
        for (int a = 0; a < na; ++a)
          pool.boxes.push_back({static_cast<int>(c), (y * w5 + x) * na + a,
                                sigmoid(logits.at(a, 0, y, x))});
  }
  std::stable_sort(pool.boxes.begin(), pool.boxes.end(),
                   [](const HardNegative& a, const HardNegative& b) { return a.actionness > b.actionness; });
  if (pool.boxes.size() > pool_size) pool.boxes.resize(pool_size);
  return pool;
}

HardNegativePool mine_hard_negatives(const Backbone& backbone, const TpnHead& head,
                                     const AnchorSet& anchors,
                                     const std::vector<FeatureCube>& negative_clips,
                                     std::size_t pool_size) {
  std::vector<FeatureCube> conv5;
  for (const FeatureCube& c : negative_clips)
    conv5.push_back(backbone_features(backbone, c, SkipSource::kNone).conv5);
  return mine_hard_negatives(head, anchors, conv5, pool_size);
}

ClipGroundTruth clip_ground_truth(const VideoAnnotation& annotation, int start) {
  ClipGroundTruth gt;
  for (const GroundTruthTube& tube : ground_truth_tubes(annotation)) {
    std::array<std::optional<Box2D>, kClipLength> frames{};
    std::vector<Box2D> boxes;
    for (const FrameBox& fb : tube.track) {
      const int f = fb.frame - start;
      if (f < 0 || f >= kClipLength) continue;
      frames[f] = fb.box;
      boxes.push_back(fb.box);
    }
    if (boxes.empty()) continue;
    gt.hulls.push_back(hull(boxes));
    gt.frames.push_back(frames);
  }
  return gt;
}

std::vector<ProposalLabel> label_clip_anchors(const AnchorSet& anchors,
                                              const FrameGeometry& geometry,
                                              const ClipGroundTruth& gt, double positive_iou) {
  const std::vector<Box2D> boxes = anchor_grid(anchors, geometry.grid_height, geometry.grid_width);
  std::vector<Box2D> targets;
  for (const Box2D& h : gt.hulls) targets.push_back(geometry.to_grid(h));
  return label_proposals(boxes, targets, positive_iou);
}

RegressionTarget anchor_regression_target(const Box2D& anchor_box, int anchor_index,
                                          const FrameGeometry& geometry,
                                          const ClipGroundTruth& gt) {
  if (gt.hulls.empty())
    throw std::invalid_argument("anchor_regression_target: clip has no ground truth");
  std::size_t best = 0;
  double best_iou = -1.0;
  for (std::size_t g = 0; g < gt.hulls.size(); ++g) {
    const double v = iou(anchor_box, geometry.to_grid(gt.hulls[g]));
    if (v > best_iou) {
      best_iou = v;
      best = g;
    }
  }
  RegressionTarget t;
  t.proposal.box = anchor_box;
  t.proposal.index = anchor_index;
  t.proposal.label = ProposalLabel::kPositive;
  const Box2D p = geometry.to_frame(anchor_box);
  for (int f = 0; f < kClipLength; ++f) {
    if (!gt.frames[best][f]) continue;
    t.mask[f] = true;
    t.deltas[f] = regression_targets(p, *gt.frames[best][f]);
  }
  return t;
}

double false_positive_rate(const Backbone& backbone, const TpnHead& head,
                           const std::vector<FeatureCube>& clips, double threshold) {
  if (clips.empty()) throw std::invalid_argument("false_positive_rate: no clips");
  std::size_t above = 0, total = 0;
  for (const FeatureCube& clip : clips) {
    const FeatureCube logits =
        anchor_logits(head.score, backbone_features(backbone, clip, SkipSource::kNone).conv5);
    for (double v : logits.values()) {
      above += sigmoid(v) >= threshold ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(above) / static_cast<double>(total);
}

namespace {

template <class T>
T zeros_like(const T& m) {
  T g = m;
  for (Tensor* p : g.params()) p->zero();
  return g;
}

template <class T>
void accumulate(T& acc, const T& g) {
  auto a = acc.params();
  const auto b = g.params();
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i]->size(); ++j) a[i]->data[j] += b[i]->data[j];
}

/// SGD with momentum: v = mu * v - lr * g; p += v.
class Sgd {
 public:
  explicit Sgd(double momentum) : momentum_(momentum) {}

  void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
            double lr) {
    if (velocity_.empty())
      for (const Tensor* p : params) velocity_.emplace_back(p->size(), 0.0);
    for (std::size_t i = 0; i < params.size(); ++i) {
      std::vector<double>& v = velocity_[i];
      for (std::size_t j = 0; j < v.size(); ++j) {
        v[j] = momentum_ * v[j] - lr * grads[i]->data[j];
        params[i]->data[j] += v[j];
      }
    }
  }

 private:
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

/// Scales all gradients together so their joint L2 norm is at most
/// `max_norm`; 0 disables. Throws on a non-finite norm.
void clip_gradients(const std::vector<std::vector<Tensor*>>& groups, double max_norm, Stage stage,
                    int batch) {
  double sq = 0.0;
  for (const auto& g : groups)
    for (const Tensor* t : g)
      for (double x : t->data) sq += x * x;
  if (!std::isfinite(sq))
    throw std::runtime_error(to_string(stage) + ": non-finite gradient at batch " + std::to_string(batch));
  const double norm = std::sqrt(sq);
  if (max_norm <= 0.0 || norm <= max_norm) return;
  const double scale = max_norm / norm;
  for (const auto& g : groups)
    for (Tensor* t : g)
      for (double& x : t->data) x *= scale;
}

template <class T>
std::vector<const Tensor*> const_params(const T& m) {
  return m.params();
}

void check_same(const Backbone& a, const Backbone& b, const std::string& where) {
  if (!same_parameters(a, b))
    throw std::logic_error(where + ": TPN and recognition backbones differ after hand-off");
}

// ---------------------------------------------------------------------------
// TPN stages.

struct TpnClip {
  std::size_t video = 0;
  int start = 0;
  ClipGroundTruth gt;
  std::vector<ProposalLabel> labels;
};

/// One unit of work inside a batch: a clip with the anchors to score.
struct TpnWork {
  const FeatureCube* video_frames = nullptr;  // training clip, features computed on the fly
  int start = 0;
  const FeatureCube* cached_conv5 = nullptr;  // hard-negative clip
  TpnClipTargets targets;
};

struct TpnWorkResult {
  TpnLossValue loss;
  TpnHead head_grads;
  Backbone backbone_grads;
};

TrainResult train_tpn_stage(Model& model, std::span<const LabeledVideo> data,
                            const TrainConfig& config, const TrainOptions& options) {
  const bool train_backbone = config.stage == Stage::kInitTpn;
  const bool mining = options.mining && config.stage == Stage::kUpdateTpn;
  const FrameGeometry geometry = model.geometry();
  const std::vector<Box2D> grid = anchor_grid(model.anchors, geometry.grid_height, geometry.grid_width);
  const SkipSource skip = model.tpn.config().skip;

  std::vector<TpnClip> clips;
  std::vector<FeatureCube> negative_conv5;
  for (std::size_t v = 0; v < data.size(); ++v) {
    const VideoAnnotation& ann = data[v].annotation;
    for (int start : clip_starts(ann.num_frames(), ClipMode::kTrainOverlapping)) {
      ClipGroundTruth gt = clip_ground_truth(ann, start);
      if (gt.hulls.empty()) continue;
      std::vector<ProposalLabel> labels =
          label_clip_anchors(model.anchors, geometry, gt, model.tpn.config().positive_iou);
      clips.push_back({v, start, std::move(gt), std::move(labels)});
    }
    if (mining)
      for (int start : clip_starts(ann.num_frames(), ClipMode::kTestNonOverlapping))
        if (clip_ground_truth(ann, start).hulls.empty())
          negative_conv5.push_back(
              backbone_features(model.tpn_backbone, extract_clip(data[v].video.frames, start),
                                SkipSource::kNone)
                  .conv5);
  }
  if (clips.empty()) throw std::invalid_argument("training: no clips with ground truth");

  TrainResult result;
  const Rng stage_rng = Rng(options.seed).substream("train/" + to_string(config.stage));
  Sgd opt_head(options.momentum), opt_backbone(options.momentum);
  HardNegativePool pool;
  int clips_without_positives = 0;

  for (int b = 0; b < config.total_batches; ++b) {
    if (mining && (b == 0 || (options.mining_refresh > 0 && b % options.mining_refresh == 0)))
      pool = mine_hard_negatives(model.tpn, model.anchors, negative_conv5, options.mining_pool_size);
    Rng rng = stage_rng.substream("batch/" + std::to_string(b));
    const std::vector<std::size_t> chosen = rng.sample_without_replacement(
        clips.size(), static_cast<std::size_t>(config.clips_per_batch));

    std::vector<TpnWork> work(chosen.size());
    for (std::size_t j = 0; j < chosen.size(); ++j) {
      const TpnClip& c = clips[chosen[j]];
      work[j].video_frames = &data[c.video].video.frames;
      work[j].start = c.start;
    }
    auto add_anchor = [&](std::size_t j, std::size_t idx, bool positive) {
      const TpnClip& c = clips[chosen[j]];
      work[j].targets.anchor_indices.push_back(static_cast<int>(idx));
      work[j].targets.labels.push_back(positive ? 1 : 0);
      if (positive)
        work[j].targets.regression.push_back(
            anchor_regression_target(grid[idx], static_cast<int>(idx), geometry, c.gt));
    };

    if (!mining) {
      for (std::size_t j = 0; j < chosen.size(); ++j) {
        Rng crng = rng.substream("clip/" + std::to_string(j));
        const BalancedSample s = balanced_sample(clips[chosen[j]].labels,
                                                 static_cast<std::size_t>(options.anchors_per_clip), crng);
        clips_without_positives += s.no_positives ? 1 : 0;
        for (std::size_t i : s.positives) add_anchor(j, i, true);
        for (std::size_t i : s.negatives) add_anchor(j, i, false);
      }
    } else {
      std::vector<std::pair<std::size_t, std::size_t>> pos, neg;
      for (std::size_t j = 0; j < chosen.size(); ++j) {
        const auto& labels = clips[chosen[j]].labels;
        for (std::size_t i = 0; i < labels.size(); ++i) {
          if (labels[i] == ProposalLabel::kPositive) pos.emplace_back(j, i);
          if (labels[i] == ProposalLabel::kNegative) neg.emplace_back(j, i);
        }
      }
      const auto take_pos = rng.sample_without_replacement(pos.size(), options.plan.positives);
      const std::size_t n_rand =
          static_cast<std::size_t>(options.plan.random_negatives + options.plan.positives) -
          take_pos.size();
      const auto take_neg = rng.sample_without_replacement(neg.size(), n_rand);
      const auto take_hard = rng.sample_without_replacement(
          pool.boxes.size(), static_cast<std::size_t>(options.plan.hard_negatives));
      for (std::size_t i : take_pos) add_anchor(pos[i].first, pos[i].second, true);
      for (std::size_t i : take_neg) add_anchor(neg[i].first, neg[i].second, false);
      std::vector<std::size_t> hard_sorted(take_hard.begin(), take_hard.end());
      std::sort(hard_sorted.begin(), hard_sorted.end(), [&](std::size_t x, std::size_t y) {
        const HardNegative &a = pool.boxes[x], &c = pool.boxes[y];
        return a.clip != c.clip ? a.clip < c.clip : a.anchor_index < c.anchor_index;
      });
      for (std::size_t i : hard_sorted) {
        const HardNegative& h = pool.boxes[i];
        const FeatureCube* conv5 = &negative_conv5[static_cast<std::size_t>(h.clip)];
        if (work.back().cached_conv5 != conv5) {
          work.emplace_back();
          work.back().cached_conv5 = conv5;
        }
        work.back().targets.anchor_indices.push_back(h.anchor_index);
        work.back().targets.labels.push_back(0);
      }
    }

    double n_anchors = 0.0, n_reg = 0.0;
    for (const TpnWork& w : work) {
      n_anchors += static_cast<double>(w.targets.anchor_indices.size());
      n_reg += static_cast<double>(w.targets.regression.size());
    }
    for (TpnWork& w : work) {
      w.targets.actionness_norm = std::max(n_anchors, 1.0);
      w.targets.regression_norm = std::max(n_reg, 1.0);
    }

    std::vector<TpnWorkResult> out(work.size());
    parallel_for(work.size(), options.threads, [&](std::size_t j) {
      const TpnWork& w = work[j];
      TpnWorkResult& r = out[j];
      r.head_grads = zeros_like(model.tpn);
      if (w.cached_conv5 != nullptr) {
        const FeatureCube none;
        r.loss = tpn_clip_loss(model.tpn, {none, *w.cached_conv5, skip}, w.targets, &r.head_grads);
        return;
      }
      const FeatureCube clip = extract_clip(*w.video_frames, w.start);
      if (!train_backbone) {
        const BackboneFeatures f = backbone_features(model.tpn_backbone, clip, skip);
        r.loss = tpn_clip_loss(model.tpn, {f.skip, f.conv5, skip}, w.targets, &r.head_grads);
        return;
      }
      const BackboneTrace trace = backbone_forward(model.tpn_backbone, clip);
      const FeatureCube none;
      const FeatureCube& skip_cube = skip == SkipSource::kNone ? none : trace.skip(skip);
      FeatureCube g5(trace.conv5().shape());
      FeatureCube gskip;
      if (skip != SkipSource::kNone) gskip = FeatureCube(skip_cube.shape());
      r.loss = tpn_clip_loss(model.tpn, {skip_cube, trace.conv5(), skip}, w.targets, &r.head_grads,
                             skip == SkipSource::kNone ? nullptr : &gskip, &g5);
      r.backbone_grads = zeros_like(model.tpn_backbone);
      backbone_backward(model.tpn_backbone, trace, g5, skip,
                        skip == SkipSource::kNone ? nullptr : &gskip, r.backbone_grads);
    });

    TpnHead head_grads = zeros_like(model.tpn);
    Backbone backbone_grads;
    if (train_backbone) backbone_grads = zeros_like(model.tpn_backbone);
    LossRecord rec{config.stage, b, learning_rate(config, b)};
    for (const TpnWorkResult& r : out) {
      accumulate(head_grads, r.head_grads);
      if (train_backbone) accumulate(backbone_grads, r.backbone_grads);
      rec.actionness += r.loss.actionness;
      rec.regression += r.loss.regression;
    }
    clip_gradients({head_grads.params(), backbone_grads.params()}, options.max_grad_norm, config.stage, b);
    opt_head.step(model.tpn.params(), const_params(head_grads), rec.lr);
    if (train_backbone) opt_backbone.step(model.tpn_backbone.params(), const_params(backbone_grads), rec.lr);
    result.losses.push_back(rec);
  }
  if (clips_without_positives > 0)
    result.warnings.push_back(to_string(config.stage) + ": " + std::to_string(clips_without_positives) +
                              " sampled clips had no positive anchors");
  return result;
}

// ---------------------------------------------------------------------------
// Recognition stages.

struct RecogSample {
  TubeOfInterest tube;
  /// Class id, 0 for background.
  int label = 0;
};

struct RecogVideo {
  std::size_t video = 0;
  std::vector<int> starts;
  std::vector<RecogSample> samples;
  std::vector<ProposalLabel> labels;
  FeatureCube stacked;  // cached when the backbone is frozen
};

/// Per clip, the hull of the tube's boxes in that clip; clips the tube does
/// not reach borrow the nearest covered clip's hull.
TubeOfInterest ground_truth_roi(const GroundTruthTube& tube, const std::vector<int>& starts,
                                const FrameGeometry& geometry) {
  std::vector<std::optional<Box2D>> per(starts.size());
  for (std::size_t c = 0; c < starts.size(); ++c) {
    std::vector<Box2D> boxes;
    for (const FrameBox& fb : tube.track)
      if (fb.frame >= starts[c] && fb.frame < starts[c] + kClipLength) boxes.push_back(fb.box);
    if (!boxes.empty()) per[c] = hull(boxes);
  }
  TubeOfInterest roi;
  for (std::size_t c = 0; c < starts.size(); ++c) {
    std::size_t best = c;
    for (std::size_t d = 0; d < starts.size(); ++d)
      if (per[d] && (!per[best] || std::abs(static_cast<long>(d) - static_cast<long>(c)) <
                                       std::abs(static_cast<long>(best) - static_cast<long>(c))))
        best = d;
    roi.boxes.push_back(
        clamp_box(geometry.to_grid(*per[best]), geometry.grid_width, geometry.grid_height));
  }
  return roi;
}

RecogVideo prepare_recog_video(const Model& model, const LabeledVideo& lv, std::size_t index,
                               bool cache_features, const TrainOptions& options) {
  const FrameGeometry geometry = model.geometry();
  RecogVideo rv;
  rv.video = index;
  rv.starts = clip_starts(lv.video.frames.depth(), ClipMode::kTestNonOverlapping);
  const VideoProposals vp =
      propose_video(model.tpn_backbone, model.tpn, model.recog_backbone, model.anchors, geometry,
                    lv.video.frames, options.proposals);
  if (cache_features) rv.stacked = stack_clips(vp.conv5);
  const std::vector<GroundTruthTube> gts = ground_truth_tubes(lv.annotation);
  for (const LinkedSequence& seq : top_k_sequences(vp.clips, options.proposals.k)) {
    const Track track = sequence_track(vp.clips, seq, vp.num_frames);
    double best = 0.0;
    int cls = 0;
    for (const GroundTruthTube& g : gts) {
      const double v = sequence_iou(track, g.track);
      if (v > best) {
        best = v;
        cls = g.class_id;
      }
    }
    ProposalLabel l = ProposalLabel::kIgnore;
    if (best >= options.recog_positive_iou) l = ProposalLabel::kPositive;
    if (best < options.recog_negative_iou) {
      l = ProposalLabel::kNegative;
      cls = 0;
    }
    rv.samples.push_back({sequence_tube(vp.clips, seq, geometry), cls});
    rv.labels.push_back(l);
  }
  for (const GroundTruthTube& g : gts) {
    rv.samples.push_back({ground_truth_roi(g, rv.starts, geometry), g.class_id});
    rv.labels.push_back(ProposalLabel::kPositive);
  }
  return rv;
}

struct RecogWorkResult {
  double loss = 0.0;
  RecognitionHead head_grads;
  Backbone backbone_grads;
};

TrainResult train_recog_stage(Model& model, std::span<const LabeledVideo> data,
                              const TrainConfig& config, const TrainOptions& options) {
  const bool train_backbone = config.stage == Stage::kInitRecog;
  std::vector<RecogVideo> videos(data.size());
  parallel_for(data.size(), options.threads, [&](std::size_t v) {
    videos[v] = prepare_recog_video(model, data[v], v, !train_backbone, options);
  });

  TrainResult result;
  const Rng stage_rng = Rng(options.seed).substream("train/" + to_string(config.stage));
  Sgd opt_head(options.momentum), opt_backbone(options.momentum);

  for (int b = 0; b < config.total_batches; ++b) {
    Rng rng = stage_rng.substream("batch/" + std::to_string(b));
    const std::vector<std::size_t> order = rng.sample_without_replacement(videos.size(), videos.size());
    std::vector<std::size_t> chosen;
    int clips = 0;
    for (std::size_t v : order) {
      if (clips >= config.clips_per_batch) break;
      chosen.push_back(v);
      clips += static_cast<int>(videos[v].starts.size());
    }
    std::vector<std::vector<std::size_t>> picks(chosen.size());
    std::size_t total = 0;
    for (std::size_t j = 0; j < chosen.size(); ++j) {
      Rng vrng = rng.substream("video/" + std::to_string(j));
      const BalancedSample s = balanced_sample(videos[chosen[j]].labels,
                                               static_cast<std::size_t>(options.sequences_per_video), vrng);
      picks[j] = s.positives;
      picks[j].insert(picks[j].end(), s.negatives.begin(), s.negatives.end());
      total += picks[j].size();
    }
    const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(total, 1));

    std::vector<RecogWorkResult> out(chosen.size());
    parallel_for(chosen.size(), options.threads, [&](std::size_t j) {
      const RecogVideo& rv = videos[chosen[j]];
      RecogWorkResult& r = out[j];
      r.head_grads = zeros_like(model.recognition);
      std::vector<BackboneTrace> traces;
      FeatureCube stacked;
      if (train_backbone) {
        std::vector<FeatureCube> conv5;
        for (int start : rv.starts) {
          traces.push_back(backbone_forward(model.recog_backbone,
                                            extract_clip(data[rv.video].video.frames, start)));
          conv5.push_back(traces.back().conv5());
        }
        stacked = stack_clips(conv5);
      }
      const FeatureCube& input = train_backbone ? stacked : rv.stacked;
      FeatureCube g_stacked(input.shape());
      for (std::size_t s = 0; s < picks[j].size(); ++s) {
        const RecogSample& sample = rv.samples[picks[j][s]];
        Rng drop = rng.substream("dropout/" + std::to_string(j) + "/" + std::to_string(s));
        const RecognitionTrace t = recognition_forward(model.recognition, input, sample.tube, &drop);
        std::vector<double> g;
        r.loss += inv * softmax_cross_entropy(t.logits, sample.label, &g);
        for (double& x : g) x *= inv;
        const FeatureCube gi = recognition_backward(model.recognition, t, g, r.head_grads, train_backbone);
        if (train_backbone)
          for (std::size_t i = 0; i < gi.size(); ++i) g_stacked[i] += gi[i];
      }
      if (!train_backbone) return;
      r.backbone_grads = zeros_like(model.recog_backbone);
      const CubeShape s5 = traces[0].conv5().shape();
      for (std::size_t c = 0; c < traces.size(); ++c) {
        FeatureCube g5(s5);
        for (int ch = 0; ch < s5.channels; ++ch)
          for (int d = 0; d < s5.depth; ++d)
            for (int y = 0; y < s5.height; ++y)
              for (int x = 0; x < s5.width; ++x)
                g5.at(ch, d, y, x) = g_stacked.at(ch, static_cast<int>(c) * s5.depth + d, y, x);
        backbone_backward(model.recog_backbone, traces[c], g5, SkipSource::kNone, nullptr,
                          r.backbone_grads);
      }
    });

    RecognitionHead head_grads = zeros_like(model.recognition);
    Backbone backbone_grads;
    if (train_backbone) backbone_grads = zeros_like(model.recog_backbone);
    LossRecord rec{config.stage, b, learning_rate(config, b)};
    for (const RecogWorkResult& r : out) {
      accumulate(head_grads, r.head_grads);
      if (train_backbone) accumulate(backbone_grads, r.backbone_grads);
      rec.classification += r.loss;
    }
    clip_gradients({head_grads.params(), backbone_grads.params()}, options.max_grad_norm, config.stage, b);
    opt_head.step(model.recognition.params(), const_params(head_grads), rec.lr);
    if (train_backbone)
      opt_backbone.step(model.recog_backbone.params(), const_params(backbone_grads), rec.lr);
    result.losses.push_back(rec);
  }
  return result;
}

}  // namespace

TrainResult train_stage(Model& model, std::span<const LabeledVideo> data,
                        const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  if (data.empty()) throw std::invalid_argument("training: empty dataset");
  const std::string name = to_string(config.stage);
  switch (config.stage) {
    case Stage::kInitTpn:
      return train_tpn_stage(model, data, config, options);
    case Stage::kInitRecog:
      model.recog_backbone = model.tpn_backbone;
      check_same(model.tpn_backbone, model.recog_backbone, name);
      return train_recog_stage(model, data, config, options);
    case Stage::kUpdateTpn: {
      model.tpn_backbone = model.recog_backbone;
      check_same(model.tpn_backbone, model.recog_backbone, name);
      TrainResult r = train_tpn_stage(model, data, config, options);
      check_same(model.tpn_backbone, model.recog_backbone, name);
      return r;
    }
    case Stage::kFinalizeRecog: {
      check_same(model.tpn_backbone, model.recog_backbone, name);
      TrainResult r = train_recog_stage(model, data, config, options);
      check_same(model.tpn_backbone, model.recog_backbone, name);
      return r;
    }
  }
  return {};
}

TrainResult alternate_train(Model& model, std::span<const LabeledVideo> data,
                            const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  if (data.empty()) throw std::invalid_argument("alternate_train: empty dataset");
  TrainResult all;
  for (Stage s : kStages) {
    TrainConfig c = config;
    c.stage = s;
    if (s == Stage::kUpdateTpn) {
      c.total_batches *= config.update_tpn_factor;
      c.lr_drop_batches *= config.update_tpn_factor;
    }
    TrainResult r = train_stage(model, data, c, options);
    all.losses.insert(all.losses.end(), r.losses.begin(), r.losses.end());
    all.warnings.insert(all.warnings.end(), r.warnings.begin(), r.warnings.end());
  }
  return all;
}

}  // namespace tcnn
