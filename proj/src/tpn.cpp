#include "tcnn/tpn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tcnn/losses.hpp"

namespace tcnn {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw ShapeError(msg);
}

void he_normal(Tensor& w, int fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / fan_in);
  for (double& v : w.data) v = stddev * rng.normal();
}

void scaled_normal(Tensor& w, double stddev, Rng& rng) {
  for (double& v : w.data) v = stddev * rng.normal();
}

// Deltas beyond this would blow a box up by more than e^4.
constexpr double kMaxLogScale = 4.0;

std::vector<double> slot_vector(const FeatureCube& cube, int slot) {
  std::vector<double> v(static_cast<std::size_t>(cube.channels()));
  for (int c = 0; c < cube.channels(); ++c) v[c] = cube.at(c, slot, 0, 0);
  return v;
}

}  // namespace

TpnHead::TpnHead(const TpnConfig& config, int conv5_channels, int skip_channels, int num_anchors)
    : config_(config), conv5_channels_(conv5_channels), skip_channels_(skip_channels) {
  if (num_anchors < 1) throw std::invalid_argument("TpnHead: need at least one anchor");
  if (config.skip != SkipSource::kNone && skip_channels < 1)
    throw std::invalid_argument("TpnHead: skip source has no channels");
  if (config.skip != SkipSource::kNone && config.skip_spec.depth != kClipLength)
    throw std::invalid_argument("TpnHead: skip pooling depth must equal the clip length");
  if (config.conv5_spec.depth != 1)
    throw std::invalid_argument("TpnHead: conv5 pooling depth must be 1");
  score = Conv1x1(conv5_channels, num_anchors);
  reduce = Conv1x1(descriptor_dim(), config.reduce_dim);
  fc6 = Linear(config.reduce_dim, config.fc_dim);
  fc7 = Linear(config.fc_dim, config.fc_dim);
  reg = Linear(config.fc_dim, config.skip == SkipSource::kNone ? 4 * kClipLength : 4);
}

int TpnHead::skip_part_dim() const {
  if (config_.skip == SkipSource::kNone) return 0;
  return skip_channels_ * config_.skip_spec.height * config_.skip_spec.width;
}

int TpnHead::conv5_part_dim() const {
  return conv5_channels_ * config_.conv5_spec.height * config_.conv5_spec.width;
}

void TpnHead::initialize(Rng& rng) {
  Rng r_score = rng.substream("tpn.score");
  Rng r_reduce = rng.substream("tpn.reduce");
  Rng r_fc6 = rng.substream("tpn.fc6");
  Rng r_fc7 = rng.substream("tpn.fc7");
  Rng r_reg = rng.substream("tpn.reg");
  scaled_normal(score.weight, 0.01, r_score);
  he_normal(reduce.weight, reduce.in_channels(), r_reduce);
  he_normal(fc6.weight, fc6.in_dim(), r_fc6);
  he_normal(fc7.weight, fc7.in_dim(), r_fc7);
  scaled_normal(reg.weight, 0.001, r_reg);
  for (Tensor* b : {&score.bias, &reduce.bias, &fc6.bias, &fc7.bias, &reg.bias}) b->zero();
}

std::vector<Tensor*> TpnHead::params() {
  return {&score.weight, &score.bias, &reduce.weight, &reduce.bias, &fc6.weight,
          &fc6.bias,     &fc7.weight, &fc7.bias,      &reg.weight,  &reg.bias};
}

std::vector<const Tensor*> TpnHead::params() const {
  return {&score.weight, &score.bias, &reduce.weight, &reduce.bias, &fc6.weight,
          &fc6.bias,     &fc7.weight, &fc7.bias,      &reg.weight,  &reg.bias};
}

std::vector<std::string> TpnHead::param_names() const {
  return {"tpn.score.weight", "tpn.score.bias", "tpn.reduce.weight", "tpn.reduce.bias",
          "tpn.fc6.weight",   "tpn.fc6.bias",   "tpn.fc7.weight",    "tpn.fc7.bias",
          "tpn.reg.weight",   "tpn.reg.bias"};
}

std::vector<Box2D> anchor_grid(const AnchorSet& anchors, int grid_height, int grid_width) {
  std::vector<Box2D> boxes;
  boxes.reserve(static_cast<std::size_t>(grid_height) * grid_width * anchors.size());
  for (int y = 0; y < grid_height; ++y)
    for (int x = 0; x < grid_width; ++x)
      for (const AnchorBox& a : anchors.anchors) {
        const double cx = x + 0.5, cy = y + 0.5;
        const double hw = 0.5 * a.width * grid_width, hh = 0.5 * a.height * grid_height;
        boxes.push_back(clamp_box({cx - hw, cy - hh, cx + hw, cy + hh}, grid_width, grid_height));
      }
  return boxes;
}

FeatureCube anchor_logits(const Conv1x1& score_head, const FeatureCube& conv5) {
  require(conv5.depth() == 1, "anchor_logits: conv5 must have depth 1");
  return conv1x1_forward(score_head, conv5);
}

std::vector<BoxProposal> score_anchors(const FeatureCube& conv5, const AnchorSet& anchors,
                                       const Conv1x1& score_head, double threshold) {
  if (static_cast<std::size_t>(score_head.out_channels()) != anchors.size())
    throw ShapeError("score_anchors: score head outputs " +
                     std::to_string(score_head.out_channels()) + " channels for " +
                     std::to_string(anchors.size()) + " anchors");
  const FeatureCube logits = anchor_logits(score_head, conv5);
  const int h5 = conv5.height(), w5 = conv5.width();
  const std::vector<Box2D> boxes = anchor_grid(anchors, h5, w5);
  const int na = static_cast<int>(anchors.size());
  std::vector<BoxProposal> out;
  for (int y = 0; y < h5; ++y)
    for (int x = 0; x < w5; ++x)
      for (int a = 0; a < na; ++a) {
        const int idx = (y * w5 + x) * na + a;
        const double s = sigmoid(logits.at(a, 0, y, x));
        if (s < threshold) continue;
        BoxProposal p;
        p.box = boxes[idx];
        p.actionness = s;
        p.index = idx;
        p.anchor_index = a;
        p.cell_y = y;
        p.cell_x = x;
        out.push_back(p);
      }
  return out;
}

std::vector<BoxProposal> select_proposals(std::vector<BoxProposal> scored, double threshold,
                                          std::size_t top_n) {
  if (scored.empty()) return scored;
  std::stable_sort(scored.begin(), scored.end(), [](const BoxProposal& a, const BoxProposal& b) {
    if (a.actionness != b.actionness) return a.actionness > b.actionness;
    return a.index < b.index;
  });
  std::size_t keep = 0;
  while (keep < scored.size() && scored[keep].actionness >= threshold) ++keep;
  keep = std::clamp<std::size_t>(keep, 1, std::max<std::size_t>(top_n, 1));
  scored.resize(std::min(keep, scored.size()));
  return scored;
}

std::vector<ProposalLabel> label_proposals(std::span<const Box2D> proposals,
                                           std::span<const Box2D> ground_truth,
                                           double positive_iou) {
  std::vector<ProposalLabel> labels(proposals.size(), ProposalLabel::kNegative);
  if (proposals.empty() || ground_truth.empty()) return labels;
  std::vector<double> best_for_gt(ground_truth.size(), -1.0);
  std::vector<std::size_t> best_index(ground_truth.size(), 0);
  for (std::size_t i = 0; i < proposals.size(); ++i)
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
      const double v = iou(proposals[i], ground_truth[g]);
      if (v > positive_iou) labels[i] = ProposalLabel::kPositive;
      if (v > best_for_gt[g]) {
        best_for_gt[g] = v;
        best_index[g] = i;
      }
    }
  // Every proposal tied at a ground truth's best IoU is positive. A ground
  // truth nothing overlaps still gets exactly one: the lowest index.
  for (std::size_t g = 0; g < ground_truth.size(); ++g) {
    if (best_for_gt[g] <= 0.0) {
      labels[best_index[g]] = ProposalLabel::kPositive;
      continue;
    }
    for (std::size_t i = best_index[g]; i < proposals.size(); ++i)
      if (iou(proposals[i], ground_truth[g]) == best_for_gt[g])
        labels[i] = ProposalLabel::kPositive;
  }
  return labels;
}

void label_proposals(std::vector<BoxProposal>& proposals, std::span<const Box2D> ground_truth,
                     double positive_iou) {
  std::vector<Box2D> boxes;
  boxes.reserve(proposals.size());
  for (const BoxProposal& p : proposals) boxes.push_back(p.box);
  const std::vector<ProposalLabel> labels = label_proposals(boxes, ground_truth, positive_iou);
  for (std::size_t i = 0; i < proposals.size(); ++i) proposals[i].label = labels[i];
}

TubeOfInterest map_to_skip_layer(const Box2D& conv5_box, int grid_height, int grid_width,
                                 const CubeShape& skip_dims) {
  if (grid_height < 1 || grid_width < 1 || !skip_dims.valid())
    throw ShapeError("map_to_skip_layer: empty grid or skip cube");
  const Box2D scaled = scale_box(conv5_box, static_cast<double>(skip_dims.width) / grid_width,
                                 static_cast<double>(skip_dims.height) / grid_height);
  const Box2D b = clamp_box(scaled, skip_dims.width, skip_dims.height);
  return TubeOfInterest{std::vector<Box2D>(static_cast<std::size_t>(skip_dims.depth), b)};
}

SkipAssembly assemble_skip_features(const ClipFeatures& clip, const Box2D& conv5_box,
                                    const TpnHead& head) {
  const TpnConfig& cfg = head.config();
  if (clip.source != cfg.skip)
    throw std::invalid_argument("assemble_skip_features: clip skip source " +
                                to_string(clip.source) + " differs from the head's " +
                                to_string(cfg.skip));
  require(clip.conv5.depth() == 1 && clip.conv5.channels() == head.conv5_channels(),
          "assemble_skip_features: conv5 dims do not match the head");
  SkipAssembly out;
  const int slots = head.slots();
  const int skip_dim = head.skip_part_dim();
  const int c5_dim = head.conv5_part_dim();
  out.descriptors = FeatureCube({head.descriptor_dim(), slots, 1, 1});

  const TubeOfInterest c5_tube{{conv5_box}};
  out.conv5_pool = toi_pool_forward(clip.conv5, c5_tube, cfg.conv5_spec);
  out.conv5_raw = out.conv5_pool.output.values();
  const std::vector<double> c5_norm = l2norm_forward(out.conv5_raw);

  if (cfg.skip != SkipSource::kNone) {
    require(clip.skip.channels() == head.skip_channels(),
            "assemble_skip_features: skip channels do not match the head");
    const TubeOfInterest tube =
        map_to_skip_layer(conv5_box, clip.conv5.height(), clip.conv5.width(), clip.skip.shape());
    out.skip_pool.push_back(toi_pool_forward(clip.skip, tube, cfg.skip_spec));
    const FeatureCube& pooled = out.skip_pool[0].output;
    const int plane = cfg.skip_spec.height * cfg.skip_spec.width;
    out.skip_raw.assign(slots, std::vector<double>(static_cast<std::size_t>(skip_dim)));
    for (int f = 0; f < slots; ++f) {
      std::vector<double>& v = out.skip_raw[f];
      for (int c = 0; c < head.skip_channels(); ++c) {
        const double* src = pooled.data().data() + pooled.index(c, f, 0, 0);
        std::copy(src, src + plane, v.begin() + static_cast<std::ptrdiff_t>(c) * plane);
      }
      const std::vector<double> n = l2norm_forward(v);
      for (int i = 0; i < skip_dim; ++i) out.descriptors.at(i, f, 0, 0) = n[i];
    }
  }
  for (int f = 0; f < slots; ++f)
    for (int i = 0; i < c5_dim; ++i) out.descriptors.at(skip_dim + i, f, 0, 0) = c5_norm[i];
  return out;
}

SkipAssembly assemble_skip_features(const ClipFeatures& clip, const BoxProposal& positive,
                                    const TpnHead& head) {
  if (positive.label != ProposalLabel::kPositive)
    throw std::invalid_argument("assemble_skip_features: proposal " +
                                std::to_string(positive.index) + " is not labeled positive");
  return assemble_skip_features(clip, positive.box, head);
}

RegressionTrace regression_forward(const TpnHead& head, const FeatureCube& descriptors) {
  require(descriptors.channels() == head.descriptor_dim() && descriptors.depth() == head.slots(),
          "regression_forward: descriptor dims do not match the head");
  RegressionTrace t;
  t.reduced = conv1x1_forward(head.reduce, descriptors);
  relu_inplace(t.reduced);
  const int slots = head.slots();
  t.h6.resize(slots);
  t.h7.resize(slots);
  for (int s = 0; s < slots; ++s) {
    const std::vector<double> x = slot_vector(t.reduced, s);
    t.h6[s] = relu_forward(fc_forward(head.fc6, x));
    t.h7[s] = relu_forward(fc_forward(head.fc7, t.h6[s]));
    const std::vector<double> o = fc_forward(head.reg, t.h7[s]);
    if (slots == 1) {
      for (int f = 0; f < kClipLength; ++f)
        for (int k = 0; k < 4; ++k) t.output.deltas[f][k] = o[4 * f + k];
    } else {
      for (int k = 0; k < 4; ++k) t.output.deltas[s][k] = o[k];
    }
  }
  return t;
}

FeatureCube regression_backward(const TpnHead& head, const FeatureCube& descriptors,
                                const RegressionTrace& trace, const RegressionOutput& grad_deltas,
                                TpnHead& grads) {
  const int slots = head.slots();
  FeatureCube g_reduced(trace.reduced.shape());
  std::vector<double> g7(head.fc7.out_dim()), g6(head.fc6.out_dim()),
      gx(head.fc6.in_dim());
  for (int s = 0; s < slots; ++s) {
    std::vector<double> go(head.reg.out_dim());
    if (slots == 1) {
      for (int f = 0; f < kClipLength; ++f)
        for (int k = 0; k < 4; ++k) go[4 * f + k] = grad_deltas.deltas[f][k];
    } else {
      for (int k = 0; k < 4; ++k) go[k] = grad_deltas.deltas[s][k];
    }
    fc_backward_accumulate(head.reg, trace.h7[s], go, g7, grads.reg.weight, grads.reg.bias);
    for (std::size_t i = 0; i < g7.size(); ++i)
      if (trace.h7[s][i] <= 0.0) g7[i] = 0.0;
    fc_backward_accumulate(head.fc7, trace.h6[s], g7, g6, grads.fc7.weight, grads.fc7.bias);
    for (std::size_t i = 0; i < g6.size(); ++i)
      if (trace.h6[s][i] <= 0.0) g6[i] = 0.0;
    const std::vector<double> x = slot_vector(trace.reduced, s);
    fc_backward_accumulate(head.fc6, x, g6, gx, grads.fc6.weight, grads.fc6.bias);
    for (int c = 0; c < g_reduced.channels(); ++c) g_reduced.at(c, s, 0, 0) = gx[c];
  }
  relu_backward_inplace(trace.reduced, g_reduced);
  FeatureCube g_desc;
  conv1x1_backward_accumulate(head.reduce, descriptors, g_reduced, &g_desc, grads.reduce.weight,
                              grads.reduce.bias);
  return g_desc;
}

void assembly_backward(const SkipAssembly& assembly, const FeatureCube& grad_descriptors,
                       const TpnHead& head, FeatureCube* grad_skip, FeatureCube& grad_conv5) {
  const int slots = head.slots();
  const int skip_dim = head.skip_part_dim();
  const int c5_dim = head.conv5_part_dim();
  require(grad_descriptors.shape() == assembly.descriptors.shape(),
          "assembly_backward: gradient dims do not match the descriptors");

  // The conv5 half is shared by every slot.
  std::vector<double> g5(static_cast<std::size_t>(c5_dim), 0.0);
  for (int f = 0; f < slots; ++f)
    for (int i = 0; i < c5_dim; ++i) g5[i] += grad_descriptors.at(skip_dim + i, f, 0, 0);
  const std::vector<double> g5_raw = l2norm_backward(assembly.conv5_raw, g5);
  require(grad_conv5.shape() == assembly.conv5_pool.argmax.input_shape,
          "assembly_backward: conv5 gradient dims");
  const auto& idx5 = assembly.conv5_pool.argmax.index;
  for (std::size_t j = 0; j < idx5.size(); ++j)
    grad_conv5[static_cast<std::size_t>(idx5[j])] += g5_raw[j];

  if (head.config().skip == SkipSource::kNone) return;
  if (grad_skip == nullptr) return;
  const ToIArgmax& am = assembly.skip_pool[0].argmax;
  require(grad_skip->shape() == am.input_shape, "assembly_backward: skip gradient dims");
  const ToIOutputSpec& spec = head.config().skip_spec;
  const int plane = spec.height * spec.width;
  std::vector<double> gs(static_cast<std::size_t>(skip_dim));
  for (int f = 0; f < slots; ++f) {
    for (int i = 0; i < skip_dim; ++i) gs[i] = grad_descriptors.at(i, f, 0, 0);
    const std::vector<double> graw = l2norm_backward(assembly.skip_raw[f], gs);
    for (int c = 0; c < head.skip_channels(); ++c) {
      const std::size_t base =
          ((static_cast<std::size_t>(c) * spec.depth + f) * spec.height) * spec.width;
      for (int k = 0; k < plane; ++k)
        (*grad_skip)[static_cast<std::size_t>(am.index[base + k])] +=
            graw[static_cast<std::size_t>(c) * plane + k];
    }
  }
}

std::array<double, 4> regression_targets(const Box2D& proposal, const Box2D& gt) {
  const double pw = proposal.width(), ph = proposal.height();
  if (!(pw > 0.0 && ph > 0.0) || !(gt.width() > 0.0 && gt.height() > 0.0))
    throw std::invalid_argument("regression_targets: boxes must have positive area");
  return {(gt.cx() - proposal.cx()) / pw, (gt.cy() - proposal.cy()) / ph,
          std::log(gt.width() / pw), std::log(gt.height() / ph)};
}

Box2D apply_deltas(const Box2D& p, const std::array<double, 4>& d) {
  const double cx = p.cx() + d[0] * p.width();
  const double cy = p.cy() + d[1] * p.height();
  const double w = p.width() * std::exp(std::min(d[2], kMaxLogScale));
  const double h = p.height() * std::exp(std::min(d[3], kMaxLogScale));
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

TubeProposal regress_boxes(const RegressionOutput& regression, const BoxProposal& proposal,
                           const FrameGeometry& geometry, int clip_index) {
  for (const auto& d : regression.deltas)
    for (double v : d)
      if (!std::isfinite(v)) throw std::invalid_argument("regress_boxes: non-finite delta");
  const Box2D p = geometry.to_frame(proposal.box);
  TubeProposal t;
  t.clip_index = clip_index;
  t.actionness = proposal.actionness;
  for (int f = 0; f < kClipLength; ++f)
    t.frame_boxes[f] =
        clamp_box(apply_deltas(p, regression.deltas[f]), geometry.frame_width, geometry.frame_height);
  return t;
}

TpnLossValue tpn_clip_loss(const TpnHead& head, const ClipFeatures& clip,
                           const TpnClipTargets& targets, TpnHead* grads, FeatureCube* grad_skip,
                           FeatureCube* grad_conv5) {
  if (targets.anchor_indices.size() != targets.labels.size())
    throw std::invalid_argument("tpn_clip_loss: anchor indices and labels differ in length");
  TpnLossValue loss;
  const FeatureCube logits = anchor_logits(head.score, clip.conv5);
  const int na = head.num_anchors(), w5 = clip.conv5.width();
  FeatureCube g_logits(logits.shape());
  if (!targets.anchor_indices.empty()) {
    const double inv =
        1.0 / (targets.actionness_norm > 0.0 ? targets.actionness_norm
                                             : static_cast<double>(targets.anchor_indices.size()));
    for (std::size_t i = 0; i < targets.anchor_indices.size(); ++i) {
      const int idx = targets.anchor_indices[i];
      const int a = idx % na, cell = idx / na;
      const std::size_t li = logits.index(a, 0, cell / w5, cell % w5);
      double g = 0.0;
      loss.actionness += inv * bce_with_logits(logits[li], targets.labels[i], &g);
      g_logits[li] += inv * g;
    }
  }
  if (grads != nullptr) {
    FeatureCube g5;
    conv1x1_backward_accumulate(head.score, clip.conv5, g_logits,
                                grad_conv5 != nullptr ? &g5 : nullptr, grads->score.weight,
                                grads->score.bias);
    if (grad_conv5 != nullptr)
      for (std::size_t i = 0; i < g5.size(); ++i) (*grad_conv5)[i] += g5[i];
  }

  if (!targets.regression.empty()) {
    const double inv =
        1.0 / (targets.regression_norm > 0.0 ? targets.regression_norm
                                             : static_cast<double>(targets.regression.size()));
    for (const RegressionTarget& t : targets.regression) {
      const SkipAssembly as = assemble_skip_features(clip, t.proposal.box, head);
      const RegressionTrace tr = regression_forward(head, as.descriptors);
      RegressionOutput gd;
      for (int f = 0; f < kClipLength; ++f) {
        if (!t.mask[f]) continue;
        for (int k = 0; k < 4; ++k) {
          double g = 0.0;
          loss.regression += inv * smooth_l1(tr.output.deltas[f][k] - t.deltas[f][k], &g);
          gd.deltas[f][k] = inv * g;
        }
      }
      if (grads == nullptr) continue;
      const FeatureCube g_desc = regression_backward(head, as.descriptors, tr, gd, *grads);
      if (grad_conv5 != nullptr) assembly_backward(as, g_desc, head, grad_skip, *grad_conv5);
    }
  }
  if (!std::isfinite(loss.total())) throw std::runtime_error("tpn_clip_loss: non-finite loss");
  return loss;
}

}  // namespace tcnn
