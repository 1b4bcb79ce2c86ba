#include "tcnn/detection.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace tcnn {

double sequence_iou(const Track& a, const Track& b) {
  std::size_t i = 0, j = 0, frames = 0;
  double total = 0.0;
  while (i < a.size() || j < b.size()) {
    ++frames;
    if (j == b.size() || (i < a.size() && a[i].frame < b[j].frame)) {
      ++i;
    } else if (i == a.size() || b[j].frame < a[i].frame) {
      ++j;
    } else {
      total += iou(a[i].box, b[j].box);
      ++i;
      ++j;
    }
  }
  return frames == 0 ? 0.0 : total / static_cast<double>(frames);
}

Track sequence_track(const std::vector<std::vector<TubeProposal>>& clips,
                     const LinkedSequence& seq, int num_frames) {
  if (seq.tube_indices.size() != clips.size())
    throw std::invalid_argument("sequence_track: sequence does not span every clip");
  Track t;
  for (std::size_t c = 0; c < clips.size(); ++c) {
    const TubeProposal& p = clips[c].at(static_cast<std::size_t>(seq.tube_indices[c]));
    for (int f = 0; f < kClipLength; ++f) {
      const int frame = static_cast<int>(c) * kClipLength + f;
      if (frame >= num_frames) break;
      t.push_back({frame, p.frame_boxes[f]});
    }
  }
  return t;
}

std::vector<Detection> nms_sequences(std::vector<Detection> detections, double iou_threshold) {
  std::stable_sort(detections.begin(), detections.end(),
                   [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
  std::vector<Detection> kept;
  std::vector<bool> removed(detections.size(), false);
  for (std::size_t i = 0; i < detections.size(); ++i) {
    if (removed[i]) continue;
    for (std::size_t j = i + 1; j < detections.size(); ++j)
      if (!removed[j] && detections[j].class_id == detections[i].class_id &&
          detections[j].video_id == detections[i].video_id &&
          sequence_iou(detections[i].track, detections[j].track) > iou_threshold)
        removed[j] = true;
    kept.push_back(std::move(detections[i]));
  }
  return kept;
}

RecognitionHead::RecognitionHead(const RecognitionConfig& config, int conv5_channels)
    : config_(config) {
  if (config.num_classes < 1) throw std::invalid_argument("RecognitionHead: need >= 1 class");
  if (config.dropout < 0.0 || config.dropout >= 1.0)
    throw std::invalid_argument("RecognitionHead: dropout must be in [0, 1)");
  const int in = conv5_channels * config.spec.depth * config.spec.height * config.spec.width;
  fc6 = Linear(in, config.fc_dim);
  fc7 = Linear(config.fc_dim, config.fc_dim);
  cls = Linear(config.fc_dim, config.num_classes + 1);
}

void RecognitionHead::initialize(Rng& rng) {
  Rng r6 = rng.substream("recog.fc6"), r7 = rng.substream("recog.fc7"),
      rc = rng.substream("recog.cls");
  const double s6 = std::sqrt(2.0 / fc6.in_dim()), s7 = std::sqrt(2.0 / fc7.in_dim());
  for (double& v : fc6.weight.data) v = s6 * r6.normal();
  for (double& v : fc7.weight.data) v = s7 * r7.normal();
  for (double& v : cls.weight.data) v = 0.01 * rc.normal();
  fc6.bias.zero();
  fc7.bias.zero();
  cls.bias.zero();
}

std::vector<Tensor*> RecognitionHead::params() {
  return {&fc6.weight, &fc6.bias, &fc7.weight, &fc7.bias, &cls.weight, &cls.bias};
}

std::vector<const Tensor*> RecognitionHead::params() const {
  return {&fc6.weight, &fc6.bias, &fc7.weight, &fc7.bias, &cls.weight, &cls.bias};
}

std::vector<std::string> RecognitionHead::param_names() const {
  return {"recog.fc6.weight", "recog.fc6.bias", "recog.fc7.weight",
          "recog.fc7.bias",   "recog.cls.weight", "recog.cls.bias"};
}

FeatureCube stack_clips(const std::vector<FeatureCube>& clip_conv5) {
  if (clip_conv5.empty()) throw std::invalid_argument("stack_clips: no clips");
  const CubeShape s = clip_conv5[0].shape();
  int depth = 0;
  for (const FeatureCube& c : clip_conv5) {
    if (c.channels() != s.channels || c.height() != s.height || c.width() != s.width)
      throw ShapeError("stack_clips: clip cubes differ in shape");
    depth += c.depth();
  }
  FeatureCube out({s.channels, depth, s.height, s.width});
  const std::size_t plane = s.plane();
  for (int ch = 0; ch < s.channels; ++ch) {
    int d0 = 0;
    for (const FeatureCube& c : clip_conv5) {
      const double* src = c.data().data() + c.index(ch, 0, 0, 0);
      std::copy(src, src + plane * c.depth(), out.data().data() + out.index(ch, d0, 0, 0));
      d0 += c.depth();
    }
  }
  return out;
}

TubeOfInterest sequence_tube(const std::vector<std::vector<TubeProposal>>& clips,
                             const LinkedSequence& seq, const FrameGeometry& geometry) {
  if (seq.tube_indices.size() != clips.size())
    throw std::invalid_argument("sequence_tube: sequence does not span every clip");
  TubeOfInterest t;
  for (std::size_t c = 0; c < clips.size(); ++c) {
    const TubeProposal& p = clips[c].at(static_cast<std::size_t>(seq.tube_indices[c]));
    t.boxes.push_back(clamp_box(geometry.to_grid(hull(p.frame_boxes)), geometry.grid_width,
                                geometry.grid_height));
  }
  return t;
}

RecognitionTrace recognition_forward(const RecognitionHead& head, const FeatureCube& stacked,
                                     const TubeOfInterest& tube, Rng* dropout_rng) {
  RecognitionTrace t;
  t.pooled = toi_pool_forward(stacked, tube, head.config().spec);
  if (static_cast<int>(t.pooled.output.size()) != head.input_dim())
    throw ShapeError("recognition_forward: pooled size does not match fc6");
  t.h6 = relu_forward(fc_forward(head.fc6, t.pooled.output.values()));
  t.h7 = relu_forward(fc_forward(head.fc7, t.h6));
  std::vector<double> x = t.h7;
  if (dropout_rng != nullptr && head.config().dropout > 0.0) {
    const double p = head.config().dropout;
    t.keep.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      t.keep[i] = dropout_rng->uniform() < p ? 0.0 : 1.0 / (1.0 - p);
      x[i] *= t.keep[i];
    }
  }
  t.logits = fc_forward(head.cls, x);
  t.probs = softmax(t.logits);
  return t;
}

FeatureCube recognition_backward(const RecognitionHead& head, const RecognitionTrace& trace,
                                 std::span<const double> grad_logits, RecognitionHead& grads,
                                 bool want_input_grad) {
  std::vector<double> x = trace.h7;
  if (!trace.keep.empty())
    for (std::size_t i = 0; i < x.size(); ++i) x[i] *= trace.keep[i];
  std::vector<double> g7(x.size()), g6(trace.h6.size()),
      gin(want_input_grad ? trace.pooled.output.size() : 0);
  fc_backward_accumulate(head.cls, x, grad_logits, g7, grads.cls.weight, grads.cls.bias);
  for (std::size_t i = 0; i < g7.size(); ++i) {
    if (!trace.keep.empty()) g7[i] *= trace.keep[i];
    if (trace.h7[i] <= 0.0) g7[i] = 0.0;
  }
  fc_backward_accumulate(head.fc7, trace.h6, g7, g6, grads.fc7.weight, grads.fc7.bias);
  for (std::size_t i = 0; i < g6.size(); ++i)
    if (trace.h6[i] <= 0.0) g6[i] = 0.0;
  fc_backward_accumulate(head.fc6, trace.pooled.output.values(), g6, gin, grads.fc6.weight,
                         grads.fc6.bias);
  if (!want_input_grad) return {};
  return toi_pool_backward(FeatureCube(trace.pooled.output.shape(), std::move(gin)),
                           trace.pooled.argmax, trace.pooled.argmax.input_shape);
}

std::vector<double> classify_sequence(const std::vector<std::vector<TubeProposal>>& clips,
                                      const LinkedSequence& seq,
                                      const std::vector<FeatureCube>& clip_conv5,
                                      const RecognitionHead& head, const FrameGeometry& geometry) {
  if (clip_conv5.size() != clips.size())
    throw std::invalid_argument("classify_sequence: " + std::to_string(clip_conv5.size()) +
                                " feature cubes for " + std::to_string(clips.size()) + " clips");
  const FeatureCube stacked = stack_clips(clip_conv5);
  return recognition_forward(head, stacked, sequence_tube(clips, seq, geometry)).probs;
}

std::vector<double> classify_video(const std::vector<FeatureCube>& clip_conv5,
                                   const RecognitionHead& head) {
  const FeatureCube stacked = stack_clips(clip_conv5);
  const Box2D full{0.0, 0.0, static_cast<double>(stacked.width()),
                   static_cast<double>(stacked.height())};
  const TubeOfInterest tube{std::vector<Box2D>(static_cast<std::size_t>(stacked.depth()), full)};
  return recognition_forward(head, stacked, tube).probs;
}

}  // namespace tcnn
