#pragma once

// Brute-force reference scorers and random instance generators shared by the
// unit tests and the acceptance checks. Each one is written from the
// definitions with plain loops and never calls the library routine it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "support/oracles.hpp"
#include "tcnn/anchors.hpp"
#include "tcnn/eval.hpp"
#include "tcnn/linking.hpp"
#include "tcnn/toi_pool.hpp"
#include "tcnn/tpn.hpp"

namespace tcnn::testing {

// ---------------------------------------------------------------------------
// Linking.

inline TubeProposal random_tube_proposal(Rng& rng) {
  TubeProposal t;
  t.actionness = rng.uniform();
  for (Box2D& b : t.frame_boxes) b = random_box(rng, 20, 20);
  return t;
}

struct Enumerated {
  std::vector<int> indices;
  double score;
};

// Every chain, scored with plain arithmetic, sorted best first.
inline std::vector<Enumerated> enumerate_all(const std::vector<std::vector<TubeProposal>>& clips) {
  std::vector<Enumerated> all;
  std::vector<int> idx(clips.size(), 0);
  const std::size_t m = clips.size();
  while (true) {
    double a = 0, o = 0;
    for (std::size_t i = 0; i < m; ++i) {
      a += clips[i][idx[i]].actionness;
      if (i > 0) o += naive_iou(clips[i - 1][idx[i - 1]].frame_boxes[7], clips[i][idx[i]].frame_boxes[0]);
    }
    all.push_back({idx, a / m + (m > 1 ? o / (m - 1) : 0.0)});
    std::size_t k = 0;
    while (k < m && ++idx[k] == static_cast<int>(clips[k].size())) idx[k++] = 0;
    if (k == m) break;
  }
  std::sort(all.begin(), all.end(), [](const Enumerated& x, const Enumerated& y) {
    if (x.score != y.score) return x.score > y.score;
    return x.indices < y.indices;
  });
  return all;
}

// ---------------------------------------------------------------------------
// Metrics.

inline Track track_run(int first, int last, Box2D box) {
  Track t;
  for (int f = first; f <= last; ++f) t.push_back({f, box});
  return t;
}

inline Box2D jitter(const Box2D& b, Rng& rng, double s) {
  return {b.x1 + rng.uniform(-s, s), b.y1 + rng.uniform(-s, s), b.x2 + rng.uniform(-s, s),
          b.y2 + rng.uniform(-s, s)};
}

struct MetricInstance {
  std::vector<VideoAnnotation> annotations;
  std::vector<Detection> detections;
};

inline MetricInstance random_metric_instance(Rng& rng) {
  MetricInstance in;
  const int nv = 1 + static_cast<int>(rng.below(3));
  for (int v = 0; v < nv; ++v) {
    const int frames = 4 + static_cast<int>(rng.below(9));
    VideoAnnotation a{"v" + std::to_string(v), std::vector<std::vector<FrameLabel>>(frames)};
    const int runs = static_cast<int>(rng.below(3));
    for (int r = 0; r < runs; ++r) {
      const int cls = 1 + static_cast<int>(rng.below(3));
      const int first = static_cast<int>(rng.below(frames));
      const int last = first + static_cast<int>(rng.below(frames - first));
      Box2D b = random_box(rng, 20, 20);
      b.x2 += 2;
      b.y2 += 2;
      for (int f = first; f <= last; ++f) a.frames[f].push_back({cls, jitter(b, rng, 0.5)});
    }
    in.annotations.push_back(std::move(a));
  }
  const int nd = static_cast<int>(rng.below(51));
  for (int d = 0; d < nd; ++d) {
    const VideoAnnotation& a = in.annotations[rng.below(in.annotations.size())];
    Detection det;
    det.video_id = a.video_id;
    det.class_id = 1 + static_cast<int>(rng.below(4));
    // Quantized confidences produce ties.
    det.confidence = rng.bernoulli(0.5) ? std::round(rng.uniform() * 5) / 5 : rng.uniform();
    const auto tubes = ground_truth_tubes(a);
    if (!tubes.empty() && rng.bernoulli(0.7)) {
      const auto& g = tubes[rng.below(tubes.size())].track;
      if (rng.bernoulli(0.6)) det.class_id = tubes[0].class_id;
      for (const FrameBox& fb : g)
        if (rng.bernoulli(0.85)) det.track.push_back({fb.frame, jitter(fb.box, rng, 3.0)});
    } else {
      const int first = static_cast<int>(rng.below(a.num_frames()));
      const Box2D b = random_box(rng, 20, 20);
      for (int f = first; f < a.num_frames() && f < first + 4; ++f) det.track.push_back({f, b});
    }
    in.detections.push_back(std::move(det));
  }
  return in;
}

// AP as the sum, over true positives in rank order, of the best precision
// reachable at that recall or later, divided by the ground-truth count.
inline double reference_ap(const std::vector<bool>& tp, int npos) {
  double ap = 0.0;
  int hits = 0;
  for (std::size_t k = 0; k < tp.size(); ++k) {
    if (!tp[k]) continue;
    ++hits;
    double best = 0.0;
    int h = hits - 1;
    for (std::size_t j = k; j < tp.size(); ++j) {
      h += tp[j] ? 1 : 0;
      best = std::max(best, static_cast<double>(h) / (j + 1));
    }
    ap += best / npos;
  }
  return ap;
}

inline std::map<int, double> reference_frame_ap(const MetricInstance& in, double alpha) {
  std::map<int, double> out;
  std::set<int> classes;
  for (const auto& v : in.annotations)
    for (const auto& f : v.frames)
      for (const auto& l : f) classes.insert(l.class_id);
  for (int c : classes) {
    // (negated confidence, detection index, frame) sorts into rank order.
    std::vector<std::tuple<double, std::size_t, int>> ranked;
    for (std::size_t i = 0; i < in.detections.size(); ++i)
      if (in.detections[i].class_id == c)
        for (const FrameBox& fb : in.detections[i].track)
          ranked.emplace_back(-in.detections[i].confidence, i, fb.frame);
    std::sort(ranked.begin(), ranked.end());
    std::set<std::tuple<std::string, int, int>> used;
    int npos = 0;
    for (const auto& v : in.annotations)
      for (const auto& f : v.frames)
        for (const auto& l : f) npos += l.class_id == c;
    std::vector<bool> tp;
    for (const auto& [nc, i, frame] : ranked) {
      const Detection& d = in.detections[i];
      Box2D box{};
      for (const FrameBox& fb : d.track)
        if (fb.frame == frame) box = fb.box;
      const VideoAnnotation* v = nullptr;
      for (const auto& a : in.annotations)
        if (a.video_id == d.video_id) v = &a;
      double best = -1;
      int best_k = -1;
      if (v && frame < v->num_frames()) {
        int k = 0;
        for (const auto& l : v->frames[frame]) {
          if (l.class_id != c) continue;
          if (!used.count({d.video_id, frame, k}) && naive_iou(box, l.box) > best) {
            best = naive_iou(box, l.box);
            best_k = k;
          }
          ++k;
        }
      }
      const bool hit = best_k >= 0 && best >= alpha;
      if (hit) used.insert({d.video_id, frame, best_k});
      tp.push_back(hit);
    }
    out[c] = reference_ap(tp, npos);
  }
  return out;
}

inline double reference_tube_iou(const Track& a, const Track& b) {
  std::map<int, std::pair<const Box2D*, const Box2D*>> m;
  for (const auto& fb : a) m[fb.frame].first = &fb.box;
  for (const auto& fb : b) m[fb.frame].second = &fb.box;
  if (m.empty()) return 0.0;
  double s = 0;
  for (auto& [f, p] : m)
    if (p.first && p.second) s += naive_iou(*p.first, *p.second);
  return s / m.size();
}

// Greedy tube matching of the detections (in rank order) passing `keep`.
inline std::vector<bool> reference_tube_matches(const MetricInstance& in, const std::vector<std::size_t>& ranked,
                                         double alpha) {
  std::set<std::pair<std::string, std::size_t>> used;
  std::vector<bool> tp;
  for (std::size_t i : ranked) {
    const Detection& d = in.detections[i];
    std::vector<GroundTruthTube> tubes;
    for (const auto& a : in.annotations)
      if (a.video_id == d.video_id) tubes = ground_truth_tubes(a);
    double best = -1;
    std::size_t best_k = 0;
    bool any = false;
    for (std::size_t k = 0; k < tubes.size(); ++k) {
      if (tubes[k].class_id != d.class_id || used.count({d.video_id, k})) continue;
      const double o = reference_tube_iou(d.track, tubes[k].track);
      if (o > best) {
        best = o;
        best_k = k;
        any = true;
      }
    }
    const bool hit = any && best >= alpha;
    if (hit) used.insert({d.video_id, best_k});
    tp.push_back(hit);
  }
  return tp;
}

inline std::vector<std::size_t> ranked_indices(const MetricInstance& in, int cls) {
  std::vector<std::pair<double, std::size_t>> r;
  for (std::size_t i = 0; i < in.detections.size(); ++i)
    if (cls < 0 || in.detections[i].class_id == cls) r.emplace_back(-in.detections[i].confidence, i);
  std::sort(r.begin(), r.end());
  std::vector<std::size_t> out;
  for (auto& p : r) out.push_back(p.second);
  return out;
}

inline std::map<int, double> reference_video_ap(const MetricInstance& in, double alpha) {
  std::map<int, double> out;
  std::map<int, int> npos;
  for (const auto& v : in.annotations)
    for (const auto& t : ground_truth_tubes(v)) npos[t.class_id]++;
  for (auto [c, n] : npos) out[c] = reference_ap(reference_tube_matches(in, ranked_indices(in, c), alpha), n);
  return out;
}

inline double reference_auc(const MetricInstance& in, double alpha, double fpr_max) {
  int total = 0;
  for (const auto& v : in.annotations) total += ground_truth_tubes(v).size();
  std::set<double, std::greater<>> thresholds;
  for (const auto& d : in.detections) thresholds.insert(d.confidence);
  std::vector<std::pair<double, double>> pts{{0.0, 0.0}};
  const auto ranked = ranked_indices(in, -1);
  for (double t : thresholds) {
    std::vector<std::size_t> sub;
    for (std::size_t i : ranked)
      if (in.detections[i].confidence >= t) sub.push_back(i);
    const auto tp = reference_tube_matches(in, sub, alpha);
    const double hits = std::count(tp.begin(), tp.end(), true);
    pts.emplace_back((tp.size() - hits) / in.annotations.size(), hits / total);
  }
  if (pts.back().first < fpr_max) pts.emplace_back(fpr_max, pts.back().second);
  double area = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const auto [x0, y0] = pts[i - 1];
    const auto [x1, y1] = pts[i];
    const double lo = x0, hi = std::min(x1, fpr_max);
    if (hi <= lo) continue;
    auto at = [&](double x) { return x1 == x0 ? y1 : y0 + (y1 - y0) * (x - x0) / (x1 - x0); };
    area += (hi - lo) * (at(lo) + at(hi)) / 2;
  }
  return area / fpr_max;
}

// ---------------------------------------------------------------------------
// Proposal labels.

// Loop form of the two positive rules.
inline std::vector<ProposalLabel> oracle_labels(const std::vector<Box2D>& props,
                                         const std::vector<Box2D>& gts) {
  std::vector<ProposalLabel> out(props.size(), ProposalLabel::kNegative);
  for (const Box2D& g : gts) {
    double best = 0.0;
    for (const Box2D& p : props) best = std::max(best, naive_iou(p, g));
    bool any = false;
    for (std::size_t i = 0; i < props.size(); ++i) {
      const double v = naive_iou(props[i], g);
      if (v > 0.7 || (best > 0.0 && v == best)) {
        out[i] = ProposalLabel::kPositive;
        any = true;
      }
    }
    if (!any && !props.empty()) out[0] = ProposalLabel::kPositive;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Anchors and ToI pooling.

inline std::vector<AnchorBox> log_uniform_boxes(int n, Rng& rng) {
  std::vector<AnchorBox> boxes;
  for (int i = 0; i < n; ++i)
    boxes.push_back({std::exp(rng.uniform(std::log(0.05), 0.0)),
                     std::exp(rng.uniform(std::log(0.05), 0.0))});
  return boxes;
}

inline TubeOfInterest random_toi(int depth, int height, int width, Rng& rng) {
  TubeOfInterest t;
  for (int f = 0; f < depth; ++f) t.boxes.push_back(random_box(rng, width, height));
  return t;
}

inline TubeOfInterest full_tube(const CubeShape& s) {
  return {std::vector<Box2D>(s.depth, Box2D{0, 0, double(s.width), double(s.height)})};
}

}  // namespace tcnn::testing
