#include "tcnn/eval.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>

namespace tcnn {

namespace {

std::vector<std::size_t> rank_by_confidence(const std::vector<Detection>& detections) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].confidence > detections[b].confidence;
  });
  return order;
}

std::set<int> annotated_classes(const std::vector<VideoAnnotation>& annotations) {
  std::set<int> out;
  for (const VideoAnnotation& v : annotations)
    for (const auto& f : v.frames)
      for (const FrameLabel& l : f) out.insert(l.class_id);
  return out;
}

MapResult summarize(std::vector<ClassAp> classes, const std::set<int>& detected,
                    const std::set<int>& annotated) {
  MapResult r;
  r.classes = std::move(classes);
  for (int c : detected)
    if (!annotated.count(c)) r.excluded.push_back(c);
  if (!r.classes.empty()) {
    double s = 0.0;
    for (const ClassAp& c : r.classes) s += c.ap;
    r.mean_ap = s / static_cast<double>(r.classes.size());
  }
  return r;
}

std::map<std::string, std::size_t> index_videos(const std::vector<VideoAnnotation>& annotations) {
  std::map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < annotations.size(); ++i)
    if (!idx.emplace(annotations[i].video_id, i).second)
      throw std::invalid_argument("duplicate annotation for video '" + annotations[i].video_id +
                                  "'");
  return idx;
}

}  // namespace

double average_precision(const std::vector<bool>& tp, int num_ground_truth,
                         std::vector<PrPoint>* curve, const std::vector<double>* confidences) {
  if (num_ground_truth <= 0) throw std::invalid_argument("average_precision: no ground truth");
  std::vector<double> prec(tp.size()), rec(tp.size());
  int ntp = 0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    ntp += tp[i] ? 1 : 0;
    prec[i] = static_cast<double>(ntp) / static_cast<double>(i + 1);
    rec[i] = static_cast<double>(ntp) / num_ground_truth;
    if (curve != nullptr)
      curve->push_back({confidences != nullptr ? (*confidences)[i] : 0.0, prec[i], rec[i]});
  }
  // Envelope from the right, then sum rectangles where recall moves.
  std::vector<double> env(prec);
  for (std::size_t i = env.size(); i-- > 1;) env[i - 1] = std::max(env[i - 1], env[i]);
  double ap = 0.0, prev_rec = 0.0;
  for (std::size_t i = 0; i < rec.size(); ++i) {
    if (rec[i] != prev_rec) ap += (rec[i] - prev_rec) * env[i];
    prev_rec = rec[i];
  }
  return ap;
}

MapResult frame_map(const std::vector<Detection>& detections,
                    const std::vector<VideoAnnotation>& annotations, double alpha) {
  const auto videos = index_videos(annotations);
  const std::set<int> annotated = annotated_classes(annotations);
  std::set<int> detected;
  for (const Detection& d : detections) detected.insert(d.class_id);
  const std::vector<std::size_t> order = rank_by_confidence(detections);

  std::vector<ClassAp> out;
  for (int c : annotated) {
    int npos = 0;
    // matched[video][frame][k] for the class-c boxes of that frame.
    std::vector<std::vector<std::vector<bool>>> matched(annotations.size());
    for (std::size_t v = 0; v < annotations.size(); ++v) {
      matched[v].resize(annotations[v].frames.size());
      for (std::size_t f = 0; f < annotations[v].frames.size(); ++f)
        for (const FrameLabel& l : annotations[v].frames[f])
          if (l.class_id == c) {
            matched[v][f].push_back(false);
            ++npos;
          }
    }
    std::vector<bool> tp;
    std::vector<double> conf;
    for (std::size_t di : order) {
      const Detection& d = detections[di];
      if (d.class_id != c) continue;
      const auto vit = videos.find(d.video_id);
      for (const FrameBox& fb : d.track) {
        conf.push_back(d.confidence);
        bool hit = false;
        if (vit != videos.end() && fb.frame >= 0 &&
            fb.frame < annotations[vit->second].num_frames()) {
          const auto& labels = annotations[vit->second].frames[fb.frame];
          auto& flags = matched[vit->second][fb.frame];
          double best = -1.0;
          int best_k = -1, k = 0;
          for (const FrameLabel& l : labels) {
            if (l.class_id != c) continue;
            if (!flags[k]) {
              const double o = iou(fb.box, l.box);
              if (o > best) {
                best = o;
                best_k = k;
              }
            }
            ++k;
          }
          if (best_k >= 0 && best >= alpha) {
            flags[best_k] = true;
            hit = true;
          }
        }
        tp.push_back(hit);
      }
    }
    ClassAp ca{c, 0.0, npos, {}};
    ca.ap = average_precision(tp, npos, &ca.curve, &conf);
    out.push_back(std::move(ca));
  }
  return summarize(std::move(out), detected, annotated);
}

MapResult video_map(const std::vector<Detection>& detections,
                    const std::vector<VideoAnnotation>& annotations, double alpha) {
  const auto videos = index_videos(annotations);
  const std::set<int> annotated = annotated_classes(annotations);
  std::set<int> detected;
  for (const Detection& d : detections) detected.insert(d.class_id);
  std::vector<std::vector<GroundTruthTube>> tubes;
  for (const VideoAnnotation& v : annotations) tubes.push_back(ground_truth_tubes(v));
  const std::vector<std::size_t> order = rank_by_confidence(detections);

  std::vector<ClassAp> out;
  for (int c : annotated) {
    int npos = 0;
    std::vector<std::vector<bool>> matched(tubes.size());
    for (std::size_t v = 0; v < tubes.size(); ++v) {
      matched[v].assign(tubes[v].size(), false);
      for (const auto& t : tubes[v]) npos += t.class_id == c ? 1 : 0;
    }
    std::vector<bool> tp;
    std::vector<double> conf;
    for (std::size_t di : order) {
      const Detection& d = detections[di];
      if (d.class_id != c) continue;
      conf.push_back(d.confidence);
      bool hit = false;
      if (const auto vit = videos.find(d.video_id); vit != videos.end()) {
        const std::size_t v = vit->second;
        double best = -1.0;
        int best_k = -1;
        for (std::size_t k = 0; k < tubes[v].size(); ++k) {
          if (tubes[v][k].class_id != c || matched[v][k]) continue;
          const double o = sequence_iou(d.track, tubes[v][k].track);
          if (o > best) {
            best = o;
            best_k = static_cast<int>(k);
          }
        }
        if (best_k >= 0 && best >= alpha) {
          matched[v][best_k] = true;
          hit = true;
        }
      }
      tp.push_back(hit);
    }
    ClassAp ca{c, 0.0, npos, {}};
    ca.ap = average_precision(tp, npos, &ca.curve, &conf);
    out.push_back(std::move(ca));
  }
  return summarize(std::move(out), detected, annotated);
}

RocResult roc_auc(const std::vector<Detection>& detections,
                  const std::vector<VideoAnnotation>& annotations, double alpha, double fpr_max) {
  if (!(fpr_max > 0.0)) throw std::invalid_argument("roc_auc: fpr_max must be positive");
  const auto videos = index_videos(annotations);
  std::vector<std::vector<GroundTruthTube>> tubes;
  std::vector<std::vector<bool>> matched;
  int total = 0;
  for (const VideoAnnotation& v : annotations) {
    tubes.push_back(ground_truth_tubes(v));
    matched.emplace_back(tubes.back().size(), false);
    total += static_cast<int>(tubes.back().size());
  }
  if (total == 0) throw std::invalid_argument("roc_auc: no ground-truth tubes");
  const double num_videos = static_cast<double>(annotations.size());

  const std::vector<std::size_t> order = rank_by_confidence(detections);
  RocResult r;
  r.curve.push_back({0.0, 0.0});
  int tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Detection& d = detections[order[i]];
    bool hit = false;
    if (const auto vit = videos.find(d.video_id); vit != videos.end()) {
      const std::size_t v = vit->second;
      double best = -1.0;
      int best_k = -1;
      for (std::size_t k = 0; k < tubes[v].size(); ++k) {
        if (tubes[v][k].class_id != d.class_id || matched[v][k]) continue;
        const double o = sequence_iou(d.track, tubes[v][k].track);
        if (o > best) {
          best = o;
          best_k = static_cast<int>(k);
        }
      }
      if (best_k >= 0 && best >= alpha) {
        matched[v][best_k] = true;
        hit = true;
      }
    }
    (hit ? tp : fp) += 1;
    // One point per group of equal confidences.
    const bool group_end = i + 1 == order.size() ||
                           detections[order[i + 1]].confidence != d.confidence;
    if (group_end)
      r.curve.push_back({fp / num_videos, static_cast<double>(tp) / total});
  }

  double area = 0.0;
  for (std::size_t i = 1; i < r.curve.size(); ++i) {
    const RocPoint a = r.curve[i - 1], b = r.curve[i];
    if (a.fpr >= fpr_max) break;
    if (b.fpr <= fpr_max) {
      area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
    } else {
      const double t = (fpr_max - a.fpr) / (b.fpr - a.fpr);
      const double cut = a.tpr + t * (b.tpr - a.tpr);
      area += (fpr_max - a.fpr) * (a.tpr + cut) / 2.0;
    }
  }
  const RocPoint last = r.curve.back();
  if (last.fpr < fpr_max) area += (fpr_max - last.fpr) * last.tpr;
  r.auc = area / fpr_max;
  return r;
}

double video_classification_accuracy(const std::map<std::string, int>& predictions,
                                     const std::map<std::string, int>& labels) {
  if (labels.empty()) throw std::invalid_argument("video_classification_accuracy: no videos");
  if (predictions.size() != labels.size())
    throw std::invalid_argument("video_classification_accuracy: prediction and label sets differ");
  int correct = 0;
  for (const auto& [id, label] : labels) {
    const auto it = predictions.find(id);
    if (it == predictions.end())
      throw std::invalid_argument("video_classification_accuracy: no prediction for '" + id + "'");
    correct += it->second == label ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace tcnn
