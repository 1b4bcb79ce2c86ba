#pragma once

#include <map>
#include <string>
#include <vector>

#include "tcnn/annotations.hpp"
#include "tcnn/detection.hpp"

namespace tcnn {

struct PrPoint {
  double confidence = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct ClassAp {
  int class_id = 0;
  double ap = 0.0;
  int num_ground_truth = 0;
  std::vector<PrPoint> curve;
};

struct MapResult {
  /// Classes that have ground truth, ascending by id.
  std::vector<ClassAp> classes;
  /// Classes that only appear in detections; their AP is undefined.
  std::vector<int> excluded;
  double mean_ap = 0.0;
};

/// Area under the precision-recall polyline after making precision
/// non-increasing in recall (all-point interpolation). `tp` flags are in
/// ranked order.
double average_precision(const std::vector<bool>& tp, int num_ground_truth,
                         std::vector<PrPoint>* curve = nullptr,
                         const std::vector<double>* confidences = nullptr);

/// Per-frame boxes ranked by confidence; a box is a true positive when its
/// best IoU against a still-unmatched same-class ground-truth box on that
/// frame of that video is at least `alpha`. Equal confidences keep detection
/// order, then frame order.
MapResult frame_map(const std::vector<Detection>& detections,
                    const std::vector<VideoAnnotation>& annotations, double alpha);

/// Whole-track matching by sequence IoU against ground-truth tubes.
MapResult video_map(const std::vector<Detection>& detections,
                    const std::vector<VideoAnnotation>& annotations, double alpha);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocResult {
  std::vector<RocPoint> curve;
  /// Area under the curve up to fpr_max, divided by fpr_max.
  double auc = 0.0;
};

/// Detections of all classes are pooled and matched class-aware to
/// ground-truth tubes by sequence IoU >= alpha. TPR is the matched fraction of
/// tubes, FPR the false positives per video. One curve point per distinct
/// confidence, starting at (0, 0); the curve is cut at `fpr_max` (linear
/// interpolation) or extended flat to it.
RocResult roc_auc(const std::vector<Detection>& detections,
                  const std::vector<VideoAnnotation>& annotations, double alpha,
                  double fpr_max = 0.6);

/// Fraction of videos whose predicted class equals the label.
double video_classification_accuracy(const std::map<std::string, int>& predictions,
                                     const std::map<std::string, int>& labels);

}  // namespace tcnn
