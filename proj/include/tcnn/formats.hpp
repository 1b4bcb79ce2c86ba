#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tcnn/anchors.hpp"
#include "tcnn/annotations.hpp"
#include "tcnn/detection.hpp"
#include "tcnn/eval.hpp"
#include "tcnn/training.hpp"

namespace tcnn {

// Annotation text: one line per labeled box or background frame,
//   video_id frame_idx class_id x1 y1 x2 y2
//   video_id frame_idx -1
// Frames of a video are contiguous from 0. Coordinates print as %.6f.
std::string format_annotations(const std::vector<VideoAnnotation>& videos);
std::vector<VideoAnnotation> parse_annotations(const std::string& text);

// Anchor file: one "%.6f %.6f" (width height, frame fractions) line per anchor.
std::string format_anchors(const AnchorSet& anchors);
AnchorSet parse_anchors(const std::string& text);

// Detection file: per detection a header line
//   video_id class_id confidence n_frames
// then n_frames lines "frame x1 y1 x2 y2". Reals print as %.6f. Writing
// orders detections by video id, then confidence (highest first).
std::string format_detections(std::vector<Detection> detections);
std::vector<Detection> parse_detections(const std::string& text);

/// A dataset directory holds annotations.txt and videos/<video_id>.tcnt
/// (3 x T x H x W cubes). Videos come back in annotation-file order.
void save_dataset(const std::filesystem::path& dir, const std::vector<LabeledVideo>& videos);
std::vector<LabeledVideo> load_dataset(const std::filesystem::path& dir);

/// key=value lines; '#' starts a comment; surrounding blanks are trimmed.
using KeyValues = std::map<std::string, std::string>;
KeyValues parse_key_values(const std::string& text);
std::string format_key_values(const KeyValues& kv);

/// stage,batch,lr,actionness,regression,classification,total
std::string format_loss_csv(const std::vector<LossRecord>& losses);
std::vector<LossRecord> parse_loss_csv(const std::string& text);

/// metric,alpha,class_id,ap,num_ground_truth with one row per class and a
/// final row per metric whose class_id is "mean".
std::string format_map_csv(const std::string& metric, double alpha, const MapResult& result);

}  // namespace tcnn
