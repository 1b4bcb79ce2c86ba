#pragma once

#include <vector>

#include "tcnn/annotations.hpp"
#include "tcnn/detection.hpp"
#include "tcnn/linking.hpp"
#include "tcnn/model.hpp"

namespace tcnn {

struct DetectConfig {
  double actionness_threshold = 0.5;
  /// Box proposals per clip handed to regression and linking.
  std::size_t proposals_per_clip = 40;
  /// Linked sequences per video.
  std::size_t k = 40;
  double nms_threshold = 0.5;
};

/// Refined tube proposals of one clip: score every anchor, keep the best,
/// regress each over the clip's frames.
std::vector<TubeProposal> clip_tube_proposals(const TpnHead& head, const AnchorSet& anchors,
                                              const FrameGeometry& geometry,
                                              const BackboneFeatures& features, int clip_index,
                                              const DetectConfig& config);

/// A video split into test-mode clips, with the TPN's tube proposals per
/// clip and the recognition backbone's conv5 per clip.
struct VideoProposals {
  int num_frames = 0;
  std::vector<std::vector<TubeProposal>> clips;
  std::vector<FeatureCube> conv5;
};

/// `tpn_backbone` / `head` produce the proposals; `recog_backbone` the conv5
/// cubes the classifier reads. Identical backbones are evaluated once.
VideoProposals propose_video(const Backbone& tpn_backbone, const TpnHead& head,
                             const Backbone& recog_backbone, const AnchorSet& anchors,
                             const FrameGeometry& geometry, const FeatureCube& frames,
                             const DetectConfig& config);

/// Links the proposals, classifies each sequence and keeps, per class, the
/// survivors of sequence NMS. Confidence is the class probability.
std::vector<Detection> detect_from_proposals(const std::string& video_id,
                                             const VideoProposals& proposals,
                                             const RecognitionHead& recognition,
                                             const FrameGeometry& geometry,
                                             const DetectConfig& config);

std::vector<Detection> detect_video(const Model& model, const Video& video,
                                    const DetectConfig& config);
/// Same, with `head` standing in for the model's TPN head.
std::vector<Detection> detect_video(const Model& model, const TpnHead& head, const Video& video,
                                    const DetectConfig& config);

/// Detections of every video, ordered by video (input order) then
/// confidence, highest first.
std::vector<Detection> detect_all(const Model& model, const std::vector<Video>& videos,
                                  const DetectConfig& config, int threads = 1);

}  // namespace tcnn
