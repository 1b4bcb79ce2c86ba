#include "tcnn/pipeline.hpp"

#include "tcnn/parallel.hpp"
#include "tcnn/synth.hpp"

namespace tcnn {

std::vector<TubeProposal> clip_tube_proposals(const TpnHead& head, const AnchorSet& anchors,
                                              const FrameGeometry& geometry,
                                              const BackboneFeatures& features, int clip_index,
                                              const DetectConfig& config) {
  const std::vector<BoxProposal> kept =
      select_proposals(score_anchors(features.conv5, anchors, head.score, 0.0),
                       config.actionness_threshold, config.proposals_per_clip);
  const ClipFeatures clip{features.skip, features.conv5, head.config().skip};
  std::vector<TubeProposal> out;
  out.reserve(kept.size());
  for (const BoxProposal& p : kept) {
    const SkipAssembly as = assemble_skip_features(clip, p.box, head);
    out.push_back(regress_boxes(regression_forward(head, as.descriptors).output, p, geometry,
                                clip_index));
  }
  return out;
}

VideoProposals propose_video(const Backbone& tpn_backbone, const TpnHead& head,
                             const Backbone& recog_backbone, const AnchorSet& anchors,
                             const FrameGeometry& geometry, const FeatureCube& frames,
                             const DetectConfig& config) {
  const bool shared = same_parameters(tpn_backbone, recog_backbone);
  VideoProposals vp;
  vp.num_frames = frames.depth();
  const std::vector<int> starts = clip_starts(frames.depth(), ClipMode::kTestNonOverlapping);
  for (std::size_t c = 0; c < starts.size(); ++c) {
    const FeatureCube clip = extract_clip(frames, starts[c]);
    BackboneFeatures f = backbone_features(tpn_backbone, clip, head.config().skip);
    vp.clips.push_back(
        clip_tube_proposals(head, anchors, geometry, f, static_cast<int>(c), config));
    vp.conv5.push_back(shared ? std::move(f.conv5)
                              : backbone_features(recog_backbone, clip, SkipSource::kNone).conv5);
  }
  return vp;
}

std::vector<Detection> detect_from_proposals(const std::string& video_id,
                                             const VideoProposals& proposals,
                                             const RecognitionHead& recognition,
                                             const FrameGeometry& geometry,
                                             const DetectConfig& config) {
  const FeatureCube stacked = stack_clips(proposals.conv5);
  std::vector<Detection> dets;
  for (const LinkedSequence& seq : top_k_sequences(proposals.clips, config.k)) {
    const std::vector<double> probs =
        recognition_forward(recognition, stacked, sequence_tube(proposals.clips, seq, geometry))
            .probs;
    const Track track = sequence_track(proposals.clips, seq, proposals.num_frames);
    for (std::size_t c = 1; c < probs.size(); ++c)
      dets.push_back({video_id, static_cast<int>(c), probs[c], track});
  }
  return nms_sequences(std::move(dets), config.nms_threshold);
}

std::vector<Detection> detect_video(const Model& model, const TpnHead& head, const Video& video,
                                    const DetectConfig& config) {
  const FrameGeometry g = model.geometry();
  const VideoProposals vp = propose_video(model.tpn_backbone, head, model.recog_backbone,
                                          model.anchors, g, video.frames, config);
  return detect_from_proposals(video.id, vp, model.recognition, g, config);
}

std::vector<Detection> detect_video(const Model& model, const Video& video,
                                    const DetectConfig& config) {
  return detect_video(model, model.tpn, video, config);
}

std::vector<Detection> detect_all(const Model& model, const std::vector<Video>& videos,
                                  const DetectConfig& config, int threads) {
  std::vector<std::vector<Detection>> per(videos.size());
  parallel_for(videos.size(), threads,
               [&](std::size_t i) { per[i] = detect_video(model, videos[i], config); });
  std::vector<Detection> all;
  for (auto& v : per) all.insert(all.end(), v.begin(), v.end());
  return all;
}

}  // namespace tcnn
