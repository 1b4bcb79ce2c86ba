#include "tcnn/annotations.hpp"

#include <map>

namespace tcnn {

int VideoAnnotation::video_class() const {
  for (const auto& f : frames)
    if (!f.empty()) return f.front().class_id;
  return 0;
}

std::vector<GroundTruthTube> ground_truth_tubes(const VideoAnnotation& video) {
  std::vector<GroundTruthTube> done;
  // Open tubes keyed by (class, slot within the frame).
  std::map<std::pair<int, int>, GroundTruthTube> open;
  for (int f = 0; f < video.num_frames(); ++f) {
    std::map<int, int> slot;
    std::map<std::pair<int, int>, GroundTruthTube> still;
    for (const FrameLabel& l : video.frames[f]) {
      const std::pair<int, int> key{l.class_id, slot[l.class_id]++};
      auto it = open.find(key);
      GroundTruthTube t = it != open.end() ? std::move(it->second) : GroundTruthTube{l.class_id, {}};
      if (it != open.end()) open.erase(it);
      t.track.push_back({f, l.box});
      still.emplace(key, std::move(t));
    }
    for (auto& [k, t] : open) done.push_back(std::move(t));
    open = std::move(still);
  }
  for (auto& [k, t] : open) done.push_back(std::move(t));
  return done;
}

}  // namespace tcnn
