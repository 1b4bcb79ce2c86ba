#include "tcnn/linking.hpp"

#include <algorithm>
#include <stdexcept>

namespace tcnn {

namespace {

struct Partial {
  std::vector<int> indices;
  double actionness_sum = 0.0;
  double overlap_sum = 0.0;
  double rank = 0.0;
};

bool better(const Partial& a, const Partial& b) {
  if (a.rank != b.rank) return a.rank > b.rank;
  return a.indices < b.indices;
}

double combine(double actionness_sum, double overlap_sum, std::size_t m) {
  const double first = actionness_sum / static_cast<double>(m);
  if (m == 1) return first;
  return first + overlap_sum / static_cast<double>(m - 1);
}

}  // namespace

double sequence_score(std::span<const double> actionness, std::span<const double> overlaps) {
  if (actionness.empty()) throw std::invalid_argument("sequence_score: no clips");
  if (overlaps.size() + 1 != actionness.size())
    throw std::invalid_argument("sequence_score: expected " +
                                std::to_string(actionness.size() - 1) + " overlaps, got " +
                                std::to_string(overlaps.size()));
  double a = 0.0, o = 0.0;
  for (double v : actionness) a += v;
  for (double v : overlaps) o += v;
  return combine(a, o, actionness.size());
}

double transition_overlap(const TubeProposal& a, const TubeProposal& b) {
  return iou(a.frame_boxes[kClipLength - 1], b.frame_boxes[0]);
}

double chain_score(const std::vector<std::vector<TubeProposal>>& clips,
                   std::span<const int> indices) {
  if (indices.size() != clips.size())
    throw std::invalid_argument("chain_score: one index per clip required");
  std::vector<double> a, o;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    a.push_back(clips[i].at(static_cast<std::size_t>(indices[i])).actionness);
    if (i > 0)
      o.push_back(transition_overlap(clips[i - 1][static_cast<std::size_t>(indices[i - 1])],
                                     clips[i][static_cast<std::size_t>(indices[i])]));
  }
  return sequence_score(a, o);
}

std::vector<LinkedSequence> top_k_sequences(const std::vector<std::vector<TubeProposal>>& clips,
                                            std::size_t k) {
  if (clips.empty()) throw std::invalid_argument("top_k_sequences: no clips");
  for (std::size_t i = 0; i < clips.size(); ++i)
    if (clips[i].empty())
      throw std::invalid_argument("top_k_sequences: clip " + std::to_string(i) +
                                  " has no proposals");
  if (k == 0) return {};
  const std::size_t m = clips.size();

  // Partial sums are accumulated left to right, the same order
  // sequence_score uses, so final scores are bit-identical to it.
  std::vector<std::vector<Partial>> frontier(clips[0].size());
  for (std::size_t p = 0; p < clips[0].size(); ++p) {
    Partial s;
    s.indices = {static_cast<int>(p)};
    s.actionness_sum = clips[0][p].actionness;
    s.rank = combine(s.actionness_sum, 0.0, m);
    frontier[p].push_back(std::move(s));
  }
  for (std::size_t j = 1; j < m; ++j) {
    std::vector<std::vector<Partial>> next(clips[j].size());
    for (std::size_t q = 0; q < clips[j].size(); ++q) {
      std::vector<Partial> cands;
      for (std::size_t p = 0; p < clips[j - 1].size(); ++p) {
        const double ov = transition_overlap(clips[j - 1][p], clips[j][q]);
        for (const Partial& prev : frontier[p]) {
          Partial s;
          s.indices = prev.indices;
          s.indices.push_back(static_cast<int>(q));
          s.actionness_sum = prev.actionness_sum + clips[j][q].actionness;
          s.overlap_sum = prev.overlap_sum + ov;
          s.rank = combine(s.actionness_sum, s.overlap_sum, m);
          cands.push_back(std::move(s));
        }
      }
      const std::size_t keep = std::min(k, cands.size());
      std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep),
                        cands.end(), better);
      cands.resize(keep);
      next[q] = std::move(cands);
    }
    frontier = std::move(next);
  }

  std::vector<Partial> all;
  for (auto& f : frontier)
    for (auto& s : f) all.push_back(std::move(s));
  const std::size_t keep = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                    better);
  std::vector<LinkedSequence> out;
  for (std::size_t i = 0; i < keep; ++i) out.push_back({std::move(all[i].indices), all[i].rank});
  return out;
}

}  // namespace tcnn
