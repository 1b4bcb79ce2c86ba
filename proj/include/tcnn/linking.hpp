#pragma once

#include <span>
#include <vector>

#include "tcnn/tpn.hpp"

namespace tcnn {

/// One proposal index per clip and the chain score.
struct LinkedSequence {
  std::vector<int> tube_indices;
  double score = 0.0;
  friend bool operator==(const LinkedSequence&, const LinkedSequence&) = default;
};

/// Mean actionness plus mean transition overlap. A single clip has no
/// transitions, so its score is the actionness alone.
double sequence_score(std::span<const double> actionness, std::span<const double> overlaps);

/// IoU of the last frame box of `a` with the first frame box of `b`.
double transition_overlap(const TubeProposal& a, const TubeProposal& b);

/// Score of an explicit chain of indices into `clips`.
double chain_score(const std::vector<std::vector<TubeProposal>>& clips,
                   std::span<const int> indices);

/// The K best chains (one proposal per clip), best first; equal scores are
/// ordered by their index lists, smallest first. Exact: keeps the K best
/// partial chains ending at each proposal, which is sufficient because the
/// score adds per-node and per-edge terms.
std::vector<LinkedSequence> top_k_sequences(const std::vector<std::vector<TubeProposal>>& clips,
                                            std::size_t k);

}  // namespace tcnn
