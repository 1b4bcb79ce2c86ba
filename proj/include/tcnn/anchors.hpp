#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "tcnn/geometry.hpp"

namespace tcnn {

/// Anchor size as a fraction of the frame size.
struct AnchorBox {
  double width = 0.0;
  double height = 0.0;
  friend bool operator==(const AnchorBox&, const AnchorBox&) = default;
};

/// Sorted by area (ascending), ties by width.
struct AnchorSet {
  std::vector<AnchorBox> anchors;
  std::size_t size() const { return anchors.size(); }
};

class InsufficientBoxesError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// 1 - IoU of two boxes placed on a common center.
double concentric_distance(const AnchorBox& a, const AnchorBox& b);

struct KMeansTrace {
  /// Mean distance after each completed iteration (assignment + update).
  std::vector<double> objective;
  int iterations = 0;
  bool converged = false;
};

/// k-means over (width, height) pairs with the 1 - IoU distance, k-means++
/// seeding and at most `max_iterations` rounds. Stops early once assignments
/// stop changing.
AnchorSet kmeans_anchors(const std::vector<AnchorBox>& boxes, int k, std::uint64_t seed,
                         KMeansTrace* trace = nullptr, int max_iterations = 100);

double kmeans_objective(const std::vector<AnchorBox>& boxes, const std::vector<AnchorBox>& centroids);

}  // namespace tcnn
