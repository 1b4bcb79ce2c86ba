#include "tcnn/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tcnn/rng.hpp"

namespace tcnn {

double concentric_distance(const AnchorBox& a, const AnchorBox& b) {
  const double inter = std::min(a.width, b.width) * std::min(a.height, b.height);
  const double uni = a.width * a.height + b.width * b.height - inter;
  if (uni <= 0.0) return 1.0;
  return 1.0 - inter / uni;
}

double kmeans_objective(const std::vector<AnchorBox>& boxes,
                        const std::vector<AnchorBox>& centroids) {
  if (boxes.empty()) return 0.0;
  double total = 0.0;
  for (const AnchorBox& b : boxes) {
    double best = std::numeric_limits<double>::infinity();
    for (const AnchorBox& c : centroids) best = std::min(best, concentric_distance(b, c));
    total += best;
  }
  return total / static_cast<double>(boxes.size());
}

namespace {

int nearest(const AnchorBox& b, const std::vector<AnchorBox>& centroids) {
  int arg = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double dist = concentric_distance(b, centroids[c]);
    if (dist < best) {
      best = dist;
      arg = static_cast<int>(c);
    }
  }
  return arg;
}

std::vector<AnchorBox> plus_plus_seed(const std::vector<AnchorBox>& boxes, int k, Rng& rng) {
  std::vector<AnchorBox> centroids;
  centroids.push_back(boxes[rng.below(boxes.size())]);
  std::vector<double> d2(boxes.size());
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const AnchorBox& c : centroids) best = std::min(best, concentric_distance(boxes[i], c));
      d2[i] = best * best;
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total <= 0.0) {
      pick = rng.below(boxes.size());
    } else {
      double u = rng.uniform() * total;
      pick = boxes.size() - 1;
      for (std::size_t i = 0; i < boxes.size(); ++i) {
        if (u < d2[i]) {
          pick = i;
          break;
        }
        u -= d2[i];
      }
    }
    centroids.push_back(boxes[pick]);
  }
  return centroids;
}

}  // namespace

AnchorSet kmeans_anchors(const std::vector<AnchorBox>& boxes, int k, std::uint64_t seed,
                         KMeansTrace* trace, int max_iterations) {
  if (boxes.empty()) throw InsufficientBoxesError("kmeans_anchors: empty box list");
  if (k < 1) throw std::invalid_argument("kmeans_anchors: k must be >= 1");
  if (static_cast<int>(boxes.size()) < k)
    throw InsufficientBoxesError("insufficient boxes: " + std::to_string(boxes.size()) +
                                 " boxes for k=" + std::to_string(k));
  for (const AnchorBox& b : boxes)
    if (!(b.width > 0.0) || !(b.height > 0.0))
      throw std::invalid_argument("kmeans_anchors: box dims must be positive");

  Rng rng(seed, "kmeans_anchors");
  std::vector<AnchorBox> centroids = plus_plus_seed(boxes, k, rng);
  std::vector<int> assign(boxes.size(), -1);
  KMeansTrace local;
  KMeansTrace& tr = trace != nullptr ? *trace : local;
  tr = {};

  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      const int a = nearest(boxes[i], centroids);
      changed |= a != assign[i];
      assign[i] = a;
    }
    if (!changed) {
      tr.converged = true;
      break;
    }

    std::vector<double> sum_w(k, 0.0), sum_h(k, 0.0);
    std::vector<int> count(k, 0);
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      sum_w[assign[i]] += boxes[i].width;
      sum_h[assign[i]] += boxes[i].height;
      ++count[assign[i]];
    }
    std::vector<bool> used(boxes.size(), false);
    for (int c = 0; c < k; ++c) {
      if (count[c] == 0) {
        // Reseed an empty cluster from the box farthest from its centroid.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < boxes.size(); ++i) {
          if (used[i]) continue;
          const double dist = concentric_distance(boxes[i], centroids[assign[i]]);
          if (dist > far_d) {
            far_d = dist;
            far = i;
          }
        }
        used[far] = true;
        centroids[c] = boxes[far];
        continue;
      }
      const AnchorBox mean{sum_w[c] / count[c], sum_h[c] / count[c]};
      // The mean is not the exact minimiser under 1 - IoU; keep it only when
      // the cluster cost does not rise, so the objective never increases.
      double old_cost = 0.0, new_cost = 0.0;
      for (std::size_t i = 0; i < boxes.size(); ++i) {
        if (assign[i] != c) continue;
        old_cost += concentric_distance(boxes[i], centroids[c]);
        new_cost += concentric_distance(boxes[i], mean);
      }
      if (new_cost <= old_cost) centroids[c] = mean;
    }
    ++tr.iterations;
    tr.objective.push_back(kmeans_objective(boxes, centroids));
  }

  AnchorSet set{centroids};
  std::sort(set.anchors.begin(), set.anchors.end(), [](const AnchorBox& a, const AnchorBox& b) {
    const double aa = a.width * a.height, ab = b.width * b.height;
    if (aa != ab) return aa < ab;
    if (a.width != b.width) return a.width < b.width;
    return a.height < b.height;
  });
  return set;
}

}  // namespace tcnn
