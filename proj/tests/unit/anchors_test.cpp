#include <gtest/gtest.h>

#include <cmath>

#include "support/oracles.hpp"
#include "support/references.hpp"
#include "tcnn/anchors.hpp"

using namespace tcnn;
using namespace tcnn::testing;

TEST(Iou, HandValues) {
  EXPECT_DOUBLE_EQ(iou({0, 0, 2, 2}, {0, 0, 2, 2}), 1.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 1, 1}, {2, 2, 3, 3}), 0.0);
  EXPECT_NEAR(iou({0, 0, 2, 2}, {1, 0, 3, 2}), 2.0 / 6.0, 1e-12);
  EXPECT_EQ(iou({1, 1, 1, 3}, {0, 0, 4, 4}), 0.0);
}

TEST(Iou, SymmetricBoundedAndMatchesArithmetic) {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const Box2D a = random_box(rng, 10, 10), b = random_box(rng, 10, 10);
    const double v = iou(a, b);
    EXPECT_EQ(v, iou(b, a));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_NEAR(v, naive_iou(a, b), 1e-12);
    if (a.area() > 0) {
      EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
    }
  }
}

TEST(KMeansAnchors, IdenticalBoxesSingleCluster) {
  const std::vector<AnchorBox> boxes(10, AnchorBox{0.3, 0.4});
  const AnchorSet s = kmeans_anchors(boxes, 1, 5);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_DOUBLE_EQ(s.anchors[0].width, 0.3);
  EXPECT_DOUBLE_EQ(s.anchors[0].height, 0.4);
}

TEST(KMeansAnchors, RecoversTwoClusters) {
  std::vector<AnchorBox> boxes(50, AnchorBox{0.1, 0.1});
  boxes.insert(boxes.end(), 50, AnchorBox{0.8, 0.8});
  const AnchorSet s = kmeans_anchors(boxes, 2, 17);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_NEAR(s.anchors[0].width, 0.1, 1e-6);
  EXPECT_NEAR(s.anchors[0].height, 0.1, 1e-6);
  EXPECT_NEAR(s.anchors[1].width, 0.8, 1e-6);
  EXPECT_NEAR(s.anchors[1].height, 0.8, 1e-6);
  // No single reassignment lowers the objective.
  const double best = kmeans_objective(boxes, s.anchors);
  for (const AnchorBox& b : boxes)
    for (const AnchorBox& c : s.anchors)
      EXPECT_GE(concentric_distance(b, c) + 1e-12,
                std::min(concentric_distance(b, s.anchors[0]), concentric_distance(b, s.anchors[1])));
  EXPECT_NEAR(best, 0.0, 1e-12);
}

TEST(KMeansAnchors, TwelveDistinctAnchorsSortedByArea) {
  Rng rng(21);
  const auto boxes = log_uniform_boxes(400, rng);
  KMeansTrace trace;
  const AnchorSet s = kmeans_anchors(boxes, 12, 3, &trace);
  ASSERT_EQ(s.size(), 12u);
  EXPECT_LE(trace.iterations, 100);
  for (std::size_t i = 1; i < s.size(); ++i) {
    EXPECT_LE(s.anchors[i - 1].width * s.anchors[i - 1].height,
              s.anchors[i].width * s.anchors[i].height);
    EXPECT_FALSE(s.anchors[i - 1] == s.anchors[i]);
  }
  for (const AnchorBox& a : s.anchors) {
    EXPECT_GT(a.width, 0.0);
    EXPECT_LE(a.width, 1.0);
  }
}

TEST(KMeansAnchors, ObjectiveNeverIncreases) {
  for (int run = 0; run < 50; ++run) {
    Rng rng(1000 + run);
    const auto boxes = log_uniform_boxes(60 + static_cast<int>(rng.below(100)), rng);
    const int k = 1 + static_cast<int>(rng.below(12));
    KMeansTrace trace;
    kmeans_anchors(boxes, k, run, &trace);
    for (std::size_t i = 1; i < trace.objective.size(); ++i)
      EXPECT_LE(trace.objective[i], trace.objective[i - 1] + 1e-15) << "run " << run;
  }
}

TEST(KMeansAnchors, DeterministicForSeed) {
  Rng rng(31);
  const auto boxes = log_uniform_boxes(200, rng);
  const AnchorSet a = kmeans_anchors(boxes, 6, 99);
  const AnchorSet b = kmeans_anchors(boxes, 6, 99);
  EXPECT_EQ(a.anchors, b.anchors);
}

TEST(KMeansAnchors, RejectsTooFewBoxes) {
  EXPECT_THROW(kmeans_anchors({}, 1, 0), InsufficientBoxesError);
  EXPECT_THROW(kmeans_anchors(std::vector<AnchorBox>(3, AnchorBox{0.1, 0.2}), 4, 0),
               InsufficientBoxesError);
  EXPECT_THROW(kmeans_anchors({AnchorBox{0.0, 0.2}}, 1, 0), std::invalid_argument);
}
