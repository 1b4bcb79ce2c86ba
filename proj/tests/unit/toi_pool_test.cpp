#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "support/references.hpp"
#include "tcnn/toi_pool.hpp"

using namespace tcnn;
using namespace tcnn::testing;

TEST(BinRange, CoversExtentWithoutGaps) {
  for (int e = 1; e <= 20; ++e)
    for (int m = 1; m <= 9; ++m) {
      int prev_end = 0;
      for (int k = 0; k < m; ++k) {
        const BinRange r = bin_range(k, m, e);
        EXPECT_LT(r.begin, r.end) << e << " " << m << " " << k;
        EXPECT_LE(r.begin, prev_end);
        prev_end = r.end;
      }
      EXPECT_EQ(bin_range(0, m, e).begin, 0);
      EXPECT_EQ(bin_range(m - 1, m, e).end, e);
    }
}

TEST(SnapBox, RoundsOutwardAndInflatesDegenerate) {
  const CellRegion r = snap_box({1.2, 0.5, 3.1, 2.0}, 10, 10);
  EXPECT_EQ(r.x0, 1);
  EXPECT_EQ(r.x1, 4);
  EXPECT_EQ(r.y0, 0);
  EXPECT_EQ(r.y1, 2);
  const CellRegion z = snap_box({0, 0, 0, 0}, 5, 7);
  EXPECT_EQ(z.x0, 0);
  EXPECT_EQ(z.x1, 1);
  EXPECT_EQ(z.y0, 0);
  EXPECT_EQ(z.y1, 1);
  const CellRegion edge = snap_box({9, 9, 12, 12}, 8, 8);
  EXPECT_EQ(edge.x0, 7);
  EXPECT_EQ(edge.x1, 8);
}

TEST(ToIPool, TableShapes) {
  Rng rng(1);
  FeatureCube c5({512, 1, 19, 25});
  const ToIResult r5 = toi_pool_forward(c5, {{Box2D{2, 3, 10, 12}}}, {1, 4, 4});
  EXPECT_EQ(r5.output.shape(), (CubeShape{512, 1, 4, 4}));
  FeatureCube c2({128, 8, 150, 200});
  TubeOfInterest tube{std::vector<Box2D>(8, Box2D{10, 20, 90, 120})};
  const ToIResult r2 = toi_pool_forward(c2, tube, {8, 8, 8});
  EXPECT_EQ(r2.output.shape(), (CubeShape{128, 8, 8, 8}));
}

TEST(ToIPool, SingleBinIsGlobalMax) {
  Rng rng(2);
  const FeatureCube in = random_cube({3, 4, 5, 6}, rng);
  const ToIResult r = toi_pool_forward(in, full_tube(in.shape()), {1, 1, 1});
  for (int c = 0; c < 3; ++c) {
    double m = -1e300;
    for (int d = 0; d < 4; ++d)
      for (int h = 0; h < 5; ++h)
        for (int w = 0; w < 6; ++w) m = std::max(m, in.at(c, d, h, w));
    EXPECT_EQ(r.output.at(c, 0, 0, 0), m);
  }
}

TEST(ToIPool, FullTubeAtCubeSizeIsIdentity) {
  Rng rng(3);
  const FeatureCube in = random_cube({2, 3, 4, 5}, rng);
  const ToIResult r = toi_pool_forward(in, full_tube(in.shape()), {3, 4, 5});
  EXPECT_EQ(r.output.values(), in.values());
}

TEST(ToIPool, MatchesBruteForceOracle) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const FeatureCube in = random_cube({2, 4, 6, 6}, rng);
    const TubeOfInterest tube = random_toi(4, 6, 6, rng);
    const int D = 1 + static_cast<int>(rng.below(5));
    const int H = 1 + static_cast<int>(rng.below(7));
    const int W = 1 + static_cast<int>(rng.below(7));
    const ToIResult r = toi_pool_forward(in, tube, {D, H, W});
    const FeatureCube ref = naive_toi_pool(in, tube.boxes, D, H, W);
    ASSERT_EQ(r.output.values(), ref.values()) << "trial " << trial;
    for (std::size_t j = 0; j < r.output.size(); ++j)
      ASSERT_EQ(in[static_cast<std::size_t>(r.argmax.index[j])], r.output[j]);
  }
}

TEST(ToIPool, RejectsTubeDepthMismatch) {
  FeatureCube in({1, 4, 5, 5});
  TubeOfInterest tube{std::vector<Box2D>(3, Box2D{0, 0, 2, 2})};
  EXPECT_THROW(toi_pool_forward(in, tube, {1, 1, 1}), ShapeError);
}

TEST(ToIPool, BackwardZeroGradIsZero) {
  Rng rng(5);
  const FeatureCube in = random_cube({2, 4, 6, 6}, rng);
  const ToIResult r = toi_pool_forward(in, random_toi(4, 6, 6, rng), {2, 3, 3});
  const FeatureCube g = toi_pool_backward(FeatureCube(r.output.shape()), r.argmax, in.shape());
  for (double v : g.values()) EXPECT_EQ(v, 0.0);
}

TEST(ToIPool, SharedArgmaxAccumulates) {
  // A 1x1 box pooled into two bins: both read the same cell.
  FeatureCube in({1, 1, 3, 3});
  in.at(0, 0, 1, 1) = 5.0;
  const ToIResult r = toi_pool_forward(in, {{Box2D{1, 1, 2, 2}}}, {1, 1, 2});
  ASSERT_EQ(r.argmax.index[0], r.argmax.index[1]);
  const FeatureCube g =
      toi_pool_backward(FeatureCube(r.output.shape(), 1.0), r.argmax, in.shape());
  EXPECT_EQ(g.at(0, 0, 1, 1), 2.0);
  EXPECT_EQ(g.sum(), 2.0);
}

TEST(ToIPool, BackwardConservesMass) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const FeatureCube in = random_cube({2, 4, 6, 6}, rng);
    const ToIResult r = toi_pool_forward(in, random_toi(4, 6, 6, rng), {3, 4, 4});
    const FeatureCube go = random_cube(r.output.shape(), rng);
    const FeatureCube g = toi_pool_backward(go, r.argmax, in.shape());
    EXPECT_NEAR(g.sum(), go.sum(), 1e-12);
  }
}

TEST(ToIPool, BackwardRejectsDimsMismatch) {
  Rng rng(7);
  const FeatureCube in = random_cube({2, 4, 6, 6}, rng);
  const ToIResult r = toi_pool_forward(in, random_toi(4, 6, 6, rng), {2, 2, 2});
  EXPECT_THROW(toi_pool_backward(FeatureCube({2, 2, 2, 3}), r.argmax, in.shape()), ShapeError);
  EXPECT_THROW(toi_pool_backward(FeatureCube(r.output.shape()), r.argmax, {2, 4, 6, 7}),
               ShapeError);
}

TEST(ToIPool, FiniteDifferences) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    FeatureCube in = random_cube({2, 4, 5, 5}, rng);
    const TubeOfInterest tube = random_toi(4, 5, 5, rng);
    const ToIOutputSpec spec{2, 3, 3};
    const std::vector<double> w = random_vector(2 * 2 * 3 * 3, rng);
    const ToIResult r = toi_pool_forward(in, tube, spec);
    const FeatureCube g = toi_pool_backward(FeatureCube(r.output.shape(), w), r.argmax, in.shape());
    const auto numeric = numeric_gradient(in.data(), [&] {
      return dot(w, toi_pool_forward(in, tube, spec).output.values());
    });
    EXPECT_LE(max_relative_error(g.values(), numeric), 1e-3) << "trial " << trial;
  }
}

TEST(ToIPool, StableBelowMaxMargin) {
  Rng rng(9);
  FeatureCube in = random_cube({1, 4, 6, 6}, rng);
  const TubeOfInterest tube = random_toi(4, 6, 6, rng);
  const ToIResult r = toi_pool_forward(in, tube, {2, 2, 2});
  // Nudge every non-winning input down; winners stay winners.
  std::vector<bool> winner(in.size(), false);
  for (auto i : r.argmax.index) winner[static_cast<std::size_t>(i)] = true;
  for (std::size_t i = 0; i < in.size(); ++i)
    if (!winner[i]) in[i] -= 0.25;
  EXPECT_EQ(toi_pool_forward(in, tube, {2, 2, 2}).output.values(), r.output.values());
}
