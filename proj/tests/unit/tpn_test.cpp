#include <gtest/gtest.h>

#include <cmath>

#include "support/oracles.hpp"
#include "support/references.hpp"
#include "tcnn/losses.hpp"
#include "tcnn/tpn.hpp"

using namespace tcnn;
using namespace tcnn::testing;

namespace {

// Entries that are exactly zero analytically come back from central
// differences as round-off of order 1e-9 on a loss of order 1.
constexpr double kFloor = 1e-5;

AnchorSet two_anchors() { return AnchorSet{{{0.25, 0.3}, {0.5, 0.6}}}; }

TpnConfig tiny_config(SkipSource skip) {
  TpnConfig c;
  c.skip = skip;
  c.skip_spec = {kClipLength, 2, 2};
  c.conv5_spec = {1, 2, 2};
  c.reduce_dim = 5;
  c.fc_dim = 4;
  return c;
}

}  // namespace

TEST(ScoreAnchors, ZeroHeadGivesHalfEverywhere) {
  FeatureCube conv5({512, 1, 19, 25}, 0.3);
  AnchorSet anchors;
  for (int i = 0; i < 12; ++i) anchors.anchors.push_back({0.05 * (i + 1), 0.04 * (i + 1)});
  const Conv1x1 head(512, 12);
  const auto props = score_anchors(conv5, anchors, head, 0.0);
  ASSERT_EQ(props.size(), 19u * 25u * 12u);
  for (std::size_t i = 0; i < props.size(); ++i) {
    EXPECT_EQ(props[i].actionness, 0.5);
    EXPECT_EQ(props[i].index, static_cast<int>(i));
  }
}

TEST(ScoreAnchors, ThresholdMonotone) {
  Rng rng(61);
  const FeatureCube conv5 = random_cube({4, 1, 3, 4}, rng);
  Conv1x1 head(4, 2);
  randomize(head.weight, rng, 1.0);
  std::size_t prev = 1u << 30;
  for (double t = 0.0; t <= 1.0; t += 0.05) {
    const std::size_t n = score_anchors(conv5, two_anchors(), head, t).size();
    EXPECT_LE(n, prev);
    prev = n;
  }
  EXPECT_EQ(score_anchors(conv5, two_anchors(), head, 1.0).size(), 0u);
  EXPECT_THROW(score_anchors(conv5, AnchorSet{}, Conv1x1(4, 0), 0.5), std::exception);
}

TEST(ScoreAnchors, AnchorsCenteredOnCells) {
  const auto boxes = anchor_grid(AnchorSet{{{0.5, 0.5}}}, 4, 4);
  ASSERT_EQ(boxes.size(), 16u);
  EXPECT_EQ(boxes[5], (Box2D{0.5, 0.5, 2.5, 2.5}));
  EXPECT_EQ(boxes[0], (Box2D{0.0, 0.0, 1.5, 1.5}));
}

TEST(SelectProposals, KeepsBestWhenNonePass) {
  std::vector<BoxProposal> p(3);
  p[0].actionness = 0.2;
  p[1].actionness = 0.4;
  p[1].index = 1;
  p[2].actionness = 0.4;
  p[2].index = 2;
  const auto kept = select_proposals(p, 0.5, 40);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].index, 1);
  EXPECT_EQ(select_proposals(p, 0.1, 2).size(), 2u);
}

TEST(LabelProposals, IdenticalIsPositive) {
  const std::vector<Box2D> props{{0, 0, 2, 2}, {5, 5, 6, 6}, {0, 0, 1, 1}};
  const std::vector<Box2D> gts{{0, 0, 2, 2}};
  const auto l = label_proposals(props, gts);
  EXPECT_EQ(l[0], ProposalLabel::kPositive);
  EXPECT_EQ(l[1], ProposalLabel::kNegative);
  EXPECT_EQ(l[2], ProposalLabel::kNegative);
}

TEST(LabelProposals, ArgmaxRuleOnly) {
  const std::vector<Box2D> props{{0, 0, 2, 2}, {1, 0, 3, 2}, {0, 0, 4, 4}};
  const std::vector<Box2D> gts{{1, 1, 3, 3}};
  const auto l = label_proposals(props, gts);
  // IoUs: 1/7, 2/6, 4/16 -> only the second.
  EXPECT_EQ(l[0], ProposalLabel::kNegative);
  EXPECT_EQ(l[1], ProposalLabel::kPositive);
  EXPECT_EQ(l[2], ProposalLabel::kNegative);
}

TEST(LabelProposals, EmptyGroundTruthAllNegative) {
  const std::vector<Box2D> props{{0, 0, 2, 2}, {1, 0, 3, 2}};
  for (auto v : label_proposals(props, {})) EXPECT_EQ(v, ProposalLabel::kNegative);
}

TEST(LabelProposals, MatchesLoopOracle) {
  Rng rng(62);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Box2D> props, gts;
    const int np = 1 + static_cast<int>(rng.below(30)), ng = static_cast<int>(rng.below(4));
    for (int i = 0; i < np; ++i) props.push_back(random_box(rng, 8, 6));
    // Duplicates exercise the tie path.
    if (np > 2 && rng.bernoulli(0.3)) props[np - 1] = props[0];
    for (int i = 0; i < ng; ++i) gts.push_back(random_box(rng, 8, 6));
    const auto l = label_proposals(props, gts);
    ASSERT_EQ(l, oracle_labels(props, gts)) << "trial " << trial;
    // Each ground truth's best-overlap proposal is positive.
    for (const Box2D& g : gts) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < props.size(); ++i)
        if (naive_iou(props[i], g) > naive_iou(props[best], g)) best = i;
      EXPECT_EQ(l[best], ProposalLabel::kPositive);
    }
  }
}

TEST(MapToSkip, FullFrameMapsToFullFrame) {
  const TubeOfInterest t = map_to_skip_layer({0, 0, 25, 19}, 19, 25, {128, 8, 150, 200});
  ASSERT_EQ(t.boxes.size(), 8u);
  for (const Box2D& b : t.boxes) EXPECT_EQ(b, (Box2D{0, 0, 200, 150}));
}

TEST(MapToSkip, DegenerateBoxPoolsOneCell) {
  const TubeOfInterest t = map_to_skip_layer({0, 0, 0, 0}, 19, 25, {2, 8, 150, 200});
  Rng rng(63);
  const FeatureCube skip = random_cube({2, 8, 150, 200}, rng);
  const ToIResult r = toi_pool_forward(skip, t, {8, 2, 2});
  for (int c = 0; c < 2; ++c)
    for (int f = 0; f < 8; ++f) EXPECT_EQ(r.output.at(c, f, 1, 1), skip.at(c, f, 0, 0));
}

TEST(MapToSkip, RandomScaling) {
  Rng rng(64);
  for (int i = 0; i < 50; ++i) {
    const Box2D b = random_box(rng, 25, 19);
    const TubeOfInterest t = map_to_skip_layer(b, 19, 25, {1, 8, 150, 200});
    EXPECT_NEAR(t.boxes[3].x1, b.x1 * 200.0 / 25.0, 1e-12);
    EXPECT_NEAR(t.boxes[3].y2, b.y2 * 150.0 / 19.0, 1e-12);
  }
}

TEST(AssembleSkip, DescriptorDimsAtFullWidth) {
  TpnConfig c;
  c.reduce_dim = 2;
  c.fc_dim = 2;
  const TpnHead head(c, 512, 128, 12);
  EXPECT_EQ(head.descriptor_dim(), 16384);
  EXPECT_EQ(head.slots(), 8);
}

TEST(AssembleSkip, ZeroSkipCubeGivesZeroSkipHalf) {
  Rng rng(65);
  const TpnHead head(tiny_config(SkipSource::kConv2), 3, 2, 2);
  const FeatureCube skip({2, 8, 6, 8});
  const FeatureCube conv5 = random_cube({3, 1, 3, 4}, rng);
  const SkipAssembly a =
      assemble_skip_features({skip, conv5, SkipSource::kConv2}, Box2D{0.5, 0.5, 3, 2.5}, head);
  for (int f = 0; f < 8; ++f) {
    for (int i = 0; i < head.skip_part_dim(); ++i) EXPECT_EQ(a.descriptors.at(i, f, 0, 0), 0.0);
    double n = 0;
    for (int i = head.skip_part_dim(); i < head.descriptor_dim(); ++i)
      n += a.descriptors.at(i, f, 0, 0) * a.descriptors.at(i, f, 0, 0);
    EXPECT_NEAR(n, 1.0, 1e-12);
  }
}

TEST(AssembleSkip, InvariantToPositiveScaling) {
  Rng rng(66);
  const TpnHead head(tiny_config(SkipSource::kConv2), 3, 2, 2);
  FeatureCube skip = random_cube({2, 8, 6, 8}, rng);
  FeatureCube conv5 = random_cube({3, 1, 3, 4}, rng);
  const Box2D box{0.2, 0.7, 3.5, 2.9};
  const SkipAssembly a = assemble_skip_features({skip, conv5, SkipSource::kConv2}, box, head);
  for (double& v : skip.values()) v *= 3.7;
  for (double& v : conv5.values()) v *= 0.2;
  const SkipAssembly b = assemble_skip_features({skip, conv5, SkipSource::kConv2}, box, head);
  for (std::size_t i = 0; i < a.descriptors.size(); ++i)
    EXPECT_NEAR(a.descriptors[i], b.descriptors[i], 1e-12);
}

TEST(AssembleSkip, RejectsUnlabeledProposal) {
  const TpnHead head(tiny_config(SkipSource::kConv2), 3, 2, 2);
  const FeatureCube skip({2, 8, 6, 8}), conv5({3, 1, 3, 4});
  BoxProposal p;
  p.box = {0, 0, 1, 1};
  EXPECT_THROW(assemble_skip_features({skip, conv5, SkipSource::kConv2}, p, head),
               std::invalid_argument);
  p.label = ProposalLabel::kPositive;
  EXPECT_NO_THROW(assemble_skip_features({skip, conv5, SkipSource::kConv2}, p, head));
}

TEST(RegressBoxes, ZeroDeltasCopyScaledProposal) {
  BoxProposal p;
  p.box = {1, 1, 3, 2};
  p.actionness = 0.8;
  const FrameGeometry g{300, 400, 19, 25};
  const TubeProposal t = regress_boxes({}, p, g, 4);
  EXPECT_EQ(t.clip_index, 4);
  EXPECT_EQ(t.actionness, 0.8);
  for (const Box2D& b : t.frame_boxes) {
    EXPECT_NEAR(b.x1, 16.0, 1e-9);
    EXPECT_NEAR(b.x2, 48.0, 1e-9);
    EXPECT_NEAR(b.y1, 300.0 / 19.0, 1e-9);
    EXPECT_NEAR(b.y2, 600.0 / 19.0, 1e-9);
  }
}

TEST(RegressBoxes, LogWidthDoubling) {
  BoxProposal p;
  p.box = {2, 2, 4, 4};
  RegressionOutput r;
  r.deltas[0] = {0, 0, std::log(2.0), 0};
  const TubeProposal t = regress_boxes(r, p, {8, 8, 8, 8}, 0);
  EXPECT_NEAR(t.frame_boxes[0].width(), 4.0, 1e-12);
  EXPECT_NEAR(t.frame_boxes[0].cx(), 3.0, 1e-12);
  EXPECT_NEAR(t.frame_boxes[1].width(), 2.0, 1e-12);
}

TEST(RegressBoxes, MatchesHandArithmetic) {
  Rng rng(67);
  const FrameGeometry g{60, 80, 4, 5};
  for (int trial = 0; trial < 100; ++trial) {
    BoxProposal p;
    p.box = {1.0, 0.5, 3.0, 3.5};
    RegressionOutput r;
    for (auto& d : r.deltas)
      for (double& v : d) v = rng.uniform(-0.3, 0.3);
    const TubeProposal t = regress_boxes(r, p, g, 0);
    const double px = 2.0 * 16.0, py = 2.0 * 15.0, pw = 32.0, ph = 45.0;
    for (int f = 0; f < 8; ++f) {
      const auto& d = r.deltas[f];
      const double cx = px + d[0] * pw, cy = py + d[1] * ph;
      const double w = pw * std::exp(d[2]), h = ph * std::exp(d[3]);
      EXPECT_NEAR(t.frame_boxes[f].x1, std::max(0.0, cx - w / 2), 1e-9);
      EXPECT_NEAR(t.frame_boxes[f].x2, std::min(80.0, cx + w / 2), 1e-9);
      EXPECT_NEAR(t.frame_boxes[f].y1, std::max(0.0, cy - h / 2), 1e-9);
      EXPECT_NEAR(t.frame_boxes[f].y2, std::min(60.0, cy + h / 2), 1e-9);
    }
  }
}

TEST(RegressBoxes, TargetsInvertDeltas) {
  Rng rng(68);
  for (int i = 0; i < 100; ++i) {
    Box2D p = random_box(rng, 50, 50), g = random_box(rng, 50, 50);
    if (p.width() < 2 || p.height() < 2 || g.width() < 2 || g.height() < 2) continue;
    const Box2D back = apply_deltas(p, regression_targets(p, g));
    EXPECT_NEAR(back.x1, g.x1, 1e-9);
    EXPECT_NEAR(back.y2, g.y2, 1e-9);
  }
}

TEST(RegressBoxes, RejectsNonFinite) {
  RegressionOutput r;
  r.deltas[2][1] = std::nan("");
  EXPECT_THROW(regress_boxes(r, BoxProposal{}, {8, 8, 8, 8}, 0), std::invalid_argument);
}

TEST(Losses, PerfectAndMonotone) {
  double g = 0;
  EXPECT_EQ(smooth_l1(0.0, &g), 0.0);
  EXPECT_EQ(g, 0.0);
  EXPECT_LT(smooth_l1(2.0), smooth_l1(4.0));
  EXPECT_DOUBLE_EQ(smooth_l1(4.0) - smooth_l1(2.0), 2.0);
  EXPECT_NEAR(bce_with_logits(40.0, 1.0), 0.0, 1e-15);
  EXPECT_NEAR(bce_with_logits(0.0, 1.0), std::log(2.0), 1e-15);
  const std::vector<double> logits{100.0, 0.0, 0.0};
  EXPECT_NEAR(softmax_cross_entropy(logits, 0), 0.0, 1e-12);
  for (double x : {-3.0, -0.4, 0.7, 5.0}) {
    for (double t : {0.0, 1.0}) {
      double ga = 0;
      bce_with_logits(x, t, &ga);
      const double n = (bce_with_logits(x + 1e-6, t) - bce_with_logits(x - 1e-6, t)) / 2e-6;
      EXPECT_NEAR(ga, n, 1e-6);
    }
  }
}

TEST(TpnLoss, ComposedFiniteDifferences) {
  for (SkipSource skip : {SkipSource::kConv2, SkipSource::kNone}) {
    for (int trial = 0; trial < 20; ++trial) {
      Rng rng(700 + trial + 100 * static_cast<int>(skip));
      TpnHead head(tiny_config(skip), 3, skip == SkipSource::kNone ? 0 : 2, 2);
      for (Tensor* p : head.params()) randomize(*p, rng, 0.6);
      FeatureCube skip_cube =
          skip == SkipSource::kNone ? FeatureCube() : random_cube({2, 8, 6, 8}, rng);
      FeatureCube conv5 = random_cube({3, 1, 3, 4}, rng);
      const auto grid = anchor_grid(two_anchors(), 3, 4);
      TpnClipTargets t;
      for (int i = 0; i < 6; ++i) {
        t.anchor_indices.push_back(static_cast<int>(rng.below(grid.size())));
        t.labels.push_back(static_cast<int>(rng.below(2)));
      }
      for (int k = 0; k < 2; ++k) {
        RegressionTarget r;
        r.proposal.box = grid[rng.below(grid.size())];
        for (int f = 0; f < 8; ++f) {
          r.mask[f] = rng.bernoulli(0.8);
          for (double& v : r.deltas[f]) v = rng.uniform(-1.5, 1.5);
        }
        t.regression.push_back(r);
      }
      const ClipFeatures clip{skip_cube, conv5, skip};
      TpnHead grads = head;
      for (Tensor* p : grads.params()) p->zero();
      FeatureCube g_skip(skip_cube.shape()), g5(conv5.shape());
      tpn_clip_loss(head, clip, t, &grads, skip == SkipSource::kNone ? nullptr : &g_skip, &g5);
      auto loss = [&] { return tpn_clip_loss(head, clip, t).total(); };
      const auto params = head.params();
      const auto gparams = grads.params();
      for (std::size_t i = 0; i < params.size(); ++i) {
        const auto numeric = numeric_gradient(params[i]->data, loss);
        EXPECT_LE(max_relative_error(gparams[i]->data, numeric, kFloor), 1e-3)
            << head.param_names()[i] << " trial " << trial;
      }
      EXPECT_LE(max_relative_error(g5.values(), numeric_gradient(conv5.data(), loss), kFloor), 1e-3);
      if (skip != SkipSource::kNone) {
        EXPECT_LE(
            max_relative_error(g_skip.values(), numeric_gradient(skip_cube.data(), loss), kFloor),
            1e-3);
      }
    }
  }
}
