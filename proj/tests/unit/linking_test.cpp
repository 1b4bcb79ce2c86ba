#include <gtest/gtest.h>

#include <algorithm>

#include "support/oracles.hpp"
#include "support/references.hpp"
#include "tcnn/linking.hpp"

using namespace tcnn;
using namespace tcnn::testing;

TEST(SequenceScore, HandValues) {
  EXPECT_DOUBLE_EQ(sequence_score(std::vector<double>{1, 1, 1}, std::vector<double>{1, 1}), 2.0);
  EXPECT_DOUBLE_EQ(sequence_score(std::vector<double>{0.5, 0.5}, std::vector<double>{0.5}), 1.0);
  EXPECT_DOUBLE_EQ(sequence_score(std::vector<double>{0.3}, std::vector<double>{}), 0.3);
  EXPECT_THROW(sequence_score(std::vector<double>{0.3, 0.2}, std::vector<double>{}),
               std::invalid_argument);
  EXPECT_THROW(sequence_score(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
}

TEST(SequenceScore, RandomMatchesArithmetic) {
  Rng rng(81);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> a(4), o(3);
    for (double& v : a) v = rng.uniform();
    for (double& v : o) v = rng.uniform();
    const double expect = (a[0] + a[1] + a[2] + a[3]) / 4 + (o[0] + o[1] + o[2]) / 3;
    EXPECT_NEAR(sequence_score(a, o), expect, 1e-12);
  }
}

TEST(SequenceScore, StrictlyMonotone) {
  Rng rng(82);
  std::vector<double> a{0.2, 0.5, 0.7}, o{0.1, 0.4};
  const double base = sequence_score(a, o);
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto b = a;
    b[i] += 0.01;
    EXPECT_GT(sequence_score(b, o), base);
  }
  for (std::size_t i = 0; i < o.size(); ++i) {
    auto p = o;
    p[i] += 0.01;
    EXPECT_GT(sequence_score(a, p), base);
  }
}

TEST(TransitionOverlap, UsesLastAndFirstFrames) {
  TubeProposal a, b;
  a.frame_boxes.fill({0, 0, 1, 1});
  a.frame_boxes[7] = {0, 0, 2, 2};
  b.frame_boxes.fill({5, 5, 6, 6});
  b.frame_boxes[0] = {1, 0, 3, 2};
  EXPECT_NEAR(transition_overlap(a, b), 2.0 / 6.0, 1e-12);
}

TEST(TopK, ThreeClipsTwoProposalsGivesEight) {
  Rng rng(83);
  std::vector<std::vector<TubeProposal>> clips(3);
  for (auto& c : clips)
    for (int i = 0; i < 2; ++i) c.push_back(random_tube_proposal(rng));
  const auto seqs = top_k_sequences(clips, 100);
  ASSERT_EQ(seqs.size(), 8u);
  for (std::size_t i = 1; i < seqs.size(); ++i) EXPECT_GE(seqs[i - 1].score, seqs[i].score);
}

TEST(TopK, SingleClipPicksMaxActionness) {
  std::vector<std::vector<TubeProposal>> clips(1);
  for (double a : {0.3, 0.9, 0.1}) {
    TubeProposal t;
    t.actionness = a;
    clips[0].push_back(t);
  }
  const auto seqs = top_k_sequences(clips, 1);
  ASSERT_EQ(seqs.size(), 1u);
  EXPECT_EQ(seqs[0].tube_indices, std::vector<int>{1});
  EXPECT_EQ(seqs[0].score, 0.9);
}

TEST(TopK, TiesOrderedLexicographically) {
  std::vector<std::vector<TubeProposal>> clips(2);
  TubeProposal t;
  t.actionness = 0.5;
  t.frame_boxes.fill({0, 0, 1, 1});
  clips[0] = {t, t};
  clips[1] = {t, t};
  const auto seqs = top_k_sequences(clips, 4);
  ASSERT_EQ(seqs.size(), 4u);
  EXPECT_EQ(seqs[0].tube_indices, (std::vector<int>{0, 0}));
  EXPECT_EQ(seqs[1].tube_indices, (std::vector<int>{0, 1}));
  EXPECT_EQ(seqs[2].tube_indices, (std::vector<int>{1, 0}));
  EXPECT_EQ(seqs[3].tube_indices, (std::vector<int>{1, 1}));
}

TEST(TopK, MatchesExhaustiveEnumeration) {
  Rng rng(84);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 1 + static_cast<int>(rng.below(5));
    std::vector<std::vector<TubeProposal>> clips(m);
    for (auto& c : clips) {
      const int n = 1 + static_cast<int>(rng.below(6));
      for (int i = 0; i < n; ++i) c.push_back(random_tube_proposal(rng));
    }
    const std::size_t k = 1 + rng.below(10);
    const auto dp = top_k_sequences(clips, k);
    const auto all = enumerate_all(clips);
    ASSERT_EQ(dp.size(), std::min(k, all.size()));
    for (std::size_t i = 0; i < dp.size(); ++i) {
      ASSERT_EQ(dp[i].tube_indices, all[i].indices) << "trial " << trial << " rank " << i;
      EXPECT_NEAR(dp[i].score, all[i].score, 1e-12);
      EXPECT_EQ(dp[i].score, chain_score(clips, dp[i].tube_indices));
    }
  }
}

TEST(TopK, RejectsEmptyClip) {
  std::vector<std::vector<TubeProposal>> clips(2);
  clips[0].push_back(TubeProposal{});
  EXPECT_THROW(top_k_sequences(clips, 3), std::invalid_argument);
  EXPECT_THROW(top_k_sequences({}, 3), std::invalid_argument);
}
