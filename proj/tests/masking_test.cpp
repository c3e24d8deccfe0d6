#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "dare/masking/mask.hpp"

using namespace dare;
using namespace dare::masking;

namespace {

Mask from_cells(std::int64_t c, std::int64_t n, std::set<std::pair<int, int>> cells) {
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(c * n), 0);
  for (auto [i, j] : cells) bits[static_cast<std::size_t>(i * n + j)] = 1;
  return Mask(c, n, bits);
}

// Jaccard by explicit set arithmetic.
double jaccard_oracle(const Mask& a, const Mask& b) {
  std::set<std::pair<int, int>> va, vb, inter, uni;
  for (int i = 0; i < a.channels(); ++i)
    for (int j = 0; j < a.patches(); ++j) {
      if (a.visible(i, j)) va.insert({i, j});
      if (b.visible(i, j)) vb.insert({i, j});
    }
  for (auto& x : va) (vb.count(x) ? inter : uni).insert(x);
  for (auto& x : vb) uni.insert(x);
  for (auto& x : inter) uni.insert(x);
  return uni.empty() ? 1.0 : double(inter.size()) / double(uni.size());
}

}  // namespace

TEST(Mask, RejectsDegenerateAndNonBinaryGrids) {
  EXPECT_THROW(Mask(2, 2, {0, 0, 0, 0}), std::invalid_argument);
  EXPECT_THROW(Mask(2, 2, {1, 1, 1, 1}), std::invalid_argument);
  EXPECT_THROW(Mask(2, 2, {1, 2, 0, 0}), std::invalid_argument);
  EXPECT_THROW(Mask(2, 2, {1, 0, 0}), ShapeError);
  const Mask m(2, 3, {1, 0, 0, 1, 1, 0});
  EXPECT_EQ(m.visible_count(), 3);
  EXPECT_EQ(m.visible_columns(), 2);
  EXPECT_EQ(Mask::from_tensor(m.to_tensor()), m);
}

TEST(SampleMask, ExtremeProbabilitiesExhaustRetries) {
  Rng rng(1);
  EXPECT_THROW(sample_mask(4, 4, 0.0, 1.0, rng, 50), MaskSamplingError);
}

TEST(SampleMask, SmallGeometryRejected) {
  Rng rng(1);
  EXPECT_THROW(sample_mask(1, 4, 0.5, 0.2, rng), std::invalid_argument);
  EXPECT_THROW(sample_mask(4, 1, 0.5, 0.2, rng), std::invalid_argument);
}

TEST(SampleMask, TwentyPercentOfTenChannelsIsTwo) {
  Rng rng(2);
  EXPECT_EQ(visible_channels_per_column(10, 0.2), 2);
  EXPECT_EQ(visible_channels_per_column(58, 0.2), 12);
  EXPECT_EQ(visible_channels_per_column(3, 0.2), 1);
  for (int t = 0; t < 200; ++t) {
    const Mask m = sample_mask(10, 16, 0.5, 0.2, rng);
    for (std::int64_t j = 0; j < 16; ++j) {
      std::int64_t ones = 0;
      for (std::int64_t i = 0; i < 10; ++i) ones += m.visible(i, j);
      EXPECT_TRUE(ones == 0 || ones == 2);
    }
  }
}

TEST(SampleMask, MaskedColumnFrequencyNearHalf) {
  Rng rng(3);
  std::int64_t masked = 0, total = 0;
  for (int t = 0; t < 10000; ++t) {
    const Mask m = sample_mask(10, 16, 0.5, 0.2, rng);
    masked += 16 - m.visible_columns();
    total += 16;
  }
  const double freq = double(masked) / double(total);
  EXPECT_GE(freq, 0.48);
  EXPECT_LE(freq, 0.52);
}

TEST(SampleMask, ChannelsChosenUniformly) {
  Rng rng(4);
  std::vector<int> hits(5, 0);
  int visible_cols = 0;
  for (int t = 0; t < 4000; ++t) {
    const Mask m = sample_mask(5, 4, 0.5, 0.4, rng);
    for (std::int64_t j = 0; j < 4; ++j) {
      if (!m.column_visible(j)) continue;
      ++visible_cols;
      for (std::int64_t i = 0; i < 5; ++i) hits[static_cast<std::size_t>(i)] += m.visible(i, j);
    }
  }
  // Each channel is kept with probability 2/5 in a visible column.
  for (int h : hits) EXPECT_NEAR(double(h) / visible_cols, 0.4, 0.02);
}

TEST(SampleMask, Deterministic) {
  Rng a(9), b(9);
  EXPECT_EQ(sample_mask(8, 8, 0.5, 0.2, a), sample_mask(8, 8, 0.5, 0.2, b));
}

TEST(Overlap, IdentityDisjointAndHandCase) {
  const Mask a = from_cells(2, 2, {{0, 0}, {0, 1}});
  const Mask b = from_cells(2, 2, {{0, 1}, {1, 1}});
  const Mask c = from_cells(2, 2, {{1, 0}, {1, 1}});
  EXPECT_DOUBLE_EQ(overlap_ratio(a, a), 1.0);
  EXPECT_DOUBLE_EQ(overlap_ratio(a, c), 0.0);
  EXPECT_DOUBLE_EQ(overlap_ratio(a, b), 1.0 / 3.0);
  EXPECT_THROW(overlap_ratio(a, from_cells(2, 3, {{0, 0}})), ShapeError);
}

TEST(Overlap, SymmetricBoundedAndMatchesSetOracle) {
  Rng rng(5);
  for (int t = 0; t < 500; ++t) {
    const Mask a = sample_mask(6, 5, 0.5, 0.4, rng);
    const Mask b = sample_mask(6, 5, 0.5, 0.4, rng);
    const double ab = overlap_ratio(a, b);
    EXPECT_EQ(ab, overlap_ratio(b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    EXPECT_DOUBLE_EQ(ab, jaccard_oracle(a, b));
  }
}

TEST(MaskPair, TenThousandPairsInsideInterval) {
  Rng rng(6);
  for (int t = 0; t < 10000; ++t) {
    const MaskPair p = sample_mask_pair(10, 16, rng);
    ASSERT_GT(p.overlap, 0.2);
    ASSERT_LT(p.overlap, 0.8);
    ASSERT_EQ(p.overlap, overlap_ratio(p.m1, p.m2));
  }
}

TEST(MaskPair, DeterministicGivenSeed) {
  Rng a(11), b(11);
  const MaskPair x = sample_mask_pair(8, 8, a);
  const MaskPair y = sample_mask_pair(8, 8, b);
  EXPECT_EQ(x.m1, y.m1);
  EXPECT_EQ(x.m2, y.m2);
}

TEST(MaskPair, InfeasibleGeometryExhaustsRetries) {
  Rng rng(7);
  MaskingConfig cfg;
  cfg.p_chan_visible = 1.0;
  cfg.max_retries = 200;
  // With C=N=2 and full columns, two masks either coincide (overlap 1) or are disjoint (0).
  EXPECT_THROW(sample_mask_pair(2, 2, rng, cfg), MaskSamplingError);
}

TEST(MaskPair, SecondMaskKeepsColumnStatistics) {
  Rng rng(12);
  std::int64_t masked1 = 0, masked2 = 0;
  for (int t = 0; t < 5000; ++t) {
    const MaskPair p = sample_mask_pair(10, 16, rng);
    masked1 += 16 - p.m1.visible_columns();
    masked2 += 16 - p.m2.visible_columns();
    for (std::int64_t j = 0; j < 16; ++j) {
      std::int64_t ones = 0;
      for (std::int64_t i = 0; i < 10; ++i) ones += p.m2.visible(i, j);
      ASSERT_TRUE(ones == 0 || ones == 2);
    }
  }
  // Acceptance conditions on overlap, so the masked-column rate may shift a little.
  EXPECT_NEAR(double(masked2) / (5000 * 16), 0.5, 0.03);
  EXPECT_NEAR(double(masked1) / (5000 * 16), 0.5, 0.03);
}

TEST(MaskPair, IndependentProposalIsInfeasibleAtPaperGeometry) {
  Rng rng(13);
  MaskingConfig cfg;
  cfg.pair_redraw = 1.0;
  cfg.max_retries = 2000;
  // Two independent 12-of-58 masks almost never share 20% of their visible cells.
  EXPECT_THROW(sample_mask_pair(58, 16, rng, cfg), MaskSamplingError);
  cfg.pair_redraw = 0.0;
  EXPECT_THROW(sample_mask_pair(10, 16, rng, cfg), std::invalid_argument);
}
