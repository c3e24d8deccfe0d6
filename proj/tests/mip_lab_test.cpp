#include <gtest/gtest.h>

#include <cmath>

#include "dare/mip_lab/mip_lab.hpp"
#include "dare/model/networks.hpp"
#include "test_util.hpp"

using namespace dare;
using namespace dare::mip;

TEST(NormIdentity, EdgeCasesAndRandomPairs) {
  Rng rng(1);
  const Vec a = random_unit(64, rng);
  EXPECT_LT(norm_identity_check(a, a), 1e-15);
  EXPECT_LT(std::abs(2 - 2 * a.dot(a)), 1e-15);
  Vec e0 = Vec::Zero(3), e1 = Vec::Zero(3);
  e0[0] = 1;
  e1[1] = 1;
  EXPECT_EQ((e0 - e1).squaredNorm(), 2.0);
  EXPECT_EQ(norm_identity_check(e0, e1), 0.0);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) worst = std::max(worst, norm_identity_check(random_unit(64, rng), random_unit(64, rng)));
  EXPECT_LT(worst, 1e-12);
  EXPECT_THROW(norm_identity_check(2 * a, a), std::invalid_argument);
}

TEST(Counterexample, ClosedFormsAtHalf) {
  Rng rng(2);
  const auto r = aa_counterexample(0.5, 64, 8, rng);
  EXPECT_NEAR(r.aa_similarity, 1 / std::sqrt(1.25), 1e-9);
  EXPECT_NEAR(r.mean_pairwise_mask_distance, 0.5 * std::sqrt(2.0) / std::sqrt(1.25), 1e-9);
  EXPECT_LT(r.max_similarity_spread, 1e-12);
  // High anchor similarity while the mask views stay apart.
  EXPECT_GT(r.aa_similarity, 0.89);
  EXPECT_GT(r.mean_pairwise_mask_distance, 0.6);
}

TEST(Counterexample, MonotoneInAlphaAndContinuousAtZero) {
  double prev_sim = 2, prev_dist = -1;
  for (int i = 1; i <= 10; ++i) {
    Rng rng(3);
    const double alpha = 0.2 * i;
    const auto r = aa_counterexample(alpha, 32, 4, rng);
    EXPECT_NEAR(r.aa_similarity, 1 / std::sqrt(1 + alpha * alpha), 1e-12);
    EXPECT_LT(r.aa_similarity, prev_sim);
    EXPECT_GT(r.mean_pairwise_mask_distance, prev_dist);
    prev_sim = r.aa_similarity;
    prev_dist = r.mean_pairwise_mask_distance;
  }
  Rng rng(4);
  const auto tiny = aa_counterexample(1e-6, 16, 3, rng);
  EXPECT_NEAR(tiny.aa_similarity, 1.0, 1e-11);
  EXPECT_LT(tiny.mean_pairwise_mask_distance, 1e-5);
}

TEST(Counterexample, Errors) {
  Rng rng(5);
  EXPECT_THROW(aa_counterexample(0.0, 16, 3, rng), std::invalid_argument);
  EXPECT_THROW(aa_counterexample(0.5, 16, 1, rng), std::invalid_argument);
  EXPECT_THROW(aa_counterexample(0.5, 4, 4, rng), std::invalid_argument);
}

namespace {

model::ModelConfig tiny_model() {
  model::ModelConfig c;
  c.dim = 16;
  c.heads = 2;
  c.layers_enc = 1;
  c.layers_pred = 1;
  c.layers_rec = 1;
  c.glt = 2;
  c.patch_len = 8;
  c.channels = 6;
  c.patches = 4;
  return c;
}

data::SegmentBatch tiny_data(const model::ModelConfig& m) {
  data::SyntheticConfig s;
  s.channels = m.channels;
  s.samples = m.segment_samples();
  s.sample_rate = 32;
  s.carrier_hz = {3, 7};
  return data::generate_synthetic(s, 6);
}

}  // namespace

TEST(MaskVariance, MaskIndependentEncoderGivesZero) {
  const auto m = tiny_model();
  model::ModelParams p = model::init_params(m, 6);
  // Every residual branch outputs zero, so the global tokens never see the input.
  for (auto& e : p.encoder) {
    if (e.name.ends_with("proj_w") || e.name.ends_with("fc2_w")) e.value.fill(0);
  }
  Rng rng(7);
  const auto r = mask_variance(p.encoder, p.ma_head, m, tiny_data(m), 3, rng);
  EXPECT_EQ(r.pairs, 36);
  EXPECT_LT(r.variance, 1e-24);
}

TEST(MaskVariance, EqualsTwoMinusTwoSimilarity) {
  const auto m = tiny_model();
  const model::ModelParams p = model::init_params(m, 8);
  Rng rng(9);
  const auto r = mask_variance(p.encoder, p.ma_head, m, tiny_data(m), 2, rng);
  EXPECT_GT(r.variance, 0);
  EXPECT_NEAR(r.variance, 2 - 2 * r.mean_similarity, 1e-12);
  Rng again(9);
  EXPECT_EQ(mask_variance(p.encoder, p.ma_head, m, tiny_data(m), 2, again).variance, r.variance);
  data::SegmentBatch empty;
  EXPECT_THROW(mask_variance(p.encoder, p.ma_head, m, empty, 2, again), std::invalid_argument);
}

TEST(SupCon, DirectFormulaOracle) {
  // z1 == z2 share a label, z3 is orthogonal with another label.
  Eigen::MatrixXd z(3, 2);
  z << 1, 0, 1, 0, 0, 1;
  EXPECT_THROW(supcon_loss(z, {0, 0, 1}, 1.0), std::invalid_argument);
  Eigen::MatrixXd z4(4, 2);
  z4 << 1, 0, 1, 0, 0, 1, 0, 1;
  // Each anchor has one positive at similarity 1 and two negatives at 0.
  const double want = 4 * -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0));
  EXPECT_NEAR(supcon_loss(z4, {0, 0, 1, 1}, 1.0), want, 1e-12);
}

TEST(SupCon, AllEqualSingleLabel) {
  const int B = 5;
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(B, 3);
  z.col(0).setOnes();
  // Every logit equal: each anchor contributes log(B - 1).
  EXPECT_NEAR(supcon_loss(z, std::vector<std::int32_t>(B, 0), 0.5), B * std::log(B - 1.0), 1e-12);
}

TEST(SupCon, TapeMatchesDirectFormula) {
  Rng rng(10);
  Eigen::MatrixXd z(6, 8);
  Tensor t({6, 8});
  for (int i = 0; i < 6; ++i) {
    const Vec v = random_unit(8, rng);
    z.row(i) = v.transpose();
    for (int k = 0; k < 8; ++k) t.at(i, k) = v[k];
  }
  const std::vector<std::int32_t> y = {0, 1, 2, 0, 1, 2};
  ad::Tape tape;
  EXPECT_NEAR(supcon_loss(tape.constant(t), y, 0.3).value().item(), supcon_loss(z, y, 0.3), 1e-12);
}

TEST(SupCon, GradientStepAggregatesClasses) {
  // y1 = y2 != y3; z4 pairs with z3 so every anchor has a positive.
  Rng rng(11);
  Tensor t({4, 8});
  for (int i = 0; i < 4; ++i) {
    const Vec v = random_unit(8, rng);
    for (int k = 0; k < 8; ++k) t.at(i, k) = v[k];
  }
  const std::vector<std::int32_t> y = {0, 0, 1, 1};
  auto sims = [](const Tensor& z) {
    auto dot = [&](int a, int b) {
      double s = 0, na = 0, nb = 0;
      for (int k = 0; k < 8; ++k) {
        s += z.at(a, k) * z.at(b, k);
        na += z.at(a, k) * z.at(a, k);
        nb += z.at(b, k) * z.at(b, k);
      }
      return s / std::sqrt(na * nb);
    };
    return std::pair{dot(0, 1), dot(0, 2)};
  };
  ad::Tape tape;
  ad::Var raw = tape.parameter(t);
  ad::Var z = ad::l2_normalize_rows(raw);
  ad::Var loss = supcon_loss(z, y, 0.5);
  tape.backward(loss);
  Tensor next = t;
  const Tensor g = tape.grad(raw);
  for (std::int64_t i = 0; i < next.size(); ++i) next[i] -= 0.05 * g[i];
  ad::Tape t2;
  const double after = supcon_loss(ad::l2_normalize_rows(t2.constant(next)), y, 0.5).value().item();
  EXPECT_LT(after, loss.value().item());
  const auto [pos0, neg0] = sims(t);
  const auto [pos1, neg1] = sims(next);
  EXPECT_GT(pos1, pos0);
  EXPECT_LT(neg1, neg0);
}
