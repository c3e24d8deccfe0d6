#include <gtest/gtest.h>

#include <cmath>

#include "dare/harness/pretrain.hpp"
#include "dare/harness/probe.hpp"
#include "test_util.hpp"

using namespace dare;
using namespace dare::harness;

TEST(OneCycle, EndpointsAndPeak) {
  const OneCycle cfg;
  EXPECT_EQ(onecycle_lr(0, 1000, cfg), 5e-4 / 24);
  const auto peak = onecycle_peak_step(1000, cfg);
  EXPECT_EQ(peak, 299);
  EXPECT_EQ(onecycle_lr(peak, 1000, cfg), 5e-4);
  EXPECT_NEAR(onecycle_lr(999, 1000, cfg), 5e-4 / (24 * 1e4), 1e-20);
  EXPECT_THROW(onecycle_lr(1000, 1000, cfg), std::out_of_range);
  EXPECT_THROW(onecycle_lr(-1, 1000, cfg), std::out_of_range);
  OneCycle bad;
  bad.warmup_fraction = 1.0;
  EXPECT_THROW(onecycle_lr(0, 10, bad), std::invalid_argument);
}

TEST(OneCycle, MonotoneOnEachPhase) {
  const OneCycle cfg;
  for (std::int64_t total : {1, 2, 3, 10, 97, 960}) {
    const auto peak = onecycle_peak_step(total, cfg);
    double prev = onecycle_lr(0, total, cfg);
    for (std::int64_t s = 1; s < total; ++s) {
      const double lr = onecycle_lr(s, total, cfg);
      if (s <= peak) EXPECT_GE(lr, prev) << total << " " << s;
      else EXPECT_LE(lr, prev) << total << " " << s;
      EXPECT_LE(lr, cfg.max_lr);
      prev = lr;
    }
  }
}

TEST(AdamW, FirstStepMatchesHandComputation) {
  ParameterStore p;
  p.add("w", Tensor({1, 2}, 1.0));
  p.add("b", Tensor({2}, 1.0));
  ParameterStore g = p.zeros_like();
  g.at("w")[0] = 0.5;
  g.at("w")[1] = -2;
  g.at("b")[0] = 3;
  AdamWConfig cfg;
  AdamW opt(p, cfg);
  opt.step(p, g, 0.1);
  // Bias-corrected first step moves each coordinate by lr * sign(g) (up to eps);
  // only the matrix is decayed.
  const double decay = 1 - 0.1 * 0.01;
  EXPECT_NEAR(p.at("w")[0], decay - 0.1, 1e-7);
  EXPECT_NEAR(p.at("w")[1], decay + 0.1, 1e-7);
  EXPECT_NEAR(p.at("b")[0], 0.9, 1e-7);
  EXPECT_EQ(p.at("b")[1], 1.0);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(ClipGlobalNorm, ScalesOnlyAboveThreshold) {
  ParameterStore g;
  g.add("a", Tensor({2}, 3.0));
  g.add("b", Tensor({1}, 1.0));
  EXPECT_NEAR(clip_global_norm(g, 10.0), std::sqrt(19.0), 1e-12);
  EXPECT_EQ(g.at("a")[0], 3.0);
  clip_global_norm(g, 1.0);
  double sq = 0;
  for (const auto& e : g)
    for (auto v : e.value.values()) sq += v * v;
  EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-12);
}

namespace {

model::ModelConfig small_model() {
  model::ModelConfig c = model::preset("nano");
  c.channels = 4;
  c.patch_len = 16;
  c.patches = 4;
  return c;
}

data::SegmentBatch synthetic(const model::ModelConfig& m, std::int64_t per_class, double noise, std::uint64_t seed) {
  data::SyntheticConfig s;
  s.channels = m.channels;
  s.samples = m.segment_samples();
  s.sample_rate = 64;
  s.carrier_hz = {4, 12};
  s.noise_std = noise;
  s.seed = seed;
  return data::generate_synthetic(s, per_class);
}

PretrainConfig small_pretrain(std::uint64_t seed) {
  PretrainConfig c;
  c.model = small_model();
  c.batch_size = 16;
  c.epochs = 10;
  c.seed = seed;
  c.schedule.max_lr = 2e-3;
  return c;
}

bool bitwise_equal(const ParameterStore& a, const ParameterStore& b) {
  if (!a.same_layout(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.entry(i).value.storage() != b.entry(i).value.storage()) return false;
  return true;
}

}  // namespace

TEST(Pretrain, FiftyStepsReduceLoss) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const PretrainConfig cfg = small_pretrain(seed);
    const auto data = synthetic(cfg.model, 40, 0.1, seed);  // 80 segments = 5 batches, 10 epochs = 50 steps
    const auto init = model::init_params(cfg.model, seed);
    const auto before = evaluate_losses(init, data, cfg, 123);
    const auto res = pretrain(cfg, data, init);
    ASSERT_EQ(res.log.size(), 50u);
    const auto after = evaluate_losses(res.params, data, cfg, 123);
    EXPECT_LT(after.l_total, before.l_total) << "seed " << seed;
    EXPECT_LT(res.log.back().losses.l_total, res.log.front().losses.l_total) << "seed " << seed;
  }
}

TEST(Pretrain, DeterministicAndLogged) {
  PretrainConfig cfg = small_pretrain(7);
  cfg.epochs = 2;
  const auto data = synthetic(cfg.model, 16, 0.1, 7);
  std::vector<std::string> lines;
  const auto a = pretrain(cfg, data, [&](const StepLog& s) { lines.push_back(format_step_log(s)); });
  const auto b = pretrain(cfg, data);
  EXPECT_TRUE(bitwise_equal(a.params.flatten(), b.params.flatten()));
  ASSERT_EQ(lines.size(), a.log.size());
  for (std::size_t i = 0; i < lines.size(); ++i) EXPECT_EQ(lines[i], format_step_log(b.log[i]));
  EXPECT_EQ(std::count(lines[0].begin(), lines[0].end(), ','), 6);
}

TEST(Pretrain, UnitTauFreezesTarget) {
  PretrainConfig cfg = small_pretrain(4);
  cfg.epochs = 1;
  cfg.model.tau = 1.0;
  const auto data = synthetic(cfg.model, 16, 0.1, 4);
  const auto init = model::init_params(cfg.model, 4);
  const auto res = pretrain(cfg, data, init);
  EXPECT_TRUE(bitwise_equal(res.params.target, init.target));
  EXPECT_FALSE(bitwise_equal(res.params.encoder, init.encoder));
}

TEST(Pretrain, AblationRemovesGradientButKeepsMeasurement) {
  PretrainConfig cfg = small_pretrain(5);
  cfg.epochs = 1;
  cfg.use_ma = false;
  cfg.optimizer.weight_decay = 0;  // decay alone would still shrink the projection
  const auto data = synthetic(cfg.model, 16, 0.1, 5);
  const auto init = model::init_params(cfg.model, 5);
  const auto res = pretrain(cfg, data, init);
  // The alignment head only receives gradient from the MA term.
  EXPECT_TRUE(bitwise_equal(res.params.ma_head, init.ma_head));
  EXPECT_GT(res.log.front().losses.l_ma, 0.0);
}

TEST(Pretrain, Errors) {
  PretrainConfig cfg = small_pretrain(6);
  cfg.batch_size = 1;
  const auto data = synthetic(cfg.model, 4, 0.1, 6);
  EXPECT_THROW(pretrain(cfg, data), std::invalid_argument);
  cfg = small_pretrain(6);
  cfg.model.channels = 5;
  EXPECT_THROW(pretrain(cfg, data), std::invalid_argument);
  cfg = small_pretrain(6);
  cfg.schedule.max_lr = 1e30;
  cfg.clip_norm = 1e30;
  cfg.epochs = 3;
  EXPECT_THROW(pretrain(cfg, data), TrainingDiverged);
}

namespace {

ProbeConfig small_probe(const model::ModelConfig& m, std::int64_t c_in) {
  ProbeConfig c;
  c.clp.c_in = c_in;
  c.clp.c_target = m.channels;
  c.clp.temporal_kernel = 7;
  c.clp.num_classes = 2;
  c.epochs = 20;
  c.batch_size = 16;
  c.lr = 5e-3;
  return c;
}

}  // namespace

TEST(Probe, SeparableDataReachesPerfectAccuracy) {
  const auto m = small_model();
  const auto enc = model::init_params(m, 8).encoder;
  const auto train = synthetic(m, 32, 1e-3, 8);
  const auto test = synthetic(m, 16, 1e-3, 9);
  const auto res = probe_train(small_probe(m, 4), m, enc, train, test);
  EXPECT_EQ(res.report.classification.balanced_accuracy, 1.0);
  ASSERT_TRUE(res.report.ranking.has_value());
  EXPECT_EQ(res.epochs.size(), 20u);
  EXPECT_TRUE(bitwise_equal(res.encoder, enc));
  EXPECT_NE(res.epochs.back().to_json().find("\"balanced_accuracy\""), std::string::npos);
}

TEST(Probe, ShuffledLabelsStayNearChance) {
  const auto m = small_model();
  const auto enc = model::init_params(m, 10).encoder;
  auto train = synthetic(m, 32, 0.1, 10);
  auto test = synthetic(m, 64, 0.1, 11);
  Rng rng(12);
  rng.shuffle(*train.labels);
  rng.shuffle(*test.labels);
  const auto res = probe_train(small_probe(m, 4), m, enc, train, test);
  EXPECT_NEAR(res.report.classification.balanced_accuracy, 0.5, 0.1);
}

TEST(Probe, LabelMismatchRejected) {
  const auto m = small_model();
  const auto enc = model::init_params(m, 13).encoder;
  const auto data = synthetic(m, 4, 0.1, 13);
  ProbeConfig cfg = small_probe(m, 4);
  cfg.clp.num_classes = 3;
  EXPECT_THROW(probe_train(cfg, m, enc, data, data), std::invalid_argument);
  data::SegmentBatch unlabeled = data;
  unlabeled.labels.reset();
  EXPECT_THROW(probe_train(small_probe(m, 4), m, enc, unlabeled, data), std::invalid_argument);
  EXPECT_THROW(probe_train(small_probe(m, 3), m, enc, data, data), std::invalid_argument);
}
