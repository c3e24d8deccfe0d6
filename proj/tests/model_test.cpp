#include <gtest/gtest.h>

#include <cmath>

#include <Eigen/Dense>

#include "dare/data/patching.hpp"
#include "dare/losses/losses.hpp"
#include "dare/model/config.hpp"
#include "dare/model/networks.hpp"
#include "test_util.hpp"

using namespace dare;
using namespace dare::model;
using masking::Mask;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.dim = 16;
  c.heads = 2;
  c.layers_enc = 1;
  c.layers_pred = 1;
  c.layers_rec = 1;
  c.glt = 2;
  c.patch_len = 8;
  c.channels = 4;
  c.patches = 4;
  return c;
}

Tensor signals_for(const ModelConfig& c, std::int64_t batch, std::uint64_t seed) {
  Rng rng(seed);
  return dare::testing::random_tensor({batch, c.channels, c.segment_samples()}, rng);
}

// Two visible columns (0 and 2) with channels {0, 1} and {3} visible.
Mask partial_mask() {
  std::vector<std::uint8_t> bits(16, 0);
  bits[0 * 4 + 0] = bits[1 * 4 + 0] = bits[3 * 4 + 2] = 1;
  return Mask(4, 4, bits);
}

// Every column visible, one masked cell.
Mask full_columns_mask() {
  std::vector<std::uint8_t> bits(16, 1);
  bits[2 * 4 + 1] = 0;
  return Mask(4, 4, bits);
}

using Mat = Eigen::MatrixXd;

Mat to_mat(const Tensor& t, std::int64_t rows) {
  Mat m(rows, t.size() / rows);
  for (std::int64_t r = 0; r < m.rows(); ++r)
    for (std::int64_t c = 0; c < m.cols(); ++c) m(r, c) = t[r * m.cols() + c];
  return m;
}

Mat layer_norm_oracle(const Mat& x, const Tensor& g, const Tensor& b) {
  Mat out = x;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    for (Eigen::Index c = 0; c < x.cols(); ++c) out(r, c) = (x(r, c) - mu) / std::sqrt(var + 1e-5) * g[c] + b[c];
  }
  return out;
}

}  // namespace

TEST(Config, ValidateRejectsBadGeometry) {
  ModelConfig c = tiny();
  EXPECT_NO_THROW(c.validate());
  c.dim = 18;  // not divisible by 2 * heads
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = tiny();
  c.glt = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(preset("huge"), std::invalid_argument);
}

TEST(Config, AnalyticCountMatchesInitializedStores) {
  for (auto name : {"nano", "light"}) {
    ModelConfig c = preset(name);
    const ModelParams p = init_params(c, 1);
    const ParamCount n = count_params(c);
    EXPECT_EQ(n.encoder, p.encoder.total_elements());
    EXPECT_EQ(n.predictor, p.predictor.total_elements());
    EXPECT_EQ(n.reconstructor, p.reconstructor.total_elements());
    EXPECT_EQ(n.ma_head, p.ma_head.total_elements());
    EXPECT_EQ(n.target, p.target.total_elements());
  }
}

TEST(Config, PresetCountsNearTableAtPaperGeometry) {
  // Millions of pre-training parameters per preset at C=58, N=16, p=64.
  const std::pair<const char*, double> table[] = {
      {"nano", 0.6}, {"light", 3.8}, {"small", 14.7}, {"base", 19.9}, {"deep", 77.8}};
  for (auto [name, millions] : table) {
    ModelConfig c = preset(name);
    c.channels = 58;
    const double got = double(count_params(c).trainable()) / 1e6;
    EXPECT_NEAR(got / millions, 1.0, 0.10) << name << " has " << got << "M";
  }
}

TEST(Config, InitializationContract) {
  const ModelConfig c = tiny();
  const ModelParams p = init_params(c, 3);
  EXPECT_EQ(p.target, p.encoder);
  for (const auto& e : p.encoder) {
    if (e.name.find("_b") != std::string::npos) {
      for (auto v : e.value.values()) EXPECT_EQ(v, 0);
    }
    if (e.name.find("_w") != std::string::npos) {
      for (auto v : e.value.values()) EXPECT_LE(std::abs(v), 0.04 + 1e-12);
    }
  }
  EXPECT_NEAR(std::exp(p.ma_head.at(kLogKappa)[0]), 0.1, 1e-6);
  EXPECT_EQ(ModelParams::unflatten(p.flatten()).flatten(), p.flatten());
  EXPECT_EQ(init_params(c, 3).flatten(), p.flatten());
  EXPECT_NE(init_params(c, 4).flatten(), p.flatten());
}

TEST(Encode, ShapeCountsVisibleColumns) {
  const ModelConfig c = tiny();
  const ModelParams p = init_params(c, 1);
  ad::Tape tape;
  Bound enc(tape, p.encoder, false);
  const PatchRows rows = patch_rows(tape, signals_for(c, 2, 5), c.patch_len);
  const LatentTokens t = encode(rows, {partial_mask(), full_columns_mask()}, enc, c);
  EXPECT_EQ(t.sample(0).shape(), (Shape{2, 2, 16}));
  EXPECT_EQ(t.sample(1).shape(), (Shape{2, 4, 16}));
  EXPECT_EQ(t.time_index[0], (std::vector<std::int32_t>{0, 2}));
  EXPECT_EQ(t.rows(), 2 * 2 + 2 * 4);
}

TEST(Encode, UniformAttentionReducesToMeanToken) {
  ModelConfig c = tiny();
  ModelParams p = init_params(c, 2);
  // Zero query/key projections: every score is zero, attention is uniform.
  Tensor& qkv_w = p.encoder.at("block0/qkv_w");
  Tensor& qkv_b = p.encoder.at("block0/qkv_b");
  for (std::int64_t r = 0; r < 16; ++r)
    for (std::int64_t col = 0; col < 32; ++col) qkv_w.at(r, col) = 0;
  for (std::int64_t col = 0; col < 32; ++col) qkv_b[col] = 0;
  Rng rng(6);
  for (auto& e : p.encoder) {
    if (e.name.find("_b") != std::string::npos && e.name != "block0/qkv_b") e.value = dare::testing::random_tensor(e.value.shape(), rng, 0.1);
  }

  const Tensor signals = signals_for(c, 1, 7);
  ad::Tape tape;
  Bound enc(tape, p.encoder, false);
  const LatentTokens t = encode(patch_rows(tape, signals, c.patch_len), {Mask::all_visible(4, 4)}, enc, c);

  const auto& P = p.encoder;
  const Mat proj = to_mat(P.at(data::kPatchProjection), 8);
  const Mat chan = to_mat(P.at(data::kChannelEmbedding), 4);
  const Mat glt = to_mat(P.at("glt"), 2);
  const Mat wv = to_mat(qkv_w, 16).rightCols(16);
  const Eigen::RowVectorXd bv = to_mat(qkv_b, 1).rightCols(16);
  const Mat wp = to_mat(P.at("block0/proj_w"), 16);
  const Mat w1 = to_mat(P.at("block0/fc1_w"), 16), w2 = to_mat(P.at("block0/fc2_w"), 64);
  const Eigen::RowVectorXd bp = to_mat(P.at("block0/proj_b"), 1), b1 = to_mat(P.at("block0/fc1_b"), 1),
                           b2 = to_mat(P.at("block0/fc2_b"), 1);
  const Tensor raw = data::patchify(signals, 8);
  double worst = 0;
  for (std::int64_t j = 0; j < 4; ++j) {
    Mat x(6, 16);
    for (std::int64_t i = 0; i < 4; ++i) {
      Eigen::RowVectorXd patch(8);
      for (int k = 0; k < 8; ++k) patch[k] = raw[(i * 4 + j) * 8 + k];
      x.row(i) = patch * proj + chan.row(i);
    }
    x.bottomRows(2) = glt;
    const Mat h = layer_norm_oracle(x, P.at("block0/ln1_g"), P.at("block0/ln1_b"));
    const Eigen::RowVectorXd mean_v = ((h * wv).rowwise() + bv).colwise().mean();
    const Eigen::RowVectorXd o = mean_v * wp + bp;
    for (int s = 0; s < 2; ++s) {
      Mat x1 = x.row(4 + s) + o;
      Mat u = (layer_norm_oracle(x1, P.at("block0/ln2_g"), P.at("block0/ln2_b")) * w1).rowwise() + b1;
      for (Eigen::Index k = 0; k < u.size(); ++k) u(k) = ad::gelu_value(Real(u(k)));
      const Mat x2 = x1 + (u * w2).rowwise().operator+(b2);
      const Mat out = layer_norm_oracle(x2, P.at("norm_g"), P.at("norm_b"));
      for (int d = 0; d < 16; ++d) worst = std::max(worst, std::abs(out(0, d) - t.values.value().at(t.row(0, s, j), d)));
    }
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(Encode, ChannelPermutationInvariance) {
  const ModelConfig c = tiny();
  const ModelParams p = init_params(c, 8);
  const Tensor signals = signals_for(c, 1, 9);
  const std::vector<int> perm = {2, 0, 3, 1};
  ModelParams q = p;
  Tensor permuted(signals.shape());
  const Mask m = partial_mask();
  std::vector<std::uint8_t> bits(16);
  for (int i = 0; i < 4; ++i) {
    for (int t = 0; t < c.segment_samples(); ++t) permuted[perm[i] * c.segment_samples() + t] = signals[i * c.segment_samples() + t];
    for (int d = 0; d < 16; ++d) q.encoder.at(data::kChannelEmbedding).at(perm[i], d) = p.encoder.at(data::kChannelEmbedding).at(i, d);
    for (int j = 0; j < 4; ++j) bits[perm[i] * 4 + j] = m.visible(i, j);
  }
  ad::Tape tape;
  Bound e1(tape, p.encoder, false), e2(tape, q.encoder, false);
  const LatentTokens a = encode(patch_rows(tape, signals, 8), {m}, e1, c);
  const LatentTokens b = encode(patch_rows(tape, permuted, 8), {Mask(4, 4, bits)}, e2, c);
  EXPECT_LT(max_abs_diff(a.values.value(), b.values.value()), 1e-12);
}

TEST(Predict, ShapeAndNoPaddingWithoutMaskedColumns) {
  const ModelConfig c = tiny();
  const ModelParams p = init_params(c, 10);
  ad::Tape tape;
  Bound enc(tape, p.encoder, false), pred(tape, p.predictor, true);
  const std::vector<Mask> masks = {full_columns_mask()};
  const LatentTokens e = encode(patch_rows(tape, signals_for(c, 1, 11), 8), masks, enc, c);
  const LatentTokens out = predict(e, masks, pred, c);
  EXPECT_EQ(out.sample(0).shape(), (Shape{2, 4, 16}));
  tape.backward(ad::sum(out.values));
  // The mask token only enters through padding.
  for (auto v : tape.grad(pred["mask_token"]).values()) EXPECT_EQ(v, 0);

  ad::Tape tape2;
  Bound enc2(tape2, p.encoder, false), pred2(tape2, p.predictor, true);
  const std::vector<Mask> masks2 = {partial_mask()};
  const LatentTokens e2 = encode(patch_rows(tape2, signals_for(c, 1, 11), 8), masks2, enc2, c);
  const LatentTokens out2 = predict(e2, masks2, pred2, c);
  EXPECT_EQ(out2.sample(0).shape(), (Shape{2, 4, 16}));
  tape2.backward(ad::sum(ad::mul(out2.values, out2.values)));
  double g = 0;
  for (auto v : tape2.grad(pred2["mask_token"]).values()) g += std::abs(v);
  EXPECT_GT(g, 0);
}

TEST(Predict, IdenticalInputsWithoutRotationAreColumnConstant) {
  ModelConfig c = tiny();
  c.rotary = false;
  ModelParams p = init_params(c, 12);
  Rng rng(13);
  const Tensor token = dare::testing::random_tensor({16}, rng);
  p.predictor.at("mask_token") = token;
  const Mask m = partial_mask();
  ad::Tape tape;
  LatentTokens enc;
  enc.streams = 2;
  enc.row_offset = {0};
  enc.time_index = {{0, 2}};
  Tensor vals({4, 16});
  for (std::int64_t r = 0; r < 4; ++r)
    for (std::int64_t d = 0; d < 16; ++d) vals.at(r, d) = token[d];
  enc.values = tape.constant(vals);
  Bound pred(tape, p.predictor, false);
  const LatentTokens out = predict(enc, {m}, pred, c);
  for (std::int64_t s = 0; s < 2; ++s)
    for (std::int64_t j = 1; j < 4; ++j)
      for (std::int64_t d = 0; d < 16; ++d)
        EXPECT_NEAR(out.values.value().at(out.row(0, s, j), d), out.values.value().at(out.row(0, s, 0), d), 1e-12);

  // With rotation the columns differ.
  c.rotary = true;
  const LatentTokens rotated = predict(enc, {m}, pred, c);
  EXPECT_GT(std::abs(rotated.values.value().at(rotated.row(0, 0, 3), 0) - rotated.values.value().at(rotated.row(0, 0, 0), 0)), 1e-6);
}

namespace {

struct Forward {
  LatentTokens enc, pred;
  ReconstructorInput rin;
  ad::Var recon;
};

Forward forward(ad::Tape& tape, const ModelParams& p, const Bound& enc, const Bound& pred, const Bound& rec,
                const Tensor& signals, const std::vector<Mask>& masks, const ModelConfig& c) {
  Forward f;
  f.enc = encode(patch_rows(tape, signals, c.patch_len), masks, enc, c);
  f.pred = predict(f.enc, masks, pred, c);
  f.rin = reconstructor_input(f.enc, f.pred, masks, rec, enc, c);
  f.recon = reconstruct(f.rin, rec, c);
  (void)p;
  return f;
}

}  // namespace

TEST(Reconstruct, OneVectorPerMaskedCell) {
  const ModelConfig c = tiny();
  const ModelParams p = init_params(c, 14);
  ad::Tape tape;
  Bound enc(tape, p.encoder, false), pred(tape, p.predictor, false), rec(tape, p.reconstructor, false);
  const std::vector<Mask> masks = {partial_mask(), full_columns_mask()};
  const Forward f = forward(tape, p, enc, pred, rec, signals_for(c, 2, 15), masks, c);
  EXPECT_EQ(f.recon.rows(), masks[0].masked_count() + masks[1].masked_count());
  EXPECT_EQ(f.recon.cols(), c.patch_len);
  EXPECT_EQ(f.rin.context.size(), std::size_t(2 * 2 * 4));
}

TEST(Reconstruct, ChannelHeadsReadTheirOwnChannel) {
  const ModelConfig c = tiny();
  ModelParams p = init_params(c, 16);
  ad::Tape tape;
  Bound enc(tape, p.encoder, false), pred(tape, p.predictor, false), rec(tape, p.reconstructor, false);
  const std::vector<Mask> masks = {partial_mask()};
  const Tensor signals = signals_for(c, 1, 17);
  const Forward a = forward(tape, p, enc, pred, rec, signals, masks, c);
  // Changing channel 2's head moves only rows of masked cells in channel 2.
  p.reconstructor.at("head_b")[2 * 8 + 3] += 1;
  ad::Tape tape2;
  Bound enc2(tape2, p.encoder, false), pred2(tape2, p.predictor, false), rec2(tape2, p.reconstructor, false);
  const Forward b = forward(tape2, p, enc2, pred2, rec2, signals, masks, c);
  std::int64_t row = 0;
  for (std::int64_t i = 0; i < 4; ++i)
    for (std::int64_t j = 0; j < 4; ++j) {
      if (masks[0].visible(i, j)) continue;
      for (std::int64_t k = 0; k < 8; ++k) {
        const double diff = b.recon.value().at(row, k) - a.recon.value().at(row, k);
        EXPECT_NEAR(diff, (i == 2 && k == 3) ? 1.0 : 0.0, 1e-12);
      }
      ++row;
    }
}

TEST(Reconstruct, ReplaceRuleIgnoresPredictorAtVisibleColumns) {
  const ModelConfig c = tiny();
  const ModelParams p = init_params(c, 18);
  const std::vector<Mask> masks = {partial_mask()};
  ad::Tape tape;
  Bound enc(tape, p.encoder, false), pred(tape, p.predictor, false), rec(tape, p.reconstructor, false);
  const Forward f = forward(tape, p, enc, pred, rec, signals_for(c, 1, 19), masks, c);

  Tensor perturbed = f.pred.values.value();
  Rng rng(20);
  for (std::int64_t s = 0; s < 2; ++s)
    for (std::int64_t j = 0; j < 4; ++j)
      for (std::int64_t d = 0; d < 16; ++d) perturbed.at(f.pred.row(0, s, j), d) += Real(rng.normal());
  LatentTokens pred2 = f.pred;
  pred2.values = tape.constant(perturbed);
  const ReconstructorInput r2 = reconstructor_input(f.enc, pred2, masks, rec, enc, c);
  const Tensor& t1 = f.rin.tokens.value();
  const Tensor& t2 = r2.tokens.value();
  for (std::int64_t s = 0; s < 2; ++s)
    for (std::int64_t j = 0; j < 4; ++j) {
      const std::int64_t row = f.rin.context[static_cast<std::size_t>(s * 4 + j)];
      bool same = true;
      for (std::int64_t d = 0; d < 16; ++d) same = same && t1.at(row, d) == t2.at(row, d);
      EXPECT_EQ(same, masks[0].column_visible(j)) << "stream " << s << " column " << j;
    }
  for (auto q : f.rin.queries)
    for (std::int64_t d = 0; d < 16; ++d) EXPECT_EQ(t1.at(q, d), t2.at(q, d));
}

TEST(Reconstruct, LossGradientReachesEncoderAndMatchesFiniteDifferences) {
  const ModelConfig c = tiny();
  const ModelParams p = init_params(c, 21);
  const Tensor signals = signals_for(c, 2, 22);
  const std::vector<Mask> masks = {partial_mask(), full_columns_mask()};
  auto run = [&](const ParameterStore& encoder, ParameterStore* grads) {
    ad::Tape tape;
    Bound enc(tape, encoder, true), pred(tape, p.predictor, false), rec(tape, p.reconstructor, false);
    const Forward f = forward(tape, p, enc, pred, rec, signals, masks, c);
    const PatchRows rows = patch_rows(tape, signals, c.patch_len);
    ad::Var loss = losses::reconstruction_loss(f.recon, losses::masked_cells(rows.raw, masks));
    if (grads != nullptr) {
      tape.backward(loss);
      *grads = enc.gradients();
    }
    return double(loss.value().item());
  };
  Differentiable fn{[&](const ParameterStore& s) { return run(s, nullptr); },
                    [&](const ParameterStore& s) {
                      ParameterStore g;
                      run(s, &g);
                      return g;
                    }};
  Rng rng(23);
  // eps balances round-off (~1e-16 / eps) against truncation (~eps^2) for
  // query/key weights whose gradients sit near 1e-9 at initialization.
  const GradCheckResult r = grad_check(fn, p.encoder, 1e-4, 64, rng);
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_name << "[" << r.worst_index << "] " << r.worst_analytic << " vs " << r.worst_numeric;
  const ParameterStore g = fn.gradient(p.encoder);
  for (auto name : {data::kPatchProjection, "glt", "block0/qkv_w"}) {
    double norm = 0;
    for (auto v : g.at(name).values()) norm += std::abs(v);
    EXPECT_GT(norm, 0) << name;
  }
}

TEST(TargetEncode, EqualsEncodeWhenDeltaEqualsTheta) {
  const ModelConfig c = tiny();
  const ModelParams p = init_params(c, 24);
  ad::Tape tape;
  Bound enc(tape, p.encoder, false), tgt(tape, p.target, false);
  const PatchRows rows = patch_rows(tape, signals_for(c, 2, 25), 8);
  const LatentTokens a = target_encode(rows, tgt, c);
  const LatentTokens b = encode(rows, {Mask::all_visible(4, 4), Mask::all_visible(4, 4)}, enc, c);
  EXPECT_EQ(a.values.value().storage(), b.values.value().storage());
  EXPECT_EQ(a.sample(1).shape(), (Shape{2, 4, 16}));
}

TEST(TargetEncode, GradientIsolated) {
  const ModelConfig c = tiny();
  ModelParams p = init_params(c, 26);
  const Tensor signals = signals_for(c, 2, 27);
  const std::vector<Mask> masks = {partial_mask(), full_columns_mask()};
  auto aa = [&](const ModelParams& q, ParameterStore* target_grad) {
    ad::Tape tape;
    Bound enc(tape, q.encoder, true), tgt(tape, q.target, true);
    const PatchRows rows = patch_rows(tape, signals, 8);
    ad::Var loss = losses::anchor_alignment_loss(encode(rows, masks, enc, c), target_encode(rows, tgt, c));
    if (target_grad != nullptr) {
      tape.backward(loss);
      *target_grad = tgt.gradients();
    }
    return double(loss.value().item());
  };
  ParameterStore g;
  const double before = aa(p, &g);
  for (const auto& e : g)
    for (auto v : e.value.values()) ASSERT_EQ(v, 0) << e.name;
  p.target.at("glt")[0] += Real(0.5);
  EXPECT_NE(aa(p, nullptr), before);
}

TEST(Momentum, ArithmeticFixedPointAndLayout) {
  ParameterStore delta, theta;
  delta.add("w", Tensor({2}, 0.0));
  theta.add("w", Tensor({2}, 1.0));
  momentum_update(delta, theta, 0.99);
  EXPECT_NEAR(delta.at("w")[0], 0.01, 1e-15);
  const ParameterStore before = delta;
  momentum_update(delta, theta, 1.0);
  EXPECT_EQ(delta, before);
  ParameterStore other;
  other.add("v", Tensor({2}));
  EXPECT_THROW(momentum_update(delta, other, 0.9), std::invalid_argument);
  EXPECT_THROW(momentum_update(delta, theta, 1.5), std::invalid_argument);
}

TEST(Momentum, ClosedFormAfterKUpdates) {
  if (sizeof(Real) != 8) GTEST_SKIP() << "closed form checked in 64-bit";
  const ModelConfig c = tiny();
  const ModelParams p0 = init_params(c, 28);
  const ModelParams p1 = init_params(c, 29);
  for (int k : {1, 10, 100}) {
    ParameterStore delta = p0.target;
    for (int t = 0; t < k; ++t) momentum_update(delta, p1.encoder, 0.99);
    const double tk = std::pow(0.99, k);
    double worst = 0;
    for (std::size_t e = 0; e < delta.size(); ++e)
      for (std::int64_t i = 0; i < delta.entry(e).value.size(); ++i) {
        const double want = tk * p0.target.entry(e).value[i] + (1 - tk) * p1.encoder.entry(e).value[i];
        worst = std::max(worst, std::abs(want - delta.entry(e).value[i]));
      }
    EXPECT_LT(worst, 1e-12) << "k=" << k;
  }
}
