#include "dare/harness/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "dare/data/patching.hpp"

namespace dare::harness {

losses::LossWeights PretrainConfig::effective_weights() const {
  losses::LossWeights w = weights;
  if (!use_aa) w.aa = 0.0;
  if (!use_ma) w.ma = 0.0;
  return w;
}

void PretrainConfig::validate() const {
  model.validate();
  schedule.validate();
  if (epochs < 1) throw std::invalid_argument("epochs must be positive");
  if (batch_size < 2) throw std::invalid_argument("batch_size must be at least 2 for the alignment term");
  if (!(clip_norm > 0)) throw std::invalid_argument("clip_norm must be positive");
}

BoundModel::BoundModel(ad::Tape& tape, const model::ModelParams& p, bool trainable)
    : encoder(tape, p.encoder, trainable),
      predictor(tape, p.predictor, trainable),
      reconstructor(tape, p.reconstructor, trainable),
      ma_head(tape, p.ma_head, trainable),
      target(tape, p.target, false) {}

model::ModelParams BoundModel::gradients() const {
  model::ModelParams g;
  g.encoder = encoder.gradients();
  g.predictor = predictor.gradients();
  g.reconstructor = reconstructor.gradients();
  g.ma_head = ma_head.gradients();
  g.target = target.gradients();
  return g;
}

losses::LossReport ObjectiveTerms::report() const {
  return {rc.value().item(), aa.value().item(), ma.value().item(), total.value().item()};
}

ObjectiveTerms pretrain_objective(ad::Tape& tape, const BoundModel& m, const Tensor& signals,
                                  const std::vector<masking::MaskPair>& masks, const model::ModelConfig& config,
                                  const losses::LossWeights& weights) {
  std::vector<masking::Mask> m1, m2;
  m1.reserve(masks.size());
  m2.reserve(masks.size());
  for (const auto& p : masks) {
    m1.push_back(p.m1);
    m2.push_back(p.m2);
  }
  const model::PatchRows rows = model::patch_rows(tape, signals, config.patch_len);

  model::LatentTokens enc1 = model::encode(rows, m1, m.encoder, config);
  model::LatentTokens pred = model::predict(enc1, m1, m.predictor, config);
  auto rin = model::reconstructor_input(enc1, pred, m1, m.reconstructor, m.encoder, config);
  ad::Var recon = model::reconstruct(rin, m.reconstructor, config);

  ad::Var cells = rows.raw;
  if (config.target_adds_channel_embedding) {
    cells = data::embed_patches(rows.raw, m.encoder[data::kPatchProjection], m.encoder[data::kChannelEmbedding],
                                rows.channels, rows.patches);
  }
  ObjectiveTerms t;
  t.rc = losses::reconstruction_loss(recon, losses::masked_cells(cells, m1));

  model::LatentTokens tenc = model::target_encode(rows, m.target, config);
  t.aa = losses::anchor_alignment_loss(enc1, tenc);

  model::LatentTokens enc2 = model::encode(rows, m2, m.encoder, config);
  ad::Var proj = m.ma_head[model::kProjection];
  t.ma = losses::mask_alignment_loss(losses::pool_project(enc1, proj), losses::pool_project(enc2, proj),
                                     m.ma_head[model::kLogKappa]);
  t.total = losses::combined_loss(t.rc, t.aa, t.ma, weights);
  return t;
}

std::vector<masking::MaskPair> sample_mask_pairs(std::int64_t batch, const model::ModelConfig& config, Rng& rng,
                                                 const masking::MaskingConfig& masking) {
  std::vector<masking::MaskPair> out;
  out.reserve(static_cast<std::size_t>(batch));
  for (std::int64_t b = 0; b < batch; ++b) {
    out.push_back(masking::sample_mask_pair(config.channels, config.patches, rng, masking));
  }
  return out;
}

std::string format_step_log(const StepLog& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", static_cast<long long>(s.step), s.lr,
                s.losses.l_rc, s.losses.l_aa, s.losses.l_ma, s.losses.l_total, s.kappa);
  return buf;
}

namespace {

// Batches of each epoch, in shuffled order; a trailing batch of one sample is dropped.
std::vector<std::vector<std::int64_t>> epoch_batches(std::int64_t n, std::int64_t batch_size, Rng& rng) {
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::vector<std::int64_t>> batches;
  for (std::int64_t s = 0; s < n; s += batch_size) {
    const std::int64_t e = std::min(n, s + batch_size);
    if (e - s < 2) break;
    batches.emplace_back(order.begin() + s, order.begin() + e);
  }
  return batches;
}

std::int64_t batches_per_epoch(std::int64_t n, std::int64_t batch_size) {
  const std::int64_t full = n / batch_size;
  return full + ((n % batch_size) >= 2 ? 1 : 0);
}

void check_data(const data::SegmentBatch& data, const model::ModelConfig& config) {
  if (data.size() < 2) throw std::invalid_argument("pretraining needs at least two segments");
  data.validate(config.patch_len);
  if (data.channels() != config.channels || data.samples() != config.segment_samples()) {
    throw std::invalid_argument("data geometry " + std::to_string(data.channels()) + "x" + std::to_string(data.samples()) +
                                " does not match the model (" + std::to_string(config.channels) + "x" +
                                std::to_string(config.segment_samples()) + ")");
  }
}

}  // namespace

PretrainResult pretrain(const PretrainConfig& config, const data::SegmentBatch& data, const StepCallback& on_step) {
  return pretrain(config, data, model::init_params(config.model, config.seed), on_step);
}

PretrainResult pretrain(const PretrainConfig& config, const data::SegmentBatch& data, model::ModelParams params,
                        const StepCallback& on_step) {
  config.validate();
  check_data(data, config.model);
  const losses::LossWeights weights = config.effective_weights();

  Rng root(config.seed ^ 0x5EED5EEDULL);
  Rng order_rng = root.split();
  Rng mask_rng = root.split();

  const std::int64_t total = batches_per_epoch(data.size(), config.batch_size) * config.epochs;
  PretrainResult result;
  result.log.reserve(static_cast<std::size_t>(total));

  // Optimizer state covers the trainable groups only.
  auto trainable = [](const model::ModelParams& p) {
    ParameterStore s;
    s.merge(p.encoder, "encoder/");
    s.merge(p.predictor, "predictor/");
    s.merge(p.reconstructor, "reconstructor/");
    s.merge(p.ma_head, "ma_head/");
    return s;
  };
  ParameterStore theta = trainable(params);
  AdamW opt(theta, config.optimizer);

  std::int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (const auto& index : epoch_batches(data.size(), config.batch_size, order_rng)) {
      const Tensor signals = data.select(index).signals;
      const auto masks = sample_mask_pairs(static_cast<std::int64_t>(index.size()), config.model, mask_rng, config.masking);
      const double lr = onecycle_lr(step, total, config.schedule);

      StepLog entry;
      ParameterStore grads;
      try {
        ad::Tape tape;
        BoundModel bound(tape, params, true);
        ObjectiveTerms terms = pretrain_objective(tape, bound, signals, masks, config.model, weights);
        tape.backward(terms.total);
        grads = trainable(bound.gradients());
        entry.losses = terms.report();
      } catch (const NonFiniteError& e) {
        throw TrainingDiverged(step, e.what());
      }
      if (!std::isfinite(entry.losses.l_total)) throw TrainingDiverged(step, "non-finite loss");
      entry.step = step;
      entry.lr = lr;
      entry.kappa = std::exp(static_cast<double>(params.ma_head.at(model::kLogKappa)[0]));

      clip_global_norm(grads, config.clip_norm);
      try {
        opt.step(theta, grads, lr);
      } catch (const NonFiniteError& e) {
        throw TrainingDiverged(step, e.what());
      }
      params = [&] {
        model::ModelParams next;
        next.encoder = theta.extract("encoder/");
        next.predictor = theta.extract("predictor/");
        next.reconstructor = theta.extract("reconstructor/");
        next.ma_head = theta.extract("ma_head/");
        next.target = std::move(params.target);
        return next;
      }();
      model::momentum_update(params.target, params.encoder, config.model.tau);

      result.log.push_back(entry);
      if (on_step) on_step(entry);
      ++step;
    }
  }
  for (auto* s : {&params.encoder, &params.predictor, &params.reconstructor, &params.ma_head, &params.target}) {
    s->set_seed(config.seed);
  }
  result.params = std::move(params);
  return result;
}

losses::LossReport evaluate_losses(const model::ModelParams& params, const data::SegmentBatch& data,
                                   const PretrainConfig& config, std::uint64_t seed) {
  check_data(data, config.model);
  Rng rng(seed);
  losses::LossReport sum;
  std::int64_t count = 0;
  for (std::int64_t s = 0; s < data.size(); s += config.batch_size) {
    const std::int64_t e = std::min(data.size(), s + config.batch_size);
    if (e - s < 2) break;
    std::vector<std::int64_t> index(static_cast<std::size_t>(e - s));
    std::iota(index.begin(), index.end(), s);
    const auto masks = sample_mask_pairs(e - s, config.model, rng, config.masking);
    ad::Tape tape;
    BoundModel bound(tape, params, false);
    const auto r = pretrain_objective(tape, bound, data.select(index).signals, masks, config.model, config.weights).report();
    const auto n = static_cast<double>(e - s);
    sum.l_rc += n * r.l_rc;
    sum.l_aa += n * r.l_aa;
    sum.l_ma += n * r.l_ma;
    sum.l_total += n * r.l_total;
    count += e - s;
  }
  if (count == 0) throw std::invalid_argument("evaluate_losses: not enough data");
  const auto n = static_cast<double>(count);
  return {sum.l_rc / n, sum.l_aa / n, sum.l_ma / n, sum.l_total / n};
}

}  // namespace dare::harness
