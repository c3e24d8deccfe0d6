#include "dare/harness/probe.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "dare/model/networks.hpp"
#include "json.hpp"

namespace dare::harness {

void ProbeConfig::validate() const {
  clp.validate();
  if (!(lr > 0)) throw std::invalid_argument("probe lr must be positive");
  if (epochs < 1 || batch_size < 1) throw std::invalid_argument("probe epochs and batch_size must be positive");
}

std::string ProbeEpoch::to_json() const {
  nlohmann::json j;
  j["epoch"] = epoch;
  j["train_loss"] = train_loss;
  if (eval) j["eval"] = nlohmann::json::parse(eval->to_json());
  return j.dump();
}

namespace {

void check_labeled(const data::SegmentBatch& d, const clp::ClpConfig& c, const char* which) {
  if (d.size() == 0) throw std::invalid_argument(std::string(which) + " split is empty");
  if (!d.labels) throw std::invalid_argument(std::string(which) + " split has no labels");
  if (d.num_classes != c.num_classes) {
    throw std::invalid_argument(std::string(which) + " split has " + std::to_string(d.num_classes) +
                                " classes, probe expects " + std::to_string(c.num_classes));
  }
  d.validate();
  if (d.channels() != c.c_in) throw std::invalid_argument(std::string(which) + " split channel count differs from c_in");
}

}  // namespace

metrics::EvalReport probe_evaluate(const ParameterStore& clp_params, const ParameterStore& encoder,
                                   const model::ModelConfig& model, const clp::ClpConfig& config,
                                   const data::SegmentBatch& data, std::int64_t batch_size) {
  check_labeled(data, config, "evaluation");
  std::vector<std::int32_t> pred;
  std::vector<double> score;
  for (std::int64_t s = 0; s < data.size(); s += batch_size) {
    const std::int64_t e = std::min(data.size(), s + batch_size);
    std::vector<std::int64_t> index(static_cast<std::size_t>(e - s));
    std::iota(index.begin(), index.end(), s);
    ad::Tape tape;
    model::Bound c(tape, clp_params, false), enc(tape, encoder, false);
    const Tensor logits = clp::probe_forward(data.select(index).signals, c, enc, model, config, nullptr).value();
    const Tensor prob = softmax(logits, 1);
    for (std::int64_t r = 0; r < logits.dim(0); ++r) {
      std::int32_t best = 0;
      for (std::int32_t k = 1; k < config.num_classes; ++k) {
        if (logits.at(r, k) > logits.at(r, best)) best = k;
      }
      pred.push_back(best);
      score.push_back(config.num_classes == 2 ? static_cast<double>(prob.at(r, 1)) : 0.0);
    }
  }
  return metrics::evaluate(*data.labels, pred, config.num_classes, config.num_classes == 2 ? &score : nullptr);
}

ProbeResult probe_train(const ProbeConfig& config, const model::ModelConfig& model, const ParameterStore& encoder,
                        const data::SegmentBatch& train, const data::SegmentBatch& test) {
  config.validate();
  model::check_encoder_layout(encoder, model);
  check_labeled(train, config.clp, "training");
  check_labeled(test, config.clp, "held-out");

  ProbeResult result;
  result.clp = clp::init_clp(config.clp, model, config.seed);
  result.encoder = encoder;
  const bool frozen = config.clp.freeze_encoder;

  ParameterStore trainable;
  trainable.merge(result.clp, clp::kPrefix);
  if (!frozen) trainable.merge(result.encoder, "encoder/");
  AdamW opt(trainable, config.optimizer);

  Rng root(config.seed ^ 0x9B0BEULL);
  Rng order_rng = root.split();
  Rng drop_rng = root.split();
  std::vector<std::int64_t> order(static_cast<std::size_t>(train.size()));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_sum = 0;
    std::int64_t seen = 0;
    for (std::int64_t s = 0; s < train.size(); s += config.batch_size) {
      const std::int64_t e = std::min(train.size(), s + config.batch_size);
      std::vector<std::int64_t> index(order.begin() + s, order.begin() + e);
      const data::SegmentBatch batch = train.select(index);

      ad::Tape tape;
      model::Bound c(tape, result.clp, true), enc(tape, result.encoder, !frozen);
      ad::Var logits = clp::probe_forward(batch.signals, c, enc, model, config.clp, &drop_rng);
      ad::Var loss = ad::cross_entropy(logits, *batch.labels);
      tape.backward(loss);
      loss_sum += static_cast<double>(loss.value().item()) * static_cast<double>(e - s);
      seen += e - s;

      ParameterStore grads;
      grads.merge(c.gradients(), clp::kPrefix);
      if (!frozen) grads.merge(enc.gradients(), "encoder/");
      clip_global_norm(grads, config.clip_norm);
      opt.step(trainable, grads, config.lr);
      result.clp = trainable.extract(clp::kPrefix);
      if (!frozen) result.encoder = trainable.extract("encoder/");
    }
    ProbeEpoch log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(seen);
    if (config.evaluate_each_epoch || epoch + 1 == config.epochs) {
      log.eval = probe_evaluate(result.clp, result.encoder, model, config.clp, test);
    }
    result.epochs.push_back(std::move(log));
  }
  result.report = *result.epochs.back().eval;
  return result;
}

}  // namespace dare::harness
