#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dare/data/segments.hpp"
#include "dare/harness/optim.hpp"
#include "dare/losses/losses.hpp"
#include "dare/masking/mask.hpp"
#include "dare/model/config.hpp"
#include "dare/model/networks.hpp"

namespace dare::harness {

struct PretrainConfig {
  model::ModelConfig model;
  masking::MaskingConfig masking;
  losses::LossWeights weights;
  OneCycle schedule;
  AdamWConfig optimizer;
  double clip_norm = 1.0;
  int epochs = 30;
  std::int64_t batch_size = 64;
  std::uint64_t seed = 0;
  // Ablations: a disabled term is still measured but contributes no gradient.
  bool use_aa = true;
  bool use_ma = true;

  losses::LossWeights effective_weights() const;
  void validate() const;
};

// Loss divergence, carrying the step at which it happened.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::int64_t step, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

// All five parameter groups on one tape; the target is always constant.
struct BoundModel {
  model::Bound encoder;
  model::Bound predictor;
  model::Bound reconstructor;
  model::Bound ma_head;
  model::Bound target;

  BoundModel(ad::Tape& tape, const model::ModelParams& params, bool trainable);
  model::ModelParams gradients() const;
};

struct ObjectiveTerms {
  ad::Var rc, aa, ma, total;
  losses::LossReport report() const;
};

// One pre-training objective: view M1 through encode/predict/reconstruct,
// target tokens over the full grid, view M2 through the encoder for the
// alignment term.
ObjectiveTerms pretrain_objective(ad::Tape& tape, const BoundModel& model, const Tensor& signals,
                                  const std::vector<masking::MaskPair>& masks, const model::ModelConfig& config,
                                  const losses::LossWeights& weights);

std::vector<masking::MaskPair> sample_mask_pairs(std::int64_t batch, const model::ModelConfig& config, Rng& rng,
                                                 const masking::MaskingConfig& masking);

struct StepLog {
  std::int64_t step = 0;
  double lr = 0.0;
  losses::LossReport losses;
  double kappa = 0.0;
};

inline constexpr const char* kStepLogHeader = "step,lr,l_rc,l_aa,l_ma,l_total,kappa";
std::string format_step_log(const StepLog& log);

struct PretrainResult {
  model::ModelParams params;
  std::vector<StepLog> log;
};

using StepCallback = std::function<void(const StepLog&)>;

// Deterministic given (config, data). Throws TrainingDiverged on a non-finite loss.
PretrainResult pretrain(const PretrainConfig& config, const data::SegmentBatch& data, const StepCallback& on_step = {});
PretrainResult pretrain(const PretrainConfig& config, const data::SegmentBatch& data, model::ModelParams init,
                        const StepCallback& on_step = {});

// Mean loss terms (no gradient) over `data` with masks drawn from `seed`.
losses::LossReport evaluate_losses(const model::ModelParams& params, const data::SegmentBatch& data,
                                   const PretrainConfig& config, std::uint64_t seed);

}  // namespace dare::harness
