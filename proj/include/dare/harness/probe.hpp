#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dare/clp/clp.hpp"
#include "dare/data/segments.hpp"
#include "dare/harness/optim.hpp"
#include "dare/metrics/metrics.hpp"
#include "dare/model/config.hpp"

namespace dare::harness {

struct ProbeConfig {
  clp::ClpConfig clp;
  double lr = 5e-4;  // constant
  AdamWConfig optimizer;
  double clip_norm = 1.0;
  int epochs = 20;
  std::int64_t batch_size = 32;
  std::uint64_t seed = 0;
  bool evaluate_each_epoch = true;

  void validate() const;
};

struct ProbeEpoch {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<metrics::EvalReport> eval;

  std::string to_json() const;
};

struct ProbeResult {
  ParameterStore clp;
  ParameterStore encoder;  // bitwise equal to the input when the encoder is frozen
  std::vector<ProbeEpoch> epochs;
  metrics::EvalReport report;  // held-out split after the last epoch
};

// Trains the conv-linear probe with cross-entropy and evaluates on `test`.
ProbeResult probe_train(const ProbeConfig& config, const model::ModelConfig& model, const ParameterStore& encoder,
                        const data::SegmentBatch& train, const data::SegmentBatch& test);

// Predictions in eval mode (no dropout).
metrics::EvalReport probe_evaluate(const ParameterStore& clp_params, const ParameterStore& encoder,
                                   const model::ModelConfig& model, const clp::ClpConfig& config,
                                   const data::SegmentBatch& data, std::int64_t batch_size = 64);

}  // namespace dare::harness
