#include "dare/clp/clp.hpp"

#include <stdexcept>

namespace dare::clp {

void ClpConfig::validate() const {
  if (c_in < 1 || c_target < 1) throw std::invalid_argument("clp: channel counts must be positive");
  if (temporal_kernel < 1 || temporal_kernel % 2 == 0) throw std::invalid_argument("clp: temporal_kernel must be odd");
  if (!(dropout_proj >= 0 && dropout_proj < 1) || !(dropout_head >= 0 && dropout_head < 1)) {
    throw std::invalid_argument("clp: dropout rates must lie in [0, 1)");
  }
  if (num_classes < 2) throw std::invalid_argument("clp: need at least two classes");
}

ClpConfig::Pool parse_pool(const std::string& name) {
  if (name == "mean") return ClpConfig::Pool::mean;
  if (name == "flatten") return ClpConfig::Pool::flatten;
  throw std::invalid_argument("head_pool must be 'mean' or 'flatten', got '" + name + "'");
}

const char* to_string(ClpConfig::Pool pool) { return pool == ClpConfig::Pool::mean ? "mean" : "flatten"; }

std::int64_t head_features(const ClpConfig& config, const model::ModelConfig& model) {
  return config.head_pool == ClpConfig::Pool::mean ? model.dim : model.glt * model.patches * model.dim;
}

ParameterStore init_clp(const ClpConfig& config, const model::ModelConfig& model, std::uint64_t seed) {
  config.validate();
  Rng rng(seed ^ 0xC1F0C1F0ULL);
  ParameterStore s(seed);
  Tensor w({config.c_target, config.c_in});
  if (config.c_in == config.c_target) {
    for (std::int64_t i = 0; i < config.c_in; ++i) w.at(i, i) = 1;
  } else {
    for (auto& v : w.values()) v = static_cast<Real>(rng.truncated_normal(0.02));
  }
  s.add(kChannelWeights, std::move(w));
  Tensor k({config.c_target, config.temporal_kernel});
  for (std::int64_t c = 0; c < config.c_target; ++c) k.at(c, config.temporal_kernel / 2) = 1;
  s.add(kTemporalKernels, std::move(k));
  Tensor h({head_features(config, model), config.num_classes});
  for (auto& v : h.values()) v = static_cast<Real>(rng.truncated_normal(0.02));
  s.add(kHeadWeights, std::move(h));
  s.add(kHeadBias, Tensor({config.num_classes}));
  return s;
}

std::int64_t clp_param_count(const ClpConfig& c, const model::ModelConfig& model) {
  return c.c_target * c.c_in + c.c_target * c.temporal_kernel + head_features(c, model) * c.num_classes + c.num_classes;
}

Tensor channel_transform(const Tensor& x, const Tensor& weights) {
  ad::Tape tape;
  return ad::channel_mix(tape.constant(x), tape.constant(weights)).value();
}

Tensor temporal_conv(const Tensor& x, const Tensor& kernels) {
  ad::Tape tape;
  return ad::depthwise_conv1d(tape.constant(x), tape.constant(kernels)).value();
}

ad::Var probe_forward(const Tensor& signals, const model::Bound& clp, const model::Bound& encoder,
                      const model::ModelConfig& model, const ClpConfig& config, Rng* rng) {
  config.validate();
  if (signals.rank() != 3 || signals.dim(1) != config.c_in) throw ShapeError("probe_forward: expected B x C_in x T input");
  if (config.c_target != model.channels) throw ShapeError("probe_forward: c_target must equal the encoder's channel count");
  const std::int64_t B = signals.dim(0), T = signals.dim(2);
  if (T != model.segment_samples()) throw ShapeError("probe_forward: segment length does not match the encoder");
  ad::Tape& tape = *clp[kChannelWeights].tape;

  ad::Var x = ad::channel_mix(tape.constant(signals), clp[kChannelWeights]);
  x = ad::depthwise_conv1d(x, clp[kTemporalKernels]);
  if (rng != nullptr) x = ad::dropout(x, static_cast<Real>(config.dropout_proj), *rng);

  model::PatchRows rows;
  rows.batch = B;
  rows.channels = model.channels;
  rows.patches = model.patches;
  rows.raw = ad::reshape(x, {B * model.channels * model.patches, model.patch_len});
  std::vector<masking::Mask> masks(static_cast<std::size_t>(B), masking::Mask::all_visible(model.channels, model.patches));
  model::LatentTokens tokens = model::encode(rows, masks, encoder, model);

  ad::Var pooled;
  if (config.head_pool == ClpConfig::Pool::mean) {
    std::vector<std::int64_t> offsets = tokens.row_offset;
    offsets.push_back(tokens.rows());
    pooled = ad::segment_mean_rows(tokens.values, std::move(offsets));
  } else {
    // Rows of a sample are contiguous in (stream, column) order.
    pooled = ad::reshape(tokens.values, {B, head_features(config, model)});
  }
  if (rng != nullptr) pooled = ad::dropout(pooled, static_cast<Real>(config.dropout_head), *rng);
  return ad::linear(pooled, clp[kHeadWeights], clp[kHeadBias]);
}

}  // namespace dare::clp
