#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "dare/numerics/parameter_store.hpp"

namespace dare::model {

struct ModelConfig {
  std::int64_t dim = 64;
  int layers_enc = 2;
  int layers_pred = 2;
  int layers_rec = 3;
  int heads = 4;
  std::int64_t glt = 1;  // S, global learnable tokens per column
  std::int64_t patch_len = 64;
  std::int64_t channels = 8;
  std::int64_t patches = 16;
  double tau = 0.99;
  double rope_base = 10000.0;
  // false places every token at position 0, removing the rotary embedding.
  bool rotary = true;
  std::int64_t mlp_ratio = 4;
  std::int64_t proj_dim = 0;  // 0 selects dim
  // Reconstruct the channel-embedded patch (width D) instead of the raw p samples.
  bool target_adds_channel_embedding = false;

  std::int64_t projection_dim() const { return proj_dim > 0 ? proj_dim : dim; }
  std::int64_t reconstruction_width() const { return target_adds_channel_embedding ? dim : patch_len; }
  std::int64_t segment_samples() const { return patches * patch_len; }
  // Throws std::invalid_argument when the configuration is unusable.
  void validate() const;
};

// nano | light | small | base | deep. Geometry fields keep their defaults.
ModelConfig preset(std::string_view name);

// theta, psi, phi, the mask-alignment head, and Delta.
struct ModelParams {
  ParameterStore encoder;
  ParameterStore predictor;
  ParameterStore reconstructor;
  ParameterStore ma_head;
  ParameterStore target;

  // Single store with "encoder/", "predictor/", "reconstructor/", "ma_head/", "target/" prefixes.
  ParameterStore flatten() const;
  static ModelParams unflatten(const ParameterStore& flat);
};

inline constexpr const char* kLogKappa = "log_kappa";
inline constexpr const char* kProjection = "proj";

// Truncated-normal(0.02) weights, zero biases, unit norms, kappa = 0.1, Delta = theta.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

struct ParamCount {
  std::int64_t encoder = 0;
  std::int64_t predictor = 0;
  std::int64_t reconstructor = 0;
  std::int64_t ma_head = 0;
  std::int64_t target = 0;
  // Parameters updated by the optimizer during pre-training (target excluded).
  std::int64_t trainable() const { return encoder + predictor + reconstructor + ma_head; }
};

ParamCount count_params(const ModelConfig& config);

// Throws std::invalid_argument naming the first missing or misshapen encoder entry.
void check_encoder_layout(const ParameterStore& encoder, const ModelConfig& config);

}  // namespace dare::model
