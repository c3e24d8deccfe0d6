#pragma once

#include <cstdint>
#include <string>

#include "dare/model/config.hpp"
#include "dare/model/networks.hpp"
#include "dare/numerics/autodiff.hpp"
#include "dare/numerics/rng.hpp"

namespace dare::clp {

struct ClpConfig {
  std::int64_t c_in = 8;
  std::int64_t c_target = 8;
  std::int64_t temporal_kernel = 15;
  double dropout_proj = 0.1;
  double dropout_head = 0.5;
  std::int32_t num_classes = 2;
  bool freeze_encoder = true;
  // Head input: mean of the global tokens over streams and columns (D wide),
  // or every (stream, column) token concatenated (S * N * D wide).
  enum class Pool { mean, flatten } head_pool = Pool::mean;

  void validate() const;
};

ClpConfig::Pool parse_pool(const std::string& name);
const char* to_string(ClpConfig::Pool pool);

// Width of the linear head's input for this encoder geometry.
std::int64_t head_features(const ClpConfig& config, const model::ModelConfig& model);

// Probe parameter names; checkpoints store them under "clp/".
inline constexpr const char* kChannelWeights = "channel_w";  // C_target x C_in
inline constexpr const char* kTemporalKernels = "temporal_k";  // C_target x K
inline constexpr const char* kHeadWeights = "head_w";  // head_features x classes
inline constexpr const char* kHeadBias = "head_b";
inline constexpr const char* kPrefix = "clp/";

// Identity channel weights when C_in == C_target (truncated normal otherwise),
// centered delta kernels, truncated-normal head, zero bias.
ParameterStore init_clp(const ClpConfig& config, const model::ModelConfig& model, std::uint64_t seed);
std::int64_t clp_param_count(const ClpConfig& config, const model::ModelConfig& model);

// Value-level forms of the two projection stages.
Tensor channel_transform(const Tensor& x, const Tensor& weights);
Tensor temporal_conv(const Tensor& x, const Tensor& kernels);

// channel mix -> temporal conv -> dropout -> patch embedding -> encoder (all
// visible) -> pooled global tokens -> dropout -> linear. Dropout is active
// only when `rng` is given. Returns B x num_classes logits.
ad::Var probe_forward(const Tensor& signals, const model::Bound& clp, const model::Bound& encoder,
                      const model::ModelConfig& model, const ClpConfig& config, Rng* rng);

}  // namespace dare::clp
