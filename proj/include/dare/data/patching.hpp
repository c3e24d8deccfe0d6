#pragma once

#include <cstdint>

#include "dare/data/segments.hpp"
#include "dare/numerics/autodiff.hpp"
#include "dare/numerics/parameter_store.hpp"

namespace dare::data {

// Parameter names inside the encoder store.
inline constexpr const char* kPatchProjection = "patch_proj";
inline constexpr const char* kChannelEmbedding = "chan_embed";

// Non-overlapping temporal patches plus their channel-embedded projection:
// embedded[b,i,j] = raw[b,i,j] * patch_projection + channel_embeddings[i].
struct PatchGrid {
  Tensor raw;       // B x C x N x p
  Tensor embedded;  // B x C x N x D
  Tensor channel_embeddings;  // C x D
  Tensor patch_projection;    // p x D

  std::int64_t batch() const { return raw.dim(0); }
  std::int64_t channels() const { return raw.dim(1); }
  std::int64_t patches() const { return raw.dim(2); }
  std::int64_t patch_len() const { return raw.dim(3); }
  std::int64_t dim() const { return embedded.dim(3); }
};

// B x C x T -> B x C x N x p. Row-major layout makes this a reshape.
Tensor patchify(const Tensor& signals, std::int64_t patch_len);
Tensor unpatchify(const Tensor& raw);

PatchGrid make_patch_grid(const SegmentBatch& batch, const ParameterStore& encoder_params);

// Differentiable embedding of patch rows ordered (b, i, j): returns (B*C*N) x D.
ad::Var embed_patches(ad::Var raw_rows, ad::Var projection, ad::Var channel_embeddings, std::int64_t channels,
                      std::int64_t patches);

}  // namespace dare::data
