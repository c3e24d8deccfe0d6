#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "dare/masking/mask.hpp"
#include "dare/model/config.hpp"
#include "dare/numerics/autodiff.hpp"

namespace dare::model {

// A parameter store placed on a tape, either as trainable leaves or as constants.
class Bound {
 public:
  Bound(ad::Tape& tape, const ParameterStore& store, bool trainable);

  ad::Var operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  bool trainable() const { return trainable_; }
  const ParameterStore& store() const { return *store_; }
  // Gradients from the tape's last backward pass, laid out like the store.
  ParameterStore gradients() const;

 private:
  ad::Tape* tape_;
  const ParameterStore* store_;
  bool trainable_;
  std::vector<ad::Var> vars_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Raw patch rows ordered (b, i, j), each of width p.
struct PatchRows {
  ad::Var raw;
  std::int64_t batch = 0;
  std::int64_t channels = 0;
  std::int64_t patches = 0;
};

PatchRows patch_rows(ad::Tape& tape, const Tensor& signals, std::int64_t patch_len);

// Per-sample S x K x D token blocks stacked along rows. Sample b occupies rows
// [row_offset[b], row_offset[b] + S * K_b) in (stream, column) order.
struct LatentTokens {
  ad::Var values;
  std::int64_t streams = 0;
  std::vector<std::int64_t> row_offset;
  std::vector<std::vector<std::int32_t>> time_index;

  std::int64_t batch() const { return static_cast<std::int64_t>(time_index.size()); }
  std::int64_t columns(std::int64_t b) const { return static_cast<std::int64_t>(time_index[static_cast<std::size_t>(b)].size()); }
  std::int64_t row(std::int64_t b, std::int64_t s, std::int64_t k) const {
    return row_offset[static_cast<std::size_t>(b)] + s * columns(b) + k;
  }
  std::int64_t rows() const;
  // Detached copy of the S x K x D block of sample b.
  Tensor sample(std::int64_t b) const;
};

// Pre-norm transformer stack ("block{l}/..." plus a final "norm") within row groups.
ad::Var transformer(ad::Var x, const std::vector<ad::RowRange>& groups, const Bound& params, int layers, int heads);

// Spatial attention over the visible channels of each visible column with S
// global tokens appended; returns the global-token outputs.
LatentTokens encode(const PatchRows& patches, const std::vector<masking::Mask>& masks, const Bound& encoder,
                    const ModelConfig& config);

// Mask-token padding to all N columns, rotary positions, temporal attention per (sample, stream).
LatentTokens predict(const LatentTokens& enc, const std::vector<masking::Mask>& masks, const Bound& predictor,
                     const ModelConfig& config);

struct ReconstructorInput {
  ad::Var tokens;                      // context tokens followed by queries, per sample
  std::vector<ad::RowRange> groups;    // one per sample
  std::vector<std::int32_t> context;   // S*N context rows per sample, (b, s, j) order
  std::vector<std::int32_t> queries;   // one row per masked cell, (b, i, j) order
  std::vector<std::int32_t> query_channel;
};

// Replace rule: encoder tokens at visible columns, predictor tokens at masked
// columns, then one query per masked cell. Query channel identity comes from
// the encoder's channel embedding.
ReconstructorInput reconstructor_input(const LatentTokens& enc, const LatentTokens& pred,
                                       const std::vector<masking::Mask>& masks, const Bound& reconstructor,
                                       const Bound& encoder, const ModelConfig& config);

// Returns one reconstruction_width() vector per masked cell in (b, i, j) order,
// read out by the head of the cell's channel.
ad::Var reconstruct(const ReconstructorInput& input, const Bound& reconstructor, const ModelConfig& config);

// encode() with every cell visible, using the target parameters.
LatentTokens target_encode(const PatchRows& patches, const Bound& target, const ModelConfig& config);

// delta <- tau * delta + (1 - tau) * theta, in place.
void momentum_update(ParameterStore& delta, const ParameterStore& theta, double tau);

}  // namespace dare::model
