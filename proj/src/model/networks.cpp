#include "dare/model/networks.hpp"

#include <stdexcept>
#include <utility>

#include "dare/data/patching.hpp"

namespace dare::model {

using ad::RowRange;
using ad::Var;

Bound::Bound(ad::Tape& tape, const ParameterStore& store, bool trainable)
    : tape_(&tape), store_(&store), trainable_(trainable) {
  vars_.reserve(store.size());
  for (const auto& e : store) {
    index_.emplace(e.name, vars_.size());
    vars_.push_back(trainable ? tape.parameter(e.value) : tape.constant(e.value));
  }
}

Var Bound::operator[](const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return vars_[it->second];
}

ParameterStore Bound::gradients() const {
  ParameterStore g(store_->seed());
  for (std::size_t i = 0; i < vars_.size(); ++i) g.add(store_->entry(i).name, tape_->grad(vars_[i]));
  return g;
}

PatchRows patch_rows(ad::Tape& tape, const Tensor& signals, std::int64_t patch_len) {
  Tensor raw = data::patchify(signals, patch_len);
  PatchRows p;
  p.batch = raw.dim(0);
  p.channels = raw.dim(1);
  p.patches = raw.dim(2);
  p.raw = tape.constant(raw.reshaped({p.batch * p.channels * p.patches, patch_len}));
  return p;
}

std::int64_t LatentTokens::rows() const {
  std::int64_t n = 0;
  for (const auto& t : time_index) n += streams * static_cast<std::int64_t>(t.size());
  return n;
}

Tensor LatentTokens::sample(std::int64_t b) const {
  const std::int64_t k = columns(b);
  const std::int64_t d = values.cols();
  const Tensor& v = values.value();
  const Real* src = v.data() + row_offset[static_cast<std::size_t>(b)] * d;
  return Tensor({streams, k, d}, std::vector<Real>(src, src + streams * k * d));
}

Var transformer(Var x, const std::vector<RowRange>& groups, const Bound& p, int layers, int heads) {
  for (int l = 0; l < layers; ++l) {
    const std::string b = "block" + std::to_string(l) + "/";
    Var h = ad::layer_norm(x, p[b + "ln1_g"], p[b + "ln1_b"]);
    Var qkv = ad::linear(h, p[b + "qkv_w"], p[b + "qkv_b"]);
    Var a = ad::attention(qkv, groups, heads);
    x = ad::add(x, ad::linear(a, p[b + "proj_w"], p[b + "proj_b"]));
    h = ad::layer_norm(x, p[b + "ln2_g"], p[b + "ln2_b"]);
    h = ad::gelu(ad::linear(h, p[b + "fc1_w"], p[b + "fc1_b"]));
    x = ad::add(x, ad::linear(h, p[b + "fc2_w"], p[b + "fc2_b"]));
  }
  return ad::layer_norm(x, p["norm_g"], p["norm_b"]);
}

namespace {

void check_masks(const std::vector<masking::Mask>& masks, std::int64_t batch, std::int64_t channels,
                 std::int64_t patches) {
  if (static_cast<std::int64_t>(masks.size()) != batch) throw ShapeError("one mask per sample required");
  for (const auto& m : masks) {
    if (m.channels() != channels || m.patches() != patches) throw ShapeError("mask shape does not match the patch grid");
  }
}

}  // namespace

LatentTokens encode(const PatchRows& patches, const std::vector<masking::Mask>& masks, const Bound& encoder,
                    const ModelConfig& config) {
  const std::int64_t B = patches.batch, C = patches.channels, N = patches.patches, S = config.glt;
  check_masks(masks, B, C, N);
  if (C != config.channels || N != config.patches) throw ShapeError("patch grid does not match the model geometry");
  Var embedded = data::embed_patches(patches.raw, encoder[data::kPatchProjection], encoder[data::kChannelEmbedding], C, N);
  const auto glt_row = static_cast<std::int32_t>(B * C * N);
  Var pool = ad::concat_rows({embedded, encoder["glt"]});

  LatentTokens out;
  out.streams = S;
  out.time_index.resize(static_cast<std::size_t>(B));
  std::vector<std::int32_t> gather;
  std::vector<RowRange> groups;
  std::vector<std::vector<std::int32_t>> glt_pos(static_cast<std::size_t>(B));
  for (std::int64_t b = 0; b < B; ++b) {
    const auto& m = masks[static_cast<std::size_t>(b)];
    auto& cols = out.time_index[static_cast<std::size_t>(b)];
    std::vector<std::vector<std::int32_t>> per_stream(static_cast<std::size_t>(S));
    for (std::int64_t j = 0; j < N; ++j) {
      if (!m.column_visible(j)) continue;
      cols.push_back(static_cast<std::int32_t>(j));
      const auto start = static_cast<std::int64_t>(gather.size());
      for (std::int64_t i = 0; i < C; ++i) {
        if (m.visible(i, j)) gather.push_back(static_cast<std::int32_t>((b * C + i) * N + j));
      }
      for (std::int64_t s = 0; s < S; ++s) {
        per_stream[static_cast<std::size_t>(s)].push_back(static_cast<std::int32_t>(gather.size()));
        gather.push_back(glt_row + static_cast<std::int32_t>(s));
      }
      groups.push_back({start, static_cast<std::int64_t>(gather.size()) - start});
    }
    if (cols.empty()) throw masking::MaskSamplingError("encode: mask has no visible columns");
    for (auto& s : per_stream) glt_pos[static_cast<std::size_t>(b)].insert(glt_pos[static_cast<std::size_t>(b)].end(), s.begin(), s.end());
  }
  Var tokens = ad::gather_rows(pool, std::move(gather));
  Var hidden = transformer(tokens, groups, encoder, config.layers_enc, config.heads);
  std::vector<std::int32_t> pick;
  std::int64_t offset = 0;
  for (std::int64_t b = 0; b < B; ++b) {
    out.row_offset.push_back(offset);
    const auto& pos = glt_pos[static_cast<std::size_t>(b)];
    pick.insert(pick.end(), pos.begin(), pos.end());
    offset += static_cast<std::int64_t>(pos.size());
  }
  out.values = ad::gather_rows(hidden, std::move(pick));
  return out;
}

LatentTokens predict(const LatentTokens& enc, const std::vector<masking::Mask>& masks, const Bound& predictor,
                     const ModelConfig& config) {
  const std::int64_t B = enc.batch(), N = config.patches, S = enc.streams;
  check_masks(masks, B, config.channels, N);
  const auto mask_row = static_cast<std::int32_t>(enc.rows());
  Var pool = ad::concat_rows({enc.values, predictor["mask_token"]});

  LatentTokens out;
  out.streams = S;
  std::vector<std::int32_t> gather, positions;
  std::vector<RowRange> groups;
  for (std::int64_t b = 0; b < B; ++b) {
    const auto& cols = enc.time_index[static_cast<std::size_t>(b)];
    std::vector<std::int32_t> col_of(static_cast<std::size_t>(N), -1);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (cols[k] < 0 || cols[k] >= N) throw ShapeError("predict: column index out of range");
      if (!masks[static_cast<std::size_t>(b)].column_visible(cols[k])) {
        throw ShapeError("predict: encoder tokens do not match the mask");
      }
      col_of[static_cast<std::size_t>(cols[k])] = static_cast<std::int32_t>(k);
    }
    if (static_cast<std::int64_t>(cols.size()) != masks[static_cast<std::size_t>(b)].visible_columns()) {
      throw ShapeError("predict: encoder tokens do not match the mask");
    }
    out.row_offset.push_back(static_cast<std::int64_t>(gather.size()));
    std::vector<std::int32_t> all(static_cast<std::size_t>(N));
    for (std::int64_t j = 0; j < N; ++j) all[static_cast<std::size_t>(j)] = static_cast<std::int32_t>(j);
    out.time_index.push_back(std::move(all));
    for (std::int64_t s = 0; s < S; ++s) {
      groups.push_back({static_cast<std::int64_t>(gather.size()), N});
      for (std::int64_t j = 0; j < N; ++j) {
        const std::int32_t k = col_of[static_cast<std::size_t>(j)];
        gather.push_back(k >= 0 ? static_cast<std::int32_t>(enc.row(b, s, k)) : mask_row);
        positions.push_back(config.rotary ? static_cast<std::int32_t>(j) : 0);
      }
    }
  }
  Var tokens = ad::rope(ad::gather_rows(pool, std::move(gather)), std::move(positions), config.rope_base);
  out.values = transformer(tokens, groups, predictor, config.layers_pred, config.heads);
  return out;
}

ReconstructorInput reconstructor_input(const LatentTokens& enc, const LatentTokens& pred,
                                       const std::vector<masking::Mask>& masks, const Bound& reconstructor,
                                       const Bound& encoder, const ModelConfig& config) {
  const std::int64_t B = enc.batch(), N = config.patches, C = config.channels, S = enc.streams;
  check_masks(masks, B, C, N);
  if (pred.batch() != B || pred.streams != S) throw ShapeError("reconstruct: predictor tokens do not match encoder tokens");

  // Source pool: encoder tokens, predictor tokens, query rows (base + chan_embed[i]).
  Var queries = ad::add(encoder[data::kChannelEmbedding],
                        ad::gather_rows(reconstructor["query_base"], std::vector<std::int32_t>(static_cast<std::size_t>(C), 0)));
  const auto pred_base = static_cast<std::int32_t>(enc.rows());
  const auto query_base = pred_base + static_cast<std::int32_t>(pred.rows());
  Var pool = ad::concat_rows({enc.values, pred.values, queries});

  ReconstructorInput in;
  std::vector<std::int32_t> gather, positions;
  for (std::int64_t b = 0; b < B; ++b) {
    const auto& m = masks[static_cast<std::size_t>(b)];
    if (pred.columns(b) != N) throw ShapeError("reconstruct: predictor must cover all columns");
    std::vector<std::int32_t> col_of(static_cast<std::size_t>(N), -1);
    const auto& cols = enc.time_index[static_cast<std::size_t>(b)];
    for (std::size_t k = 0; k < cols.size(); ++k) col_of[static_cast<std::size_t>(cols[k])] = static_cast<std::int32_t>(k);
    const auto start = static_cast<std::int64_t>(gather.size());
    for (std::int64_t s = 0; s < S; ++s) {
      for (std::int64_t j = 0; j < N; ++j) {
        const std::int32_t k = col_of[static_cast<std::size_t>(j)];
        in.context.push_back(static_cast<std::int32_t>(gather.size()));
        gather.push_back(k >= 0 ? static_cast<std::int32_t>(enc.row(b, s, k))
                                : pred_base + static_cast<std::int32_t>(pred.row(b, s, j)));
        positions.push_back(config.rotary ? static_cast<std::int32_t>(j) : 0);
      }
    }
    for (std::int64_t i = 0; i < C; ++i) {
      for (std::int64_t j = 0; j < N; ++j) {
        if (m.visible(i, j)) continue;
        in.queries.push_back(static_cast<std::int32_t>(gather.size()));
        in.query_channel.push_back(static_cast<std::int32_t>(i));
        gather.push_back(query_base + static_cast<std::int32_t>(i));
        positions.push_back(config.rotary ? static_cast<std::int32_t>(j) : 0);
      }
    }
    in.groups.push_back({start, static_cast<std::int64_t>(gather.size()) - start});
  }
  if (in.queries.empty()) throw ShapeError("reconstruct: no masked cells");
  in.tokens = ad::rope(ad::gather_rows(pool, std::move(gather)), std::move(positions), config.rope_base);
  return in;
}

Var reconstruct(const ReconstructorInput& input, const Bound& reconstructor, const ModelConfig& config) {
  Var hidden = transformer(input.tokens, input.groups, reconstructor, config.layers_rec, config.heads);
  const std::int64_t C = config.channels, D = config.dim, W = config.reconstruction_width();
  Var head_w = ad::reshape(reconstructor["head_w"], {C * D, W});
  Var head_b = reconstructor["head_b"];
  std::vector<std::vector<std::int32_t>> by_channel(static_cast<std::size_t>(C));
  for (std::size_t q = 0; q < input.queries.size(); ++q) {
    by_channel[static_cast<std::size_t>(input.query_channel[q])].push_back(static_cast<std::int32_t>(q));
  }
  std::vector<Var> parts;
  std::vector<std::int32_t> order(input.queries.size());
  std::int32_t row = 0;
  for (std::int64_t i = 0; i < C; ++i) {
    const auto& qs = by_channel[static_cast<std::size_t>(i)];
    if (qs.empty()) continue;
    std::vector<std::int32_t> rows, w_rows;
    for (auto q : qs) {
      rows.push_back(input.queries[static_cast<std::size_t>(q)]);
      order[static_cast<std::size_t>(q)] = row++;
    }
    for (std::int64_t d = 0; d < D; ++d) w_rows.push_back(static_cast<std::int32_t>(i * D + d));
    parts.push_back(ad::linear(ad::gather_rows(hidden, std::move(rows)), ad::gather_rows(head_w, std::move(w_rows)),
                               ad::reshape(ad::gather_rows(head_b, {static_cast<std::int32_t>(i)}), {W})));
  }
  return ad::gather_rows(ad::concat_rows(parts), std::move(order));
}

LatentTokens target_encode(const PatchRows& patches, const Bound& target, const ModelConfig& config) {
  std::vector<masking::Mask> masks(static_cast<std::size_t>(patches.batch),
                                   masking::Mask::all_visible(patches.channels, patches.patches));
  LatentTokens t = encode(patches, masks, target, config);
  t.values = ad::detach(t.values);
  return t;
}

void momentum_update(ParameterStore& delta, const ParameterStore& theta, double tau) {
  if (!delta.same_layout(theta)) throw std::invalid_argument("momentum_update: parameter layouts differ");
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("momentum_update: tau must lie in [0, 1]");
  const auto t = static_cast<Real>(tau);
  const auto u = static_cast<Real>(1.0 - tau);
  for (std::size_t e = 0; e < delta.size(); ++e) {
    Tensor& d = delta.entry(e).value;
    const Tensor& th = theta.entry(e).value;
    for (std::int64_t i = 0; i < d.size(); ++i) d[i] = t * d[i] + u * th[i];
  }
}

}  // namespace dare::model
