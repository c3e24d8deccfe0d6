#include "dare/data/patching.hpp"

#include <stdexcept>

namespace dare::data {

Tensor patchify(const Tensor& signals, std::int64_t patch_len) {
  if (signals.rank() != 3) throw ShapeError("patchify expects B x C x T");
  if (patch_len <= 0 || signals.dim(2) % patch_len != 0) {
    throw std::invalid_argument("segment length must be a positive multiple of the patch length");
  }
  return signals.reshaped({signals.dim(0), signals.dim(1), signals.dim(2) / patch_len, patch_len});
}

Tensor unpatchify(const Tensor& raw) {
  if (raw.rank() != 4) throw ShapeError("unpatchify expects B x C x N x p");
  return raw.reshaped({raw.dim(0), raw.dim(1), raw.dim(2) * raw.dim(3)});
}

PatchGrid make_patch_grid(const SegmentBatch& batch, const ParameterStore& encoder_params) {
  const Tensor& proj = encoder_params.at(kPatchProjection);
  const Tensor& chan = encoder_params.at(kChannelEmbedding);
  if (proj.rank() != 2 || chan.rank() != 2 || proj.dim(1) != chan.dim(1)) {
    throw ShapeError("patch projection / channel embedding layout mismatch");
  }
  if (chan.dim(0) != batch.channels()) {
    throw ShapeError("batch has " + std::to_string(batch.channels()) + " channels, parameters expect " +
                     std::to_string(chan.dim(0)));
  }
  const std::int64_t p = proj.dim(0);
  batch.validate(p);
  PatchGrid grid;
  grid.raw = patchify(batch.signals, p);
  grid.patch_projection = proj;
  grid.channel_embeddings = chan;
  const std::int64_t b = grid.batch(), c = grid.channels(), n = grid.patches(), d = proj.dim(1);
  grid.embedded = Tensor({b, c, n, d});
  auto out = grid.embedded.matrix(b * c * n);
  out.noalias() = grid.raw.matrix(b * c * n) * proj.matrix();
  for (std::int64_t bi = 0; bi < b; ++bi) {
    for (std::int64_t i = 0; i < c; ++i) {
      out.middleRows((bi * c + i) * n, n).rowwise() += chan.matrix().row(i);
    }
  }
  return grid;
}

ad::Var embed_patches(ad::Var raw_rows, ad::Var projection, ad::Var channel_embeddings, std::int64_t channels,
                      std::int64_t patches) {
  const std::int64_t rows = raw_rows.rows();
  if (rows % (channels * patches) != 0) throw ShapeError("embed_patches: row count is not B*C*N");
  std::vector<std::int32_t> chan_index(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    chan_index[static_cast<std::size_t>(r)] = static_cast<std::int32_t>((r / patches) % channels);
  }
  ad::Var projected = ad::linear(raw_rows, projection, ad::Var{});
  return ad::add(projected, ad::gather_rows(channel_embeddings, std::move(chan_index)));
}

}  // namespace dare::data
