#include "dare/losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dare::losses {

using ad::Var;

Var masked_cells(Var cells, const std::vector<masking::Mask>& masks) {
  if (masks.empty()) throw ShapeError("masked_cells: no masks");
  const std::int64_t C = masks.front().channels(), N = masks.front().patches();
  if (cells.rows() != static_cast<std::int64_t>(masks.size()) * C * N) {
    throw ShapeError("masked_cells: cell rows do not match the masks");
  }
  std::vector<std::int32_t> index;
  for (std::size_t b = 0; b < masks.size(); ++b) {
    for (std::int64_t i = 0; i < C; ++i) {
      for (std::int64_t j = 0; j < N; ++j) {
        if (!masks[b].visible(i, j)) index.push_back(static_cast<std::int32_t>((static_cast<std::int64_t>(b) * C + i) * N + j));
      }
    }
  }
  if (index.empty()) throw ShapeError("masked_cells: no masked cells");
  return ad::gather_rows(cells, std::move(index));
}

Var reconstruction_loss(Var recon, Var targets) {
  if (recon.rows() == 0) throw ShapeError("reconstruction_loss: no masked cells");
  if (recon.shape() != targets.shape()) throw ShapeError("reconstruction_loss: one prediction per masked cell required");
  return ad::mse(recon, ad::detach(targets));
}

Var anchor_alignment_loss(const model::LatentTokens& enc, const model::LatentTokens& tenc) {
  if (enc.batch() != tenc.batch() || enc.streams != tenc.streams) {
    throw ShapeError("anchor_alignment_loss: token batches differ");
  }
  std::vector<std::int32_t> index;
  index.reserve(static_cast<std::size_t>(enc.rows()));
  for (std::int64_t b = 0; b < enc.batch(); ++b) {
    const auto& tcols = tenc.time_index[static_cast<std::size_t>(b)];
    std::vector<std::int32_t> where(tcols.empty() ? 0 : static_cast<std::size_t>(*std::max_element(tcols.begin(), tcols.end()) + 1), -1);
    for (std::size_t k = 0; k < tcols.size(); ++k) where[static_cast<std::size_t>(tcols[k])] = static_cast<std::int32_t>(k);
    const auto& cols = enc.time_index[static_cast<std::size_t>(b)];
    for (std::int64_t s = 0; s < enc.streams; ++s) {
      for (auto j : cols) {
        if (j < 0 || j >= static_cast<std::int32_t>(where.size()) || where[static_cast<std::size_t>(j)] < 0) {
          throw ShapeError("anchor_alignment_loss: target tokens miss an encoder column");
        }
        index.push_back(static_cast<std::int32_t>(tenc.row(b, s, where[static_cast<std::size_t>(j)])));
      }
    }
  }
  Var reference = ad::detach(ad::gather_rows(tenc.values, std::move(index)));
  return ad::mse(enc.values, reference);
}

Var pool_project(const model::LatentTokens& tokens, Var projection) {
  if (tokens.rows() == 0) throw ShapeError("pool_project: no tokens");
  std::vector<std::int64_t> offsets = tokens.row_offset;
  offsets.push_back(tokens.rows());
  Var pooled = ad::segment_mean_rows(tokens.values, std::move(offsets));
  return ad::l2_normalize_rows(ad::matmul(pooled, projection));
}

Var mask_alignment_loss(Var z1, Var z2, Var log_kappa) {
  const std::int64_t B = z1.rows();
  if (B < 2) throw ShapeError("mask_alignment_loss: need at least two samples");
  if (z1.shape() != z2.shape()) throw ShapeError("mask_alignment_loss: batches differ");
  Var inv_kappa = ad::exp(ad::scale(log_kappa, Real(-1)));
  Var sim = ad::scale_by(ad::matmul_bt(z1, z2), inv_kappa);
  std::vector<std::int32_t> diag(static_cast<std::size_t>(B));
  for (std::int64_t i = 0; i < B; ++i) diag[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(i);
  Var forward = ad::cross_entropy(sim, diag);
  Var backward = ad::cross_entropy(ad::transpose(sim), diag);
  return ad::scale(ad::add(forward, backward), Real(0.5));
}

Var combined_loss(Var rc, Var aa, Var ma, const LossWeights& w) {
  for (Var v : {rc, aa, ma}) {
    if (v.valid()) v.value().require_finite("loss component");
  }
  Var total;
  auto accumulate = [&](Var v, double weight) {
    if (!v.valid() || weight == 0.0) return;
    Var term = weight == 1.0 ? v : ad::scale(v, static_cast<Real>(weight));
    total = total.valid() ? ad::add(total, term) : term;
  };
  accumulate(rc, w.rc);
  accumulate(aa, w.aa);
  accumulate(ma, w.ma);
  if (!total.valid()) throw std::invalid_argument("combined_loss: every term is disabled");
  return total;
}

LossReport combine(double rc, double aa, double ma, const LossWeights& w) {
  if (!std::isfinite(rc) || !std::isfinite(aa) || !std::isfinite(ma)) {
    throw NonFiniteError("combine: non-finite loss component");
  }
  return {rc, aa, ma, w.rc * rc + w.aa * aa + w.ma * ma};
}

}  // namespace dare::losses
