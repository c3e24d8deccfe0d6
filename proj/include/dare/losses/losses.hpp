#pragma once

#include <vector>

#include "dare/masking/mask.hpp"
#include "dare/model/networks.hpp"
#include "dare/numerics/autodiff.hpp"

namespace dare::losses {

struct LossWeights {
  double rc = 1.0;
  double aa = 1.0;
  double ma = 0.1;
};

struct LossReport {
  double l_rc = 0.0;
  double l_aa = 0.0;
  double l_ma = 0.0;
  double l_total = 0.0;
};

// Rows of `cells` (ordered (b, i, j) over a B x C x N grid) at masked cells, in the
// same order reconstruct() emits its predictions.
ad::Var masked_cells(ad::Var cells, const std::vector<masking::Mask>& masks);

// Mean squared error over masked cells; targets are detached.
ad::Var reconstruction_loss(ad::Var recon, ad::Var targets);

// MSE between encoder tokens and the target tokens at the same (stream, column).
ad::Var anchor_alignment_loss(const model::LatentTokens& enc, const model::LatentTokens& tenc);

// Per-sample mean over streams and columns, projected and L2-normalized: B x D_proj.
ad::Var pool_project(const model::LatentTokens& tokens, ad::Var projection);

// Symmetric InfoNCE over the B x B similarity z1 z2^T / kappa, kappa = exp(log_kappa).
ad::Var mask_alignment_loss(ad::Var z1, ad::Var z2, ad::Var log_kappa);

// Weighted sum of the three terms; throws NonFiniteError on a non-finite component.
ad::Var combined_loss(ad::Var rc, ad::Var aa, ad::Var ma, const LossWeights& weights = {});
LossReport combine(double rc, double aa, double ma, const LossWeights& weights = {});

}  // namespace dare::losses
