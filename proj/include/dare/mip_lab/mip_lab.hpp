#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "dare/data/segments.hpp"
#include "dare/masking/mask.hpp"
#include "dare/model/config.hpp"
#include "dare/numerics/autodiff.hpp"
#include "dare/numerics/rng.hpp"

namespace dare::mip {

// Pure 64-bit analysis, independent of the library's Real type.
using Vec = Eigen::VectorXd;

// |‖a − b‖² − (2 − 2 a·b)|. Throws std::invalid_argument unless both are unit vectors (1e-9).
double norm_identity_check(const Vec& a, const Vec& b);

Vec random_unit(std::int64_t dim, Rng& rng);

struct CounterexampleReport {
  double alpha = 0.0;
  double aa_similarity = 0.0;                // common sim(z(m), z̄) over the mask views
  double mean_pairwise_mask_distance = 0.0;  // mean ‖z(m) − z(m')‖ over view pairs
  double max_similarity_spread = 0.0;        // max − min of the per-view similarities
};

// z(m) = normalize(z̄ + α r(m)) with z̄ and the r(m) mutually orthonormal by Gram–Schmidt.
// Throws std::invalid_argument if alpha <= 0, n_masks < 2 or dim <= n_masks, and
// std::runtime_error if orthogonalization degenerates.
CounterexampleReport aa_counterexample(double alpha, std::int64_t dim, std::int64_t n_masks, Rng& rng);

struct MaskVarianceReport {
  double variance = 0.0;         // E ‖z(X, m) − z(X, m')‖²
  double mean_similarity = 0.0;  // E z(X, m)·z(X, m')
  std::int64_t pairs = 0;
};

// Monte-Carlo estimate over every segment of `data` and `n_pairs` mask pairs
// per segment, using the encoder and the alignment head's pooling projection.
MaskVarianceReport mask_variance(const ParameterStore& encoder, const ParameterStore& ma_head,
                                 const model::ModelConfig& config, const data::SegmentBatch& data, int n_pairs, Rng& rng,
                                 const masking::MaskingConfig& masking = {}, std::int64_t batch_size = 64);

// Supervised contrastive loss with positives P(i) = {p != i : y_p = y_i},
// summed over anchors. z rows are unit embeddings. Throws std::invalid_argument when some P(i) is empty.
ad::Var supcon_loss(ad::Var z, const std::vector<std::int32_t>& labels, double kappa);
double supcon_loss(const Eigen::MatrixXd& z, const std::vector<std::int32_t>& labels, double kappa);

}  // namespace dare::mip
