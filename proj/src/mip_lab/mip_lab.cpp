#include "dare/mip_lab/mip_lab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dare/losses/losses.hpp"
#include "dare/model/networks.hpp"

namespace dare::mip {

namespace {

void require_unit(const Vec& v) {
  if (std::abs(v.norm() - 1.0) > 1e-9) throw std::invalid_argument("expected a unit vector");
}

std::vector<std::vector<std::int32_t>> positives(const std::vector<std::int32_t>& labels) {
  std::vector<std::vector<std::int32_t>> p(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (j != i && labels[j] == labels[i]) p[i].push_back(static_cast<std::int32_t>(j));
    }
    if (p[i].empty()) throw std::invalid_argument("supcon_loss: sample " + std::to_string(i) + " has no positive");
  }
  return p;
}

}  // namespace

double norm_identity_check(const Vec& a, const Vec& b) {
  require_unit(a);
  require_unit(b);
  if (a.size() != b.size()) throw std::invalid_argument("norm_identity_check: dimension mismatch");
  return std::abs((a - b).squaredNorm() - (2.0 - 2.0 * a.dot(b)));
}

Vec random_unit(std::int64_t dim, Rng& rng) {
  Vec v(dim);
  do {
    for (std::int64_t i = 0; i < dim; ++i) v[i] = rng.normal();
  } while (v.norm() == 0.0);
  return v / v.norm();
}

CounterexampleReport aa_counterexample(double alpha, std::int64_t dim, std::int64_t n_masks, Rng& rng) {
  if (!(alpha > 0)) throw std::invalid_argument("aa_counterexample: alpha must be positive");
  if (n_masks < 2) throw std::invalid_argument("aa_counterexample: need at least two masks");
  if (dim <= n_masks) throw std::invalid_argument("aa_counterexample: dim must exceed n_masks");

  // Modified Gram–Schmidt over z̄ followed by n_masks random directions.
  std::vector<Vec> basis;
  basis.push_back(random_unit(dim, rng));
  while (static_cast<std::int64_t>(basis.size()) < n_masks + 1) {
    Vec v = random_unit(dim, rng);
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& q : basis) v -= q.dot(v) * q;
    }
    const double n = v.norm();
    if (n < 1e-8) throw std::runtime_error("aa_counterexample: Gram-Schmidt degenerated");
    basis.push_back(v / n);
  }
  const Vec& zbar = basis.front();
  std::vector<Vec> views;
  for (std::int64_t m = 1; m <= n_masks; ++m) {
    Vec z = zbar + alpha * basis[static_cast<std::size_t>(m)];
    views.push_back(z / z.norm());
  }

  CounterexampleReport r;
  r.alpha = alpha;
  double lo = 2, hi = -2, sum_sim = 0;
  for (const auto& z : views) {
    const double s = z.dot(zbar);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
    sum_sim += s;
  }
  r.aa_similarity = sum_sim / static_cast<double>(views.size());
  r.max_similarity_spread = hi - lo;
  double dist = 0;
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < views.size(); ++i) {
    for (std::size_t j = i + 1; j < views.size(); ++j) {
      dist += (views[i] - views[j]).norm();
      ++pairs;
    }
  }
  r.mean_pairwise_mask_distance = dist / static_cast<double>(pairs);
  return r;
}

MaskVarianceReport mask_variance(const ParameterStore& encoder, const ParameterStore& ma_head,
                                 const model::ModelConfig& config, const data::SegmentBatch& data, int n_pairs, Rng& rng,
                                 const masking::MaskingConfig& masking, std::int64_t batch_size) {
  if (data.size() == 0) throw std::invalid_argument("mask_variance: empty data");
  if (n_pairs < 1) throw std::invalid_argument("mask_variance: n_pairs must be positive");
  model::check_encoder_layout(encoder, config);
  MaskVarianceReport r;
  double var_sum = 0, sim_sum = 0;
  for (int p = 0; p < n_pairs; ++p) {
    for (std::int64_t s = 0; s < data.size(); s += batch_size) {
      const std::int64_t e = std::min(data.size(), s + batch_size);
      std::vector<std::int64_t> index(static_cast<std::size_t>(e - s));
      std::iota(index.begin(), index.end(), s);
      std::vector<masking::Mask> m1, m2;
      for (std::int64_t b = s; b < e; ++b) {
        auto pair = masking::sample_mask_pair(config.channels, config.patches, rng, masking);
        m1.push_back(std::move(pair.m1));
        m2.push_back(std::move(pair.m2));
      }
      ad::Tape tape;
      model::Bound enc(tape, encoder, false), head(tape, ma_head, false);
      const auto rows = model::patch_rows(tape, data.select(index).signals, config.patch_len);
      const Tensor z1 = losses::pool_project(model::encode(rows, m1, enc, config), head[model::kProjection]).value();
      const Tensor z2 = losses::pool_project(model::encode(rows, m2, enc, config), head[model::kProjection]).value();
      for (std::int64_t b = 0; b < z1.dim(0); ++b) {
        double d2 = 0, dot = 0;
        for (std::int64_t k = 0; k < z1.dim(1); ++k) {
          const double a = z1.at(b, k), c = z2.at(b, k);
          d2 += (a - c) * (a - c);
          dot += a * c;
        }
        var_sum += d2;
        sim_sum += dot;
        ++r.pairs;
      }
    }
  }
  r.variance = var_sum / static_cast<double>(r.pairs);
  r.mean_similarity = sim_sum / static_cast<double>(r.pairs);
  return r;
}

ad::Var supcon_loss(ad::Var z, const std::vector<std::int32_t>& labels, double kappa) {
  const std::int64_t B = z.rows();
  if (static_cast<std::int64_t>(labels.size()) != B) throw std::invalid_argument("supcon_loss: one label per row");
  if (!(kappa > 0)) throw std::invalid_argument("supcon_loss: kappa must be positive");
  const auto pos = positives(labels);
  ad::Tape& tape = *z.tape;
  // Unit rows keep logits within [-1/kappa, 1/kappa]; pushing the diagonal 100
  // below that range removes a != i from the denominator to within e^-100.
  Tensor offset({B, B});
  Tensor weight({B, B});
  for (std::int64_t i = 0; i < B; ++i) {
    offset.at(i, i) = static_cast<Real>(-(2.0 / kappa + 100.0));
    const auto& p = pos[static_cast<std::size_t>(i)];
    for (auto j : p) weight.at(i, j) = static_cast<Real>(-1.0 / static_cast<double>(p.size()));
  }
  ad::Var logits = ad::add(ad::scale(ad::matmul_bt(z, z), static_cast<Real>(1.0 / kappa)), tape.constant(offset));
  return ad::sum(ad::mul(ad::log_softmax(logits), tape.constant(weight)));
}

double supcon_loss(const Eigen::MatrixXd& z, const std::vector<std::int32_t>& labels, double kappa) {
  const auto B = z.rows();
  if (static_cast<std::int64_t>(labels.size()) != B) throw std::invalid_argument("supcon_loss: one label per row");
  if (!(kappa > 0)) throw std::invalid_argument("supcon_loss: kappa must be positive");
  const auto pos = positives(labels);
  const Eigen::MatrixXd s = z * z.transpose() / kappa;
  double loss = 0;
  for (Eigen::Index i = 0; i < B; ++i) {
    double mx = -1e300;
    for (Eigen::Index a = 0; a < B; ++a) {
      if (a != i) mx = std::max(mx, s(i, a));
    }
    double denom = 0;
    for (Eigen::Index a = 0; a < B; ++a) {
      if (a != i) denom += std::exp(s(i, a) - mx);
    }
    const double lse = mx + std::log(denom);
    const auto& p = pos[static_cast<std::size_t>(i)];
    double term = 0;
    for (auto j : p) term += s(i, j) - lse;
    loss -= term / static_cast<double>(p.size());
  }
  return loss;
}

}  // namespace dare::mip
