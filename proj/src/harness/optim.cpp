#include "dare/harness/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dare::harness {

void OneCycle::validate() const {
  if (!(max_lr > 0)) throw std::invalid_argument("max_lr must be positive");
  if (!(warmup_fraction > 0 && warmup_fraction < 1)) throw std::invalid_argument("warmup_fraction must lie in (0, 1)");
  if (!(div_factor > 0) || !(final_div_factor > 0)) throw std::invalid_argument("division factors must be positive");
}

std::int64_t onecycle_peak_step(std::int64_t total_steps, const OneCycle& cfg) {
  const auto warm = static_cast<std::int64_t>(std::llround(cfg.warmup_fraction * static_cast<double>(total_steps)));
  return std::clamp<std::int64_t>(warm - 1, 0, total_steps - 1);
}

namespace {

// Exact at both ends so step 0 and the peak hit their nominal values.
double cosine(double start, double end, double pct) {
  if (pct <= 0.0) return start;
  if (pct >= 1.0) return end;
  return end + (start - end) / 2.0 * (1.0 + std::cos(std::numbers::pi * pct));
}

}  // namespace

double onecycle_lr(std::int64_t step, std::int64_t total_steps, const OneCycle& cfg) {
  cfg.validate();
  if (total_steps < 1 || step < 0 || step >= total_steps) throw std::out_of_range("onecycle_lr: step out of range");
  const double initial = cfg.max_lr / cfg.div_factor;
  const double final_lr = initial / cfg.final_div_factor;
  const std::int64_t peak = onecycle_peak_step(total_steps, cfg);
  if (step <= peak) {
    if (peak == 0) return cfg.max_lr;
    return cosine(initial, cfg.max_lr, static_cast<double>(step) / static_cast<double>(peak));
  }
  const std::int64_t span = total_steps - 1 - peak;
  return cosine(cfg.max_lr, final_lr, static_cast<double>(step - peak) / static_cast<double>(span));
}

AdamW::AdamW(const ParameterStore& params, AdamWConfig cfg) : cfg_(cfg), m_(params.zeros_like()), v_(params.zeros_like()) {}

void AdamW::step(ParameterStore& params, const ParameterStore& grads, double lr) {
  if (!params.same_layout(m_) || !grads.same_layout(m_)) throw std::invalid_argument("AdamW: parameter layout changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const auto b1 = static_cast<Real>(cfg_.beta1), b2 = static_cast<Real>(cfg_.beta2);
  const auto step_size = static_cast<Real>(lr / bc1);
  const auto inv_bc2 = static_cast<Real>(1.0 / bc2);
  const auto eps = static_cast<Real>(cfg_.eps);
  for (std::size_t e = 0; e < params.size(); ++e) {
    Tensor& p = params.entry(e).value;
    const Tensor& g = grads.entry(e).value;
    Tensor& m = m_.entry(e).value;
    Tensor& v = v_.entry(e).value;
    const Real decay = p.rank() >= 2 ? static_cast<Real>(1.0 - lr * cfg_.weight_decay) : Real(1);
    for (std::int64_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      p[i] = p[i] * decay - step_size * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
    }
    p.require_finite("AdamW step");
  }
}

double clip_global_norm(ParameterStore& grads, double max_norm) {
  double sq = 0;
  for (const auto& e : grads) {
    for (auto g : e.value.values()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NonFiniteError("non-finite gradient norm");
  if (norm > max_norm && norm > 0) {
    const auto s = static_cast<Real>(max_norm / norm);
    for (auto& e : grads) {
      for (auto& g : e.value.values()) g *= s;
    }
  }
  return norm;
}

}  // namespace dare::harness
