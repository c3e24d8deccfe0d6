#pragma once

#include <cstdint>

#include "dare/numerics/parameter_store.hpp"

namespace dare::harness {

struct OneCycle {
  double max_lr = 5e-4;
  double div_factor = 24.0;
  double final_div_factor = 1e4;
  double warmup_fraction = 0.3;

  void validate() const;
};

// Cosine ramp from max_lr / div_factor to max_lr at the last warmup step,
// then cosine decay to max_lr / (div_factor * final_div_factor) at the final step.
double onecycle_lr(std::int64_t step, std::int64_t total_steps, const OneCycle& cfg);
// Index of the step that receives max_lr.
std::int64_t onecycle_peak_step(std::int64_t total_steps, const OneCycle& cfg);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;  // applied to matrices only; vectors (biases, norms, tokens) are not decayed
};

class AdamW {
 public:
  AdamW(const ParameterStore& params, AdamWConfig cfg);

  void step(ParameterStore& params, const ParameterStore& grads, double lr);
  std::int64_t steps() const { return t_; }

 private:
  AdamWConfig cfg_;
  ParameterStore m_;
  ParameterStore v_;
  std::int64_t t_ = 0;
};

// Scales grads in place so their global L2 norm is at most max_norm; returns the norm before clipping.
double clip_global_norm(ParameterStore& grads, double max_norm);

}  // namespace dare::harness
