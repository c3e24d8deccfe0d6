#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dare/numerics/autodiff.hpp"
#include "dare/numerics/grad_check.hpp"
#include "dare/numerics/parameter_store.hpp"

namespace dare::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double std = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<Real>(rng.normal() * std);
  return t;
}

// Wraps a tape-building function into value/gradient callbacks over a store.
using TapeFn = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

inline Differentiable on_tape(TapeFn fn) {
  auto run = [fn](const ParameterStore& p, ParameterStore* grads) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const auto& e : p) vars.push_back(tape.parameter(e.value));
    ad::Var loss = fn(tape, vars);
    if (grads != nullptr) {
      tape.backward(loss);
      for (std::size_t i = 0; i < vars.size(); ++i) grads->add(p.entry(i).name, tape.grad(vars[i]));
    }
    return static_cast<double>(loss.value().item());
  };
  return {[run](const ParameterStore& p) { return run(p, nullptr); },
          [run](const ParameterStore& p) {
            ParameterStore g;
            run(p, &g);
            return g;
          }};
}

// Reduces an arbitrary output to a scalar with fixed random weights so every
// output coordinate contributes to the checked gradient.
inline ad::Var weighted_sum(ad::Var out, std::uint64_t seed = 99) {
  Rng rng(seed);
  ad::Var w = out.tape->constant(random_tensor(out.shape(), rng));
  return ad::sum(ad::mul(out, w));
}

}  // namespace dare::testing
