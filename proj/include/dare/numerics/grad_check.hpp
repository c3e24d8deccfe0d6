#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "dare/numerics/parameter_store.hpp"
#include "dare/numerics/rng.hpp"

namespace dare {

// A scalar function of a parameter store together with its implemented gradient.
struct Differentiable {
  std::function<double(const ParameterStore&)> value;
  std::function<ParameterStore(const ParameterStore&)> gradient;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst_name;
  std::int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double a, double b);

// Compares the implemented gradient with central differences
// (f(p + eps) - f(p - eps)) / (2 eps) on up to `max_coordinates` coordinates
// drawn uniformly from the flattened store (all of them when the store is
// smaller). Throws NonFiniteError on a non-finite loss.
GradCheckResult grad_check(const Differentiable& fn, const ParameterStore& params, double eps,
                           std::size_t max_coordinates, Rng& rng);

// Same, restricted to entries whose name starts with one of `prefixes`.
GradCheckResult grad_check(const Differentiable& fn, const ParameterStore& params, double eps,
                           std::size_t max_coordinates, Rng& rng, const std::vector<std::string>& prefixes);

}  // namespace dare
