#include "dare/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace dare {

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

namespace {

struct Coordinate {
  std::size_t entry;
  std::int64_t index;
};

double checked(double v) {
  if (!std::isfinite(v)) throw NonFiniteError("grad_check: non-finite loss");
  return v;
}

}  // namespace

GradCheckResult grad_check(const Differentiable& fn, const ParameterStore& params, double eps,
                           std::size_t max_coordinates, Rng& rng) {
  return grad_check(fn, params, eps, max_coordinates, rng, {""});
}

GradCheckResult grad_check(const Differentiable& fn, const ParameterStore& params, double eps,
                           std::size_t max_coordinates, Rng& rng, const std::vector<std::string>& prefixes) {
  std::vector<std::size_t> eligible;
  std::int64_t total = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& name = params.entry(i).name;
    const bool match = std::any_of(prefixes.begin(), prefixes.end(),
                                   [&](const std::string& p) { return name.compare(0, p.size(), p) == 0; });
    if (match) {
      eligible.push_back(i);
      total += params.entry(i).value.size();
    }
  }
  std::vector<Coordinate> coords;
  if (static_cast<std::int64_t>(max_coordinates) >= total) {
    for (auto e : eligible) {
      for (std::int64_t k = 0; k < params.entry(e).value.size(); ++k) coords.push_back({e, k});
    }
  } else {
    for (std::size_t n = 0; n < max_coordinates; ++n) {
      auto flat = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(total)));
      for (auto e : eligible) {
        const auto sz = params.entry(e).value.size();
        if (flat < sz) {
          coords.push_back({e, flat});
          break;
        }
        flat -= sz;
      }
    }
  }

  checked(fn.value(params));
  const ParameterStore analytic = fn.gradient(params);
  if (!analytic.same_layout(params)) throw std::invalid_argument("grad_check: gradient layout differs from params");

  GradCheckResult result;
  result.coordinates = coords.size();
  ParameterStore probe = params;
  for (const auto& c : coords) {
    Real& slot = probe.entry(c.entry).value[c.index];
    const Real original = slot;
    slot = static_cast<Real>(original + eps);
    const double up = checked(fn.value(probe));
    slot = static_cast<Real>(original - eps);
    const double down = checked(fn.value(probe));
    slot = original;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic.entry(c.entry).value[c.index];
    const double err = relative_error(a, numeric);
    if (err >= result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_name = params.entry(c.entry).name;
      result.worst_index = c.index;
      result.worst_analytic = a;
      result.worst_numeric = numeric;
    }
  }
  return result;
}

}  // namespace dare
