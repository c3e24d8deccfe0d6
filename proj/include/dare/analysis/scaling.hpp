#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dare::analysis {

// accuracy: y = A - B x^-k; loss: y = A + B x^-k.
enum class Direction { accuracy, loss };

Direction parse_direction(const std::string& name);
const char* to_string(Direction d);

struct ScalingFit {
  double A = 0.0;
  double B = 0.0;
  double k = 0.0;
  double residual_norm = 0.0;
  Direction direction = Direction::accuracy;
  // B is numerically zero, so k is not identified by the data.
  bool degenerate_k = false;
  int start_k_index = -1;
  int iterations = 0;

  double predict(double x) const;
  std::string to_json() const;
};

class FitError : public std::runtime_error {
 public:
  FitError(const std::string& what, ScalingFit best) : std::runtime_error(what), best_(best) {}
  const ScalingFit& best() const { return best_; }

 private:
  ScalingFit best_;
};

// Levenberg–Marquardt from k in {0.1, 0.5, 1, 2} (A and B solved linearly at
// each starting k); returns the start with the smallest residual. Needs at
// least three points with x > 0.
ScalingFit fit_saturation(const std::vector<std::pair<double, double>>& points, Direction direction,
                          int max_iterations = 2000);

}  // namespace dare::analysis
