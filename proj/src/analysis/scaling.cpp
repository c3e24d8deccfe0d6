#include "dare/analysis/scaling.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "json.hpp"

namespace dare::analysis {

Direction parse_direction(const std::string& name) {
  if (name == "accuracy") return Direction::accuracy;
  if (name == "loss") return Direction::loss;
  throw std::invalid_argument("direction must be 'accuracy' or 'loss', got '" + name + "'");
}

const char* to_string(Direction d) { return d == Direction::accuracy ? "accuracy" : "loss"; }

namespace {

double sign_of(Direction d) { return d == Direction::accuracy ? -1.0 : 1.0; }

struct Problem {
  Eigen::VectorXd x, y;
  double s;

  Eigen::VectorXd residual(const Eigen::Vector3d& p) const {
    return (p[0] + s * p[1] * x.array().pow(-p[2]) - y.array()).matrix();
  }

  Eigen::MatrixXd jacobian(const Eigen::Vector3d& p) const {
    Eigen::MatrixXd j(x.size(), 3);
    const Eigen::ArrayXd xk = x.array().pow(-p[2]);
    j.col(0).setOnes();
    j.col(1) = s * xk;
    j.col(2) = -s * p[1] * xk * x.array().log();
    return j;
  }
};

struct Outcome {
  Eigen::Vector3d p;
  double cost;
  int iterations;
  bool converged;
};

Outcome levenberg_marquardt(const Problem& pr, Eigen::Vector3d p, int max_iterations) {
  const double scale = 1.0 + pr.y.squaredNorm();
  double lambda = 1e-3;
  Eigen::VectorXd r = pr.residual(p);
  double cost = r.squaredNorm();
  for (int it = 0; it < max_iterations; ++it) {
    if (cost <= 1e-30 * scale) return {p, cost, it, true};
    const Eigen::MatrixXd j = pr.jacobian(p);
    const Eigen::Matrix3d jtj = j.transpose() * j;
    const Eigen::Vector3d g = j.transpose() * r;
    if (g.lpNorm<Eigen::Infinity>() <= 1e-15 * scale) return {p, cost, it, true};
    bool improved = false;
    while (lambda < 1e20) {
      Eigen::Matrix3d a = jtj;
      for (int d = 0; d < 3; ++d) a(d, d) += lambda * std::max(jtj(d, d), 1e-12);
      const Eigen::Vector3d step = a.ldlt().solve(-g);
      const Eigen::Vector3d next = p + step;
      const Eigen::VectorXd rn = pr.residual(next);
      const double cn = rn.squaredNorm();
      if (std::isfinite(cn) && cn < cost) {
        const bool tiny = step.norm() <= 1e-14 * (1.0 + p.norm());
        p = next;
        r = rn;
        cost = cn;
        lambda = std::max(lambda / 3.0, 1e-12);
        improved = true;
        if (tiny) return {p, cost, it + 1, true};
        break;
      }
      lambda *= 4.0;
    }
    // No descent direction left at machine precision: a stationary point.
    if (!improved) return {p, cost, it, true};
  }
  return {p, cost, max_iterations, false};
}

}  // namespace

double ScalingFit::predict(double x) const { return A + sign_of(direction) * B * std::pow(x, -k); }

std::string ScalingFit::to_json() const {
  nlohmann::json j;
  j["A"] = A;
  j["B"] = B;
  j["k"] = k;
  j["residual_norm"] = residual_norm;
  j["direction"] = to_string(direction);
  j["degenerate_k"] = degenerate_k;
  j["iterations"] = iterations;
  return j.dump();
}

ScalingFit fit_saturation(const std::vector<std::pair<double, double>>& points, Direction direction, int max_iterations) {
  if (points.size() < 3) throw std::invalid_argument("fit_saturation: need at least three points");
  Problem pr;
  pr.s = sign_of(direction);
  pr.x.resize(static_cast<Eigen::Index>(points.size()));
  pr.y.resize(pr.x.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!(points[i].first > 0) || !std::isfinite(points[i].second)) {
      throw std::invalid_argument("fit_saturation: x must be positive and y finite");
    }
    pr.x[static_cast<Eigen::Index>(i)] = points[i].first;
    pr.y[static_cast<Eigen::Index>(i)] = points[i].second;
  }

  const double starts[] = {0.1, 0.5, 1.0, 2.0};
  ScalingFit best;
  best.direction = direction;
  double best_cost = std::numeric_limits<double>::infinity();
  bool any_converged = false;
  for (int si = 0; si < 4; ++si) {
    const double k0 = starts[si];
    // Linear least squares for (A, B) at fixed k.
    Eigen::MatrixXd a(pr.x.size(), 2);
    a.col(0).setOnes();
    a.col(1) = pr.s * pr.x.array().pow(-k0).matrix();
    const Eigen::Vector2d ab = a.colPivHouseholderQr().solve(pr.y);
    const Outcome o = levenberg_marquardt(pr, Eigen::Vector3d(ab[0], ab[1], k0), max_iterations);
    if (o.cost < best_cost || (o.converged && !any_converged)) {
      best_cost = o.cost;
      best.A = o.p[0];
      best.B = o.p[1];
      best.k = o.p[2];
      best.residual_norm = std::sqrt(o.cost);
      best.start_k_index = si;
      best.iterations = o.iterations;
    }
    any_converged = any_converged || o.converged;
  }
  const double y_scale = pr.y.cwiseAbs().maxCoeff();
  best.degenerate_k = std::abs(best.B) <= 1e-9 * std::max(1.0, y_scale);
  if (!any_converged) throw FitError("fit_saturation: no start converged", best);
  return best;
}

}  // namespace dare::analysis
