#include <gtest/gtest.h>

#include <cmath>

#include "dare/analysis/scaling.hpp"

using namespace dare::analysis;

namespace {

const std::vector<double> kSizes = {0.6, 3.8, 14.7, 19.9, 77.8};

std::vector<std::pair<double, double>> generate(double A, double B, double k, Direction d) {
  std::vector<std::pair<double, double>> pts;
  const double sign = d == Direction::accuracy ? -1.0 : 1.0;
  for (double x : kSizes) pts.emplace_back(x, A + sign * B * std::pow(x, -k));
  return pts;
}

}  // namespace

TEST(Scaling, RecoversAccuracyCurve) {
  const auto fit = fit_saturation(generate(0.7666, 0.0875, 0.8752, Direction::accuracy), Direction::accuracy);
  EXPECT_NEAR(fit.A, 0.7666, 1e-3);
  EXPECT_NEAR(fit.B, 0.0875, 1e-3);
  EXPECT_NEAR(fit.k, 0.8752, 1e-3);
  EXPECT_LT(fit.residual_norm, 1e-8);
  EXPECT_FALSE(fit.degenerate_k);
}

TEST(Scaling, RecoversLossCurve) {
  const auto fit = fit_saturation(generate(0.4335, 0.1237, 0.9822, Direction::loss), Direction::loss);
  EXPECT_NEAR(fit.A, 0.4335, 1e-3);
  EXPECT_NEAR(fit.B, 0.1237, 1e-3);
  EXPECT_NEAR(fit.k, 0.9822, 1e-3);
  EXPECT_LT(fit.residual_norm, 1e-8);
}

TEST(Scaling, SaturatesAtA) {
  const auto fit = fit_saturation(generate(0.7666, 0.0875, 0.8752, Direction::accuracy), Direction::accuracy);
  EXPECT_NEAR(fit.predict(1e6), fit.A, 1e-5);
  EXPECT_LT(fit.predict(0.6), fit.predict(77.8));
}

TEST(Scaling, ConstantDataFlagsDegenerateK) {
  std::vector<std::pair<double, double>> pts;
  for (double x : kSizes) pts.emplace_back(x, 0.62);
  const auto fit = fit_saturation(pts, Direction::accuracy);
  EXPECT_NEAR(fit.A, 0.62, 1e-9);
  EXPECT_NEAR(fit.B, 0.0, 1e-9);
  EXPECT_TRUE(fit.degenerate_k);
}

TEST(Scaling, RandomCurvesRecovered) {
  // Mild parameter ranges around the fitted values.
  for (int i = 0; i < 10; ++i) {
    const double A = 0.5 + 0.03 * i, B = 0.05 + 0.02 * i, k = 0.3 + 0.15 * i;
    const auto fit = fit_saturation(generate(A, B, k, Direction::loss), Direction::loss);
    EXPECT_NEAR(fit.A, A, 1e-6) << i;
    EXPECT_NEAR(fit.B, B, 1e-6) << i;
    EXPECT_NEAR(fit.k, k, 1e-6) << i;
  }
}

TEST(Scaling, InputErrors) {
  EXPECT_THROW(fit_saturation({{1, 0.5}, {2, 0.6}}, Direction::accuracy), std::invalid_argument);
  EXPECT_THROW(fit_saturation({{1, 0.5}, {2, 0.6}, {-3, 0.7}}, Direction::accuracy), std::invalid_argument);
  EXPECT_EQ(parse_direction("loss"), Direction::loss);
  EXPECT_THROW(parse_direction("bac"), std::invalid_argument);
}

TEST(Scaling, JsonHasAllFields) {
  const auto fit = fit_saturation(generate(0.4335, 0.1237, 0.9822, Direction::loss), Direction::loss);
  const std::string j = fit.to_json();
  for (const char* key : {"\"A\"", "\"B\"", "\"k\"", "\"residual_norm\"", "\"direction\"", "\"degenerate_k\""}) {
    EXPECT_NE(j.find(key), std::string::npos) << key;
  }
}
