#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hajnorm/space.hpp"

using namespace hajnorm;

TEST(Space, OneDimensionalGridArithmetic) {
  const auto sp = build_periodic_grid(1, 4, 1.0);
  EXPECT_EQ(sp.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(sp.measure(i), 0.25);
  EXPECT_DOUBLE_EQ(sp.diameter(), 0.5);
  EXPECT_DOUBLE_EQ(sp.dist(0, 1), 0.25);
  EXPECT_DOUBLE_EQ(sp.dist(0, 3), 0.25);  // wraps around
  EXPECT_DOUBLE_EQ(sp.total_measure(), 1.0);
}

TEST(Space, TwoDimensionalGridMeasures) {
  const auto sp = build_periodic_grid(2, 8, 1.0);
  EXPECT_EQ(sp.size(), 64u);
  for (std::size_t i = 0; i < sp.size(); ++i) EXPECT_DOUBLE_EQ(sp.measure(i), 1.0 / 64.0);
  EXPECT_NEAR(sp.diameter(), std::sqrt(0.5), 1e-15);
}

TEST(Space, GridBudgetAndConfig) {
  SpaceOptions opts;
  opts.point_budget = 100;
  EXPECT_THROW(build_periodic_grid(2, 11, 1.0, opts), ResourceError);
  EXPECT_NO_THROW(build_periodic_grid(2, 10, 1.0, opts));
  EXPECT_THROW(build_periodic_grid(1, 3, 1.0), ConfigError);
  EXPECT_THROW(build_periodic_grid(4, 4, 1.0), ConfigError);
}

TEST(Space, PointCloudValidation) {
  EXPECT_NO_THROW(build_point_cloud({{0, 0.5}, {0.5, 0}}, {1, 1}));
  try {
    build_point_cloud({{0, 1, 3}, {1, 0, 1}, {3, 1, 0}}, {1, 1, 1});
    FAIL() << "expected a triangle violation";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("(0,1,2)"), std::string::npos) << e.what();
  }
  EXPECT_THROW(build_point_cloud({{0, 1}, {2, 0}}, {1, 1}), ValidationError);
  EXPECT_THROW(build_point_cloud({{0, 1}, {1, 0}}, {1, 0}), ValidationError);
  EXPECT_THROW(build_point_cloud({{0, 0}, {0, 0}}, {1, 1}), ValidationError);
}

TEST(Space, SinglePointIsValid) {
  const auto sp = build_point_cloud({{0}}, {2});
  EXPECT_EQ(sp.size(), 1u);
  EXPECT_EQ(sp.window().count(), 0);
  EXPECT_DOUBLE_EQ(sp.total_measure(), 2.0);
}

TEST(Space, ScaleOfPairExamples) {
  EXPECT_EQ(scale_of_distance(0.5), 0);
  EXPECT_EQ(scale_of_distance(1.0), -1);
  EXPECT_EQ(scale_of_distance(0.3), 1);
  EXPECT_EQ(scale_of_distance(0.25), 1);
  EXPECT_EQ(scale_of_distance(0.2499999), 2);
  const auto sp = build_point_cloud({{0, 0.5}, {0.5, 0}}, {1, 1});
  EXPECT_EQ(scale_of_pair(sp, 0, 1), 0);
  EXPECT_THROW(scale_of_pair(sp, 1, 1), DomainError);
}

TEST(Space, ScaleOfPairMonotoneProperty) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> logd(-20.0, 20.0);
  for (int t = 0; t < 5000; ++t) {
    const double a = std::exp2(logd(rng)), b = std::exp2(logd(rng));
    const int ka = scale_of_distance(a), kb = scale_of_distance(b);
    EXPECT_LE(std::exp2(-ka - 1), a);
    EXPECT_LT(a, std::exp2(-ka));
    if (a < b) {
      EXPECT_GE(ka, kb);
    }
  }
}

TEST(Space, BallAverageExamples) {
  const auto sp = build_point_cloud({{0, 0.5}, {0.5, 0}}, {1, 1});
  const std::vector<double> u{0, 1};
  EXPECT_DOUBLE_EQ(ball_average(sp, u, 0, 0.6), 0.5);
  EXPECT_DOUBLE_EQ(ball_average(sp, u, 0, 0.4), 0.0);
  EXPECT_DOUBLE_EQ(ball_average(sp, u, 0, 0.5), 0.0);  // open ball
  const std::vector<double> c{3, 3};
  EXPECT_DOUBLE_EQ(ball_average(sp, c, 1, 10.0), 3.0);
}

TEST(Space, BallAverageInvariantUnderMeasureRescaling) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.1, 1.0);
  const std::size_t n = 12;
  std::vector<double> x(n), w(n), u(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = i + unit(rng) * 0.5;
    w[i] = unit(rng);
    u[i] = unit(rng);
  }
  std::vector<std::vector<double>> d(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d[i][j] = std::fabs(x[i] - x[j]);
  auto scaled = w;
  for (double& v : scaled) v *= 17.0;
  const auto a = build_point_cloud(d, w);
  const auto b = build_point_cloud(d, scaled);
  for (std::size_t c = 0; c < n; ++c)
    for (double r : {0.5, 1.5, 3.0, 20.0}) EXPECT_NEAR(ball_average(a, u, c, r), ball_average(b, u, c, r), 1e-14);
}

TEST(Space, DoublingOneAndTwoDimensions) {
  const auto one = estimate_doubling(build_periodic_grid(1, 64, 1.0));
  EXPECT_GE(one.n_hat, 0.8);
  EXPECT_LE(one.n_hat, 1.2);
  EXPECT_LE(one.kappa_hat, one.n_hat);
  EXPECT_LE(one.C1_hat, 1.0 + 1e-12);
  EXPECT_GE(one.C2_hat, 1.0 - 1e-12);
  const auto two = estimate_doubling(build_periodic_grid(2, 32, 1.0));
  EXPECT_GE(two.n_hat, 1.7);
  EXPECT_LE(two.n_hat, 2.3);
}

TEST(Space, DoublingDeterministic) {
  const auto sp = build_periodic_grid(2, 16, 1.0);
  const auto a = estimate_doubling(sp);
  const auto b = estimate_doubling(sp);
  EXPECT_EQ(a.n_hat, b.n_hat);
  EXPECT_EQ(a.samples.size(), b.samples.size());
}

TEST(Space, DoublingTinyBallsGiveZeroExponents) {
  const auto sp = build_periodic_grid(1, 16, 1.0);
  DoublingOptions opts;
  opts.r_min = 1e-4;
  opts.r_max = 2e-4;
  const auto rep = estimate_doubling(sp, opts);
  ASSERT_FALSE(rep.samples.empty());
  for (const auto& s : rep.samples) EXPECT_DOUBLE_EQ(s.ratio, 1.0);
  EXPECT_DOUBLE_EQ(rep.n_hat, 0.0);
  EXPECT_DOUBLE_EQ(rep.kappa_hat, 0.0);
}

TEST(Space, DoublingApproachesDimension) {
  const auto coarse = estimate_doubling(build_periodic_grid(2, 16, 1.0));
  const auto fine = estimate_doubling(build_periodic_grid(2, 48, 1.0));
  EXPECT_NEAR(fine.n_hat, 2.0, 0.3);
  EXPECT_NEAR(coarse.n_hat, 2.0, 0.5);
}

TEST(Space, LargeCloudUsesSampledTriangleCheck) {
  const std::size_t n = 250;
  std::vector<std::vector<double>> d(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d[i][j] = std::fabs(double(i) - double(j));
  EXPECT_NO_THROW(build_point_cloud(d, std::vector<double>(n, 1.0)));
}

TEST(Space, HashDependsOnContent) {
  EXPECT_EQ(build_periodic_grid(1, 8, 1.0).hash(), build_periodic_grid(1, 8, 1.0).hash());
  EXPECT_NE(build_periodic_grid(1, 8, 1.0).hash(), build_periodic_grid(1, 8, 2.0).hash());
}

TEST(Space, TorusCloudUsesMinimumImage) {
  const auto sp = build_torus_cloud({0.1, 1.9}, 1, {2.0}, {1.0, 1.0});
  EXPECT_NEAR(sp.dist(0, 1), 0.2, 1e-15);
  EXPECT_EQ(sp.topology(), Topology::torus_cloud);
}
