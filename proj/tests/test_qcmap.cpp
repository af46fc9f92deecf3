#include <gtest/gtest.h>

#include <cmath>

#include "hajnorm/qcmap.hpp"

using namespace hajnorm;

namespace {

std::vector<double> positive_field(std::size_t n) {
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = 1.0 + 0.1 * static_cast<double>(i % 7);
  return u;
}

}  // namespace

TEST(QcMap, IdentityDistortion) {
  const auto g = build_periodic_grid(2, 12, 1.0);
  const auto map = identity_map(g);
  const auto a = analyze_distortion(map);
  EXPECT_EQ(a.H_global, 1.0);
  for (std::size_t jj = 0; jj < a.scales.size(); ++jj) {
    const double r = dyadic(a.scales[jj]);
    for (std::size_t x = 0; x < g.size(); x += 17) {
      if (std::isnan(a.L_table[jj][x])) continue;
      double best = 0.0;
      for (std::size_t y = 0; y < g.size(); ++y)
        if (g.dist(x, y) <= r) best = std::max(best, g.dist(x, y));
      EXPECT_EQ(a.L_table[jj][x], best);
      EXPECT_LE(a.ell_table[jj][x], a.L_table[jj][x]);
    }
  }
  for (const auto& e : a.eta_samples) EXPECT_NEAR(e.ratio, e.t, 1e-12);
}

TEST(QcMap, LinearStretchDistortion) {
  const auto g = build_periodic_grid(2, 16, 1.0);
  const auto map = linear_map(g, {2.0, 1.0});
  const double H = analyze_distortion(map).H_global;
  EXPECT_GE(H, 1.8);
  EXPECT_LE(H, 2.2);
  EXPECT_TRUE(std::isfinite(analyze_distortion(inverse(map)).H_global));
}

TEST(QcMap, RadialPowerOneIsIdentity) {
  const auto g = build_periodic_grid(2, 12, 1.0);
  EXPECT_NEAR(analyze_distortion(radial_power_map(g, 1.0)).H_global, 1.0, 1e-12);
}

TEST(QcMap, IdentityJacobianIsOne) {
  const auto g = build_periodic_grid(2, 12, 1.0);
  const auto J = volume_derivative(identity_map(g));
  for (double v : J.J_hat) EXPECT_EQ(v, 1.0);
  EXPECT_TRUE(J.flagged.empty());
}

TEST(QcMap, UniformDilationJacobian) {
  const auto g = build_periodic_grid(2, 16, 1.0);
  const auto map = linear_map(g, {2.0, 2.0});
  EXPECT_TRUE(map.target->is_grid());
  EXPECT_DOUBLE_EQ(map.target->grid()->side_length, 2.0);
  const auto J = volume_derivative(map);
  for (double v : J.J_hat) EXPECT_NEAR(v, 4.0, 0.4);
  const auto cov = change_of_variables_check(ScalarField{"", positive_field(g.size())}, map, J.J_hat);
  EXPECT_LT(cov.discrepancy, 0.10);
}

TEST(QcMap, RadialJacobianMatchesAnalytic) {
  const auto g = build_periodic_grid(2, 32, 1.0);
  const auto J = volume_derivative(radial_power_map(g, 2.0));
  std::size_t checked = 0;
  for (std::size_t x = 0; x < g.size(); ++x) {
    const auto c = centered_coords(g, x);
    const double r = std::hypot(c[0], c[1]);
    if (r < 0.15 || r > 0.4) continue;  // away from the origin and the edge of the disc
    EXPECT_NEAR(J.J_hat[x] / radial_power_jacobian(c, 2.0, 0.5), 1.0, 0.25);
    ++checked;
  }
  EXPECT_GT(checked, 100u);
  EXPECT_LT(J.mass_error, 1e-9);
}

TEST(QcMap, InverseJacobianIsReciprocal) {
  const auto g = build_periodic_grid(2, 16, 1.0);
  const auto map = linear_map(g, {2.0, 2.0});
  const auto J = volume_derivative(map);
  const auto Jinv = volume_derivative(inverse(map));
  for (std::size_t x = 0; x < g.size(); ++x) {
    const double prod = J.J_hat[x] * Jinv.J_hat[map.assignment[x]];
    EXPECT_GT(prod, 0.5);
    EXPECT_LT(prod, 2.0);
  }
}

TEST(QcMap, ReverseHolderConstants) {
  const auto g = build_periodic_grid(2, 16, 1.0);
  const auto balls = sample_balls(g, 50, 0.1, 0.3, 1);
  const std::vector<double> r_grid{1.5, 2.0, 3.0};
  const auto flat = reverse_holder_scan(g, std::vector<double>(g.size(), 1.0), r_grid, balls);
  for (double b : flat.B_r) EXPECT_NEAR(b, 1.0, 1e-12);
  std::vector<double> spike(g.size(), 1.0);
  spike[0] = 1e4;
  const auto rep = reverse_holder_scan(g, spike, r_grid, sample_balls(g, 200, 0.1, 0.3, 2));
  EXPECT_GT(rep.B_r.back(), rep.B_r.front());
  for (std::size_t i = 1; i < rep.B_r.size(); ++i) EXPECT_GE(rep.B_r[i], rep.B_r[i - 1]);
  EXPECT_THROW(reverse_holder_scan(g, std::vector<double>(g.size(), 0.0), r_grid, balls), DomainError);
}

TEST(QcMap, SampledBallsAvoidMask) {
  const auto g = build_periodic_grid(2, 16, 1.0);
  const auto mask = origin_mask(g);
  for (const auto& b : sample_balls(g, 100, 0.05, 0.2, 3, mask))
    for (std::size_t y = 0; y < g.size(); ++y)
      if (mask[y]) {
        EXPECT_GE(g.dist(b.center, y), b.radius);
      }
}

TEST(QcMap, ComposeRoundTrip) {
  const auto g = build_periodic_grid(2, 12, 1.0);
  const auto map = radial_power_map(g, 1.5);
  const ScalarField u{map.target->hash(), positive_field(g.size())};
  EXPECT_EQ(compose(u, identity_map(g)).values, u.values);
  const auto back = compose(compose(u, inverse(map)), map);
  EXPECT_EQ(back.values, compose(u, map).values);
  const auto there = compose(compose(u, map), inverse(map));
  EXPECT_EQ(there.values, u.values);
  const ScalarField c{"", std::vector<double>(g.size(), 2.0)};
  const auto composed = compose(c, map);
  for (double v : composed.values) EXPECT_EQ(v, 2.0);
}

TEST(QcMap, ChangeOfVariablesIdentityAndConstant) {
  const auto g = build_periodic_grid(2, 12, 1.0);
  const auto id = identity_map(g);
  const auto J = volume_derivative(id);
  EXPECT_EQ(change_of_variables_check(ScalarField{"", positive_field(g.size())}, id, J.J_hat).discrepancy, 0.0);
  const auto map = radial_power_map(g, 2.0);
  const auto Jr = volume_derivative(map);
  const auto one = change_of_variables_check(ScalarField{"", std::vector<double>(g.size(), 1.0)}, map, Jr.J_hat);
  EXPECT_NEAR(one.discrepancy, Jr.mass_error, 1e-12);
}

TEST(QcMap, MapValidation) {
  const auto g = build_periodic_grid(1, 8, 1.0);
  auto map = identity_map(g);
  map.assignment[1] = 0;
  EXPECT_THROW(validate_map(map), ValidationError);
  EXPECT_THROW(linear_map(g, {1.0, 2.0}), ConfigError);
  EXPECT_THROW(linear_map(g, {-1.0}), ConfigError);
  EXPECT_THROW(radial_power_map(g, 0.0), ConfigError);
}

TEST(QcMap, IdentityInvarianceRatiosAreOne) {
  const auto g = build_periodic_grid(1, 32, 1.0);
  FunctionFamilySpec fs;
  fs.count = 4;
  for (auto backend : {NormBackend::difference, NormBackend::lp, NormBackend::optimal}) {
    const auto rep = invariance_experiment(identity_map(g), fs, {NormParams{0.5, 2.0, 2.0}}, backend);
    ASSERT_EQ(rep.rows.size(), 4u);
    for (const auto& row : rep.rows) EXPECT_EQ(row.ratio, 1.0);
    EXPECT_EQ(rep.summaries[0].spread(), 1.0);
  }
}

TEST(QcMap, ParallelExperimentMatchesSerial) {
  const auto g = build_periodic_grid(2, 12, 1.0);
  FunctionFamilySpec fs;
  fs.count = 5;
  const auto map = radial_power_map(g, 1.5);
  const std::vector<NormParams> params{{0.5, 4.0, 4.0}};
  const auto a = invariance_experiment(map, fs, params, NormBackend::difference, {}, 1);
  const auto b = invariance_experiment(map, fs, params, NormBackend::difference, {}, 3);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_EQ(a.rows[i].ratio, b.rows[i].ratio);
}

TEST(QcMap, BackendNames) {
  for (auto b : {NormBackend::optimal, NormBackend::difference, NormBackend::grand, NormBackend::lp})
    EXPECT_EQ(backend_from_string(to_string(b)), b);
  EXPECT_THROW(backend_from_string("bp"), ConfigError);
}
