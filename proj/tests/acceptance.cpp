// Acceptance runner: `acceptance N` checks criterion N, `acceptance` checks all of them.
// Each check prints one [PASS]/[FAIL] line; tolerances are fixed below.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hajnorm/experiment.hpp"
#include "hajnorm/gradients.hpp"
#include "hajnorm/lp_bands.hpp"
#include "hajnorm/norms.hpp"
#include "hajnorm/optimize.hpp"
#include "hajnorm/qcmap.hpp"

using namespace hajnorm;

namespace {

constexpr double kOracleRelTol = 1e-3;
constexpr double kIdentityRelTol = 1e-6;
constexpr double kMembershipSlack = 1e-9;
constexpr double kEquivalenceMaxSpread = 50.0;
constexpr double kSeedStability = 2.0;
constexpr double kDilationRelTol = 0.15;
constexpr double kConformalLo = 0.9, kConformalHi = 1.1;
constexpr double kQcMaxSpread = 25.0;
constexpr double kNegativeControlDrift = 1.3;
constexpr double kGehringBound = 10.0;
constexpr double kGehringMinExponent = 1.5;
constexpr double kChangeOfVariablesTol = 0.10;
constexpr double kPoincareStability = 0.20;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double rel_diff(double a, double b) { return std::fabs(a - b) / std::max(std::fabs(b), 1e-300); }

/// Random Euclidean cloud on a line with continuous positions and weights.
MetricMeasureSpace random_line_cloud(std::mt19937_64& rng, std::size_t n, double spread) {
  std::uniform_real_distribution<double> pos(0.0, spread), wt(0.5, 2.0);
  for (;;) {
    std::vector<double> x(n), m(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = pos(rng);
      m[i] = wt(rng);
    }
    try {
      return build_torus_cloud(x, 1, {}, m);
    } catch (const ValidationError&) {
      // coincident draw, try again
    }
  }
}

std::size_t active_scale_count(const MetricMeasureSpace& sp) {
  std::vector<int> ks;
  for (std::size_t x = 0; x < sp.size(); ++x)
    for (std::size_t y = x + 1; y < sp.size(); ++y) ks.push_back(scale_of_pair(sp, x, y));
  std::sort(ks.begin(), ks.end());
  return static_cast<std::size_t>(std::unique(ks.begin(), ks.end()) - ks.begin());
}

std::vector<double> random_field(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  std::vector<double> u(n);
  for (auto& v : u) v = val(rng);
  return u;
}

// 1. optimizer vs brute-force oracle on tiny instances
Outcome criterion1() {
  std::mt19937_64 rng(101);
  const std::vector<std::pair<double, double>> pq{{1, 1}, {2, 2}, {kInf, kInf}, {2, kInf}};
  int count = 0;
  double worst = 0.0;
  for (int t = 0; t < 24; ++t) {
    const std::size_t n = 2 + static_cast<std::size_t>(t % 2);
    MetricMeasureSpace sp = random_line_cloud(rng, n, 1.0);
    while (active_scale_count(sp) > 2) sp = random_line_cloud(rng, n, 1.0);
    const auto u = random_field(rng, n);
    const double s = t % 2 ? 1.0 : 0.5;
    const auto [p, q] = pq[static_cast<std::size_t>(t) % pq.size()];
    const double opt = solve(build_program(sp, u, s, p, q, AggregationMode::Lp_lq)).upper_bound;
    const double oracle = brute_force_norm(sp, u, s, p, q, AggregationMode::Lp_lq);
    worst = std::max(worst, rel_diff(opt, oracle));
    ++count;
  }
  return {count >= 20 && worst <= kOracleRelTol,
          std::to_string(count) + " instances, worst relative gap " + fmt("%.3g", worst)};
}

// 2. (p, inf) optimum equals the single-gradient optimum
Outcome criterion2() {
  std::mt19937_64 rng(202);
  const std::vector<double> ps{1.0, 2.0, 3.0, kInf};
  double worst = 0.0;
  int count = 0;
  for (int t = 0; t < 24; ++t) {
    const std::size_t n = 4 + static_cast<std::size_t>(t % 7);
    const auto sp = random_line_cloud(rng, n, 2.0);
    const auto u = random_field(rng, n);
    const double s = t % 3 == 0 ? 1.0 : 0.5;
    const double p = ps[static_cast<std::size_t>(t) % ps.size()];
    const double a = solve(build_program(sp, u, s, p, kInf, AggregationMode::Lp_lq)).upper_bound;
    const double b = solve(build_sobolev_program(sp, u, s, p)).upper_bound;
    worst = std::max(worst, rel_diff(a, b));
    ++count;
  }
  return {count >= 20 && worst <= kIdentityRelTol,
          std::to_string(count) + " instances, worst relative difference " + fmt("%.3g", worst)};
}

// 3. class transforms preserve membership both ways
Outcome criterion3() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> small(0, 3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  int members = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 5 + static_cast<std::size_t>(t % 6);
    const auto sp = random_line_cloud(rng, n, 4.0);
    const auto u = random_field(rng, n);
    const double s = 0.25 + 0.75 * unit(rng);
    GradientSequence g(sp.window(), n);
    for (double& v : g.raw()) v = unit(rng);
    g = feasibility_repair(sp, u, s, g).grad;
    const double base_rho = check_membership(sp, u, g, GradientClassSpec::base(s)).rho_min;
    if (base_rho > 1.0 + kMembershipSlack) return {false, "repair did not produce a base member"};
    ++members;
    const std::vector<GradientClassSpec> specs{
        GradientClassSpec::shifted(s, small(rng), small(rng)),
        GradientClassSpec::lower_tail(s, s * (0.05 + 0.95 * unit(rng)), small(rng)),
        GradientClassSpec::upper_tail(s, 0.05 + unit(rng), small(rng))};
    for (const auto& spec : specs) {
      const auto h = transform_from_base(g, spec);
      worst = std::max(worst, check_membership(sp, u, h, spec).rho_min);
      const auto back = transform_to_base(h, spec, sp.window());
      worst = std::max(worst, check_membership(sp, u, back, GradientClassSpec::base(s)).rho_min);
    }
  }
  return {members == 100 && worst <= 1.0 + kMembershipSlack,
          std::to_string(members) + " members x 3 classes, worst rho_min " + fmt("%.12g", worst)};
}

// 4. median / rearrangement chain
Outcome criterion4() {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int violations = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 3 + static_cast<std::size_t>(t % 30);
    const auto sp = random_line_cloud(rng, n, 1.0);
    std::vector<double> u(n);
    for (auto& v : u) v = 4.0 * unit(rng) - 2.0;
    const std::size_t center = static_cast<std::size_t>(unit(rng) * static_cast<double>(n)) % n;
    const double radius = 0.05 + 1.2 * unit(rng);
    const double c = 4.0 * unit(rng) - 2.0;
    const double delta = std::max(1e-3, unit(rng));
    if (!check_median_bound(sp, u, {center, radius}, c, delta).ok()) ++violations;
  }
  return {violations == 0, "1000 cases, " + std::to_string(violations) + " violations"};
}

struct EquivalenceSpread {
  std::string label;
  double spread = 0.0;
};

std::vector<EquivalenceSpread> equivalence_spreads(const MetricMeasureSpace& sp, std::uint64_t seed) {
  FunctionFamilySpec fs;
  fs.rng_seed = seed;
  const auto fields = generate_family(sp, fs);
  const auto bank = build_band_filters(*sp.grid());
  const NeighborTable table(sp);
  struct Config {
    double s, p, q;
  };
  const std::vector<Config> configs{{0.5, 2, 2}, {0.5, 4, 4}, {0.8, 2, kInf}};
  std::vector<EquivalenceSpread> out;
  for (const auto& c : configs) {
    std::vector<double> r_opt_lp, r_opt_bp, r_lp_bp;
    for (const auto& f : fields) {
      const double opt = solve(build_program(sp, f.values, c.s, c.p, c.q, AggregationMode::Lp_lq)).upper_bound;
      const double lp = tl_norm(sp, band_decompose(sp, f.values, bank), c.s, c.p, c.q);
      r_opt_lp.push_back(opt / lp);
      if (c.p == c.q) {
        const double bp = bourdon_pajot_norm(sp, f.values, c.s, c.p, &table);
        r_opt_bp.push_back(opt / bp);
        r_lp_bp.push_back(lp / bp);
      }
    }
    auto spread = [](const std::vector<double>& r) {
      return *std::max_element(r.begin(), r.end()) / *std::min_element(r.begin(), r.end());
    };
    const std::string tag = "s=" + fmt("%g", c.s) + ",p=" + fmt("%g", c.p) + ",q=" + fmt("%g", c.q);
    out.push_back({tag + " opt/lp", spread(r_opt_lp)});
    if (!r_opt_bp.empty()) {
      out.push_back({tag + " opt/bp", spread(r_opt_bp)});
      out.push_back({tag + " lp/bp", spread(r_lp_bp)});
    }
  }
  return out;
}

// 5. equivalence boundedness of optimal, Littlewood-Paley and Bourdon-Pajot norms
Outcome criterion5() {
  bool pass = true;
  double worst_spread = 0.0, worst_change = 1.0;
  for (const auto& sp : {build_periodic_grid(1, 128, 1.0), build_periodic_grid(2, 32, 1.0)}) {
    const auto a = equivalence_spreads(sp, 1);
    const auto b = equivalence_spreads(sp, 2);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double change = std::max(a[i].spread / b[i].spread, b[i].spread / a[i].spread);
      std::printf("  n=%d %-26s spread seed1 %.3f seed2 %.3f\n", sp.grid()->n_dim, a[i].label.c_str(), a[i].spread,
                  b[i].spread);
      worst_spread = std::max({worst_spread, a[i].spread, b[i].spread});
      worst_change = std::max(worst_change, change);
      if (!(a[i].spread < kEquivalenceMaxSpread && b[i].spread < kEquivalenceMaxSpread && change < kSeedStability))
        pass = false;
    }
  }
  return {pass, "worst max/min " + fmt("%.3f", worst_spread) + ", worst seed change " + fmt("%.3f", worst_change)};
}

// 6. dilation scaling law on nested grids
Outcome criterion6() {
  const auto coarse = build_periodic_grid(1, 64, 1.0);
  // u(2x) on the 128-point refinement: one period is the 64 points of [0, 1/2) at spacing 1/128
  const auto fine = build_periodic_grid(1, 64, 0.5);
  FunctionFamilySpec fs;
  fs.count = 4;
  const auto fields = generate_family(coarse, fs);
  bool pass = true;
  std::string detail;
  for (const auto& [s, p] : std::vector<std::pair<double, double>>{{0.5, 1.0}, {0.5, 2.0}}) {
    const double expected = std::pow(2.0, s - 1.0 / p);
    double worst = 0.0;
    for (const auto& f : fields) {
      const double a = solve(build_program(coarse, f.values, s, p, p, AggregationMode::Lp_lq)).upper_bound;
      const double b = solve(build_program(fine, f.values, s, p, p, AggregationMode::Lp_lq)).upper_bound;
      const double ratio = b / a;
      worst = std::max(worst, rel_diff(ratio, expected));
      if (rel_diff(ratio, expected) > kDilationRelTol) pass = false;
      if (p == 2.0 && !(ratio >= kConformalLo && ratio <= kConformalHi)) pass = false;
    }
    detail += "(s=" + fmt("%g", s) + ",p=" + fmt("%g", p) + ") expected " + fmt("%.4f", expected) +
              " worst rel err " + fmt("%.2e", worst) + "; ";
  }
  return {pass, detail};
}

// 7. quasiconformal invariance at the conformal exponent, drift away from it
Outcome criterion7() {
  const auto grid = build_periodic_grid(2, 48, 1.0);
  const NormParams conformal{0.5, 4.0, 4.0, NormFamily::M};
  bool pass = true;
  std::string detail;
  for (double a : {0.75, 1.5}) {
    const auto map = radial_power_map(grid, a);
    double spreads[2];
    for (int seed = 1; seed <= 2; ++seed) {
      FunctionFamilySpec fs;
      fs.rng_seed = static_cast<std::uint64_t>(seed);
      const auto rep = invariance_experiment(map, fs, {conformal}, NormBackend::difference);
      spreads[seed - 1] = rep.summaries.front().spread();
    }
    const double change = std::max(spreads[0] / spreads[1], spreads[1] / spreads[0]);
    if (!(spreads[0] < kQcMaxSpread && spreads[1] < kQcMaxSpread && change < kSeedStability)) pass = false;
    detail += "a=" + fmt("%g", a) + " spreads " + fmt("%.3f", spreads[0]) + "/" + fmt("%.3f", spreads[1]) + "; ";
  }
  const auto dilation = linear_map(grid, {2.0, 2.0});
  FunctionFamilySpec fs;
  const auto rep = invariance_experiment(dilation, fs, {NormParams{0.5, 2.0, 2.0, NormFamily::M}}, NormBackend::difference);
  const auto& sum = rep.summaries.front();
  // systematic: every member drifts the same way by at least the threshold
  const double drift = sum.max < 1.0 ? 1.0 / sum.max : sum.min;
  if (!(drift >= kNegativeControlDrift)) pass = false;
  detail += "negative control drift " + fmt("%.3f", drift);
  return {pass, detail};
}

// 8. Gehring reverse Hoelder for the volume derivative; change of variables
Outcome criterion8() {
  const auto grid = build_periodic_grid(2, 48, 1.0);
  const auto map = radial_power_map(grid, 2.0);
  const auto J = volume_derivative(map);
  const double h = grid.grid()->spacing();
  const auto balls = sample_balls(grid, 400, 3.0 * h, 0.25, 808, origin_mask(grid, 2.0));
  const auto rh = reverse_holder_scan(grid, J.J_hat, {1.0, 1.5, 2.0, 3.0, 4.0}, balls, kGehringBound);
  bool gehring = false;
  std::string detail = std::to_string(balls.size()) + " balls, B_r:";
  for (std::size_t i = 0; i < rh.r_grid.size(); ++i) {
    detail += " " + fmt("%g", rh.r_grid[i]) + "->" + fmt("%.3f", rh.B_r[i]);
    if (rh.r_grid[i] >= kGehringMinExponent && std::isfinite(rh.B_r[i]) && rh.B_r[i] < kGehringBound) gehring = true;
  }
  FunctionFamilySpec fs;
  fs.count = 1;
  auto u = generate_family(*map.target, fs).front();
  const double lo = *std::min_element(u.values.begin(), u.values.end());
  for (double& v : u.values) v = v - lo + 0.5;
  const auto cov = change_of_variables_check(u, map, J.J_hat);
  detail += "; change of variables discrepancy " + fmt("%.4f", cov.discrepancy);
  return {gehring && cov.relative && cov.discrepancy < kChangeOfVariablesTol, detail};
}

// 9. Poincare ratios with optimizer-certified gradients
Outcome criterion9() {
  const auto grid = build_periodic_grid(1, 128, 1.0);
  const double s = 0.5;
  std::vector<std::size_t> centers;
  for (std::size_t x = 0; x < grid.size(); x += 8) centers.push_back(x);
  bool finite = true;
  double max_l1[2] = {0, 0}, max_sub[2] = {0, 0};
  for (int seed = 1; seed <= 2; ++seed) {
    FunctionFamilySpec fs;
    fs.rng_seed = static_cast<std::uint64_t>(seed);
    for (const auto& f : generate_family(grid, fs)) {
      const auto res = solve(build_program(grid, f.values, s, 2.0, 2.0, AggregationMode::Lp_lq));
      const auto l1 = check_poincare(grid, f.values, res.gradient, s, PoincareVariant::l1(), centers);
      const auto sub = check_poincare(grid, f.values, res.gradient, s, PoincareVariant::sub(1.0, 0.2, 0.3), centers);
      finite = finite && l1.all_finite && sub.all_finite;
      max_l1[seed - 1] = std::max(max_l1[seed - 1], l1.max_ratio);
      max_sub[seed - 1] = std::max(max_sub[seed - 1], sub.max_ratio);
    }
  }
  const double c1 = std::fabs(max_l1[0] / max_l1[1] - 1.0);
  const double c2 = std::fabs(max_sub[0] / max_sub[1] - 1.0);
  return {finite && c1 <= kPoincareStability && c2 <= kPoincareStability,
          "L1 max " + fmt("%.4f", max_l1[0]) + "/" + fmt("%.4f", max_l1[1]) + ", subcritical max " +
              fmt("%.4f", max_sub[0]) + "/" + fmt("%.4f", max_sub[1])};
}

const std::vector<std::pair<std::string, std::function<Outcome()>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<Outcome()>>> list{
      {"optimizer matches brute-force oracle", criterion1},
      {"(p, inf) optimum equals single-gradient optimum", criterion2},
      {"class transforms preserve membership", criterion3},
      {"median / rearrangement chain", criterion4},
      {"equivalence of optimal, Littlewood-Paley, Bourdon-Pajot norms", criterion5},
      {"dilation scaling law", criterion6},
      {"quasiconformal invariance and negative control", criterion7},
      {"reverse Hoelder for the Jacobian, change of variables", criterion8},
      {"Poincare ratios finite and stable", criterion9},
  };
  return list;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> which;
  if (argc > 1) {
    for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
  } else {
    for (int i = 1; i <= static_cast<int>(criteria().size()); ++i) which.push_back(i);
  }
  bool all = true;
  for (int id : which) {
    if (id < 1 || id > static_cast<int>(criteria().size())) {
      std::printf("[FAIL] criterion %d: no such criterion\n", id);
      all = false;
      continue;
    }
    const auto& [name, fn] = criteria()[static_cast<std::size_t>(id - 1)];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] criterion %d: %s -- %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(),
                secs);
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
