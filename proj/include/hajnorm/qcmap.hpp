#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "hajnorm/dictionary.hpp"
#include "hajnorm/error.hpp"
#include "hajnorm/fields.hpp"
#include "hajnorm/gradients.hpp"
#include "hajnorm/lp_bands.hpp"
#include "hajnorm/norms.hpp"
#include "hajnorm/optimize.hpp"
#include "hajnorm/space.hpp"
#include "hajnorm/util.hpp"

namespace hajnorm {

enum class MapFamily { identity, linear, radial_power, custom };

inline const char* to_string(MapFamily f) {
  switch (f) {
    case MapFamily::identity: return "identity";
    case MapFamily::linear: return "linear";
    case MapFamily::radial_power: return "radial_power";
    case MapFamily::custom: return "custom";
  }
  return "?";
}

/// A bijection between the points of two finite spaces: point x of `source` goes to
/// point assignment[x] of `target`.
struct MapSample {
  std::shared_ptr<const MetricMeasureSpace> source;
  std::shared_ptr<const MetricMeasureSpace> target;
  std::vector<std::size_t> assignment;
  MapFamily family = MapFamily::custom;
  /// linear: diagonal entries; radial_power: {a}.
  std::vector<double> params;

  std::size_t size() const { return assignment.size(); }
};

inline void validate_map(const MapSample& map) {
  if (!map.source || !map.target) throw ValidationError("map needs a source and a target space");
  const std::size_t n = map.source->size();
  if (map.target->size() != n || map.assignment.size() != n)
    throw ValidationError("map source and target must have equal point counts");
  std::vector<char> hit(n, 0);
  for (auto y : map.assignment) {
    if (y >= n || hit[y]) throw ValidationError("map assignment is not a bijection");
    hit[y] = 1;
  }
}

inline MapSample inverse(const MapSample& map) {
  MapSample inv;
  inv.source = map.target;
  inv.target = map.source;
  inv.assignment.assign(map.size(), 0);
  for (std::size_t x = 0; x < map.size(); ++x) inv.assignment[map.assignment[x]] = x;
  inv.family = map.family == MapFamily::identity ? MapFamily::identity : MapFamily::custom;
  return inv;
}

namespace detail {

inline std::shared_ptr<const MetricMeasureSpace> shared_grid(const MetricMeasureSpace& grid) {
  if (!grid.is_grid()) throw ConfigError("analytic maps are sampled on periodic grids");
  return std::make_shared<const MetricMeasureSpace>(grid);
}

inline std::vector<std::size_t> identity_assignment(std::size_t n) {
  std::vector<std::size_t> a(n);
  std::iota(a.begin(), a.end(), std::size_t{0});
  return a;
}

/// Volume of the image of a cube under `f`, summing the Kuhn simplices of a `sub`^n subdivision.
template <class F>
double mapped_cube_volume(const std::vector<double>& lo, double h, int sub, F&& f) {
  const int n = static_cast<int>(lo.size());
  std::vector<int> perm(static_cast<std::size_t>(n));
  const double step = h / sub;
  double fact = 1.0;
  for (int i = 2; i <= n; ++i) fact *= i;
  double total = 0.0;
  std::vector<int> cell(static_cast<std::size_t>(n), 0);
  std::vector<double> corner(static_cast<std::size_t>(n));
  int cells = 1;
  for (int i = 0; i < n; ++i) cells *= sub;
  for (int c = 0; c < cells; ++c) {
    int rest = c;
    for (int i = 0; i < n; ++i) {
      cell[static_cast<std::size_t>(i)] = rest % sub;
      rest /= sub;
    }
    std::iota(perm.begin(), perm.end(), 0);
    do {
      // simplex v_0 = cell corner, v_{i+1} = v_i + step e_{perm[i]}
      for (int i = 0; i < n; ++i)
        corner[static_cast<std::size_t>(i)] = lo[static_cast<std::size_t>(i)] + step * cell[static_cast<std::size_t>(i)];
      const std::vector<double> v0 = f(corner);
      Eigen::MatrixXd m(n, n);
      for (int i = 0; i < n; ++i) {
        corner[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] += step;
        const std::vector<double> vi = f(corner);
        for (int r = 0; r < n; ++r) m(r, i) = vi[static_cast<std::size_t>(r)] - v0[static_cast<std::size_t>(r)];
      }
      total += std::fabs(m.determinant()) / fact;
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  return total;
}

}  // namespace detail

inline MapSample identity_map(const MetricMeasureSpace& grid) {
  MapSample map;
  map.source = detail::shared_grid(grid);
  map.target = map.source;
  map.assignment = detail::identity_assignment(grid.size());
  map.family = MapFamily::identity;
  return map;
}

/// x -> diag(A) x on the torus. A uniform dilation lands on the grid of side lambda L; other
/// diagonals land on a torus cloud with periods A_i L and cell measures scaled by det A.
inline MapSample linear_map(const MetricMeasureSpace& grid, const std::vector<double>& diag) {
  MapSample map;
  map.source = detail::shared_grid(grid);
  const GridInfo& gi = *grid.grid();
  if (diag.size() != static_cast<std::size_t>(gi.n_dim)) throw ConfigError("linear map needs one entry per axis");
  for (double a : diag)
    if (!(a > 0.0)) throw ConfigError("linear map entries must be positive");
  map.family = MapFamily::linear;
  map.params = diag;
  map.assignment = detail::identity_assignment(grid.size());
  const bool uniform = std::all_of(diag.begin(), diag.end(), [&](double a) { return a == diag.front(); });
  if (uniform) {
    SpaceOptions opts;
    opts.point_budget = std::max<std::size_t>(opts.point_budget, grid.size());
    map.target = std::make_shared<const MetricMeasureSpace>(
        build_periodic_grid(gi.n_dim, gi.resolution, gi.side_length * diag.front(), opts));
    return map;
  }
  const auto n = static_cast<std::size_t>(gi.n_dim);
  std::vector<double> coords(grid.size() * n), periods(n), measure(grid.size());
  double det = 1.0;
  for (std::size_t d = 0; d < n; ++d) {
    periods[d] = gi.side_length * diag[d];
    det *= diag[d];
  }
  for (std::size_t x = 0; x < grid.size(); ++x) {
    const auto c = grid.coords(x);
    for (std::size_t d = 0; d < n; ++d) coords[x * n + d] = diag[d] * c[d];
    measure[x] = det * grid.measure(x);
  }
  map.target = std::make_shared<const MetricMeasureSpace>(
      build_torus_cloud(std::move(coords), gi.n_dim, std::move(periods), std::move(measure)));
  return map;
}

/// Radial stretch about the center of the fundamental domain: with c = x - L/2 and R = L/2,
/// f(c) = R^{1-a} |c|^{a-1} c inside the disc |c| < R and the identity outside it.
inline std::vector<double> radial_power_point(std::span<const double> c, double a, double R) {
  double r2 = 0.0;
  for (double v : c) r2 += v * v;
  const double r = std::sqrt(r2);
  std::vector<double> out(c.begin(), c.end());
  if (r >= R || r == 0.0) return out;
  const double factor = std::pow(r / R, a - 1.0);
  for (double& v : out) v *= factor;
  return out;
}

/// Analytic volume derivative of radial_power: a R^{n(1-a)} |c|^{n(a-1)} inside the disc.
inline double radial_power_jacobian(std::span<const double> c, double a, double R) {
  double r2 = 0.0;
  for (double v : c) r2 += v * v;
  const double r = std::sqrt(r2);
  if (r >= R) return 1.0;
  const double n = static_cast<double>(c.size());
  return a * std::pow(R, n * (1.0 - a)) * std::pow(r, n * (a - 1.0));
}

/// Centered coordinates x - L/2 of a grid point.
inline std::vector<double> centered_coords(const MetricMeasureSpace& grid, std::size_t x) {
  const double half = 0.5 * grid.grid()->side_length;
  const auto c = grid.coords(x);
  std::vector<double> out(c.begin(), c.end());
  for (double& v : out) v -= half;
  return out;
}

/// Radial power map sampled without rounding: the target is the torus cloud of mapped points,
/// each carrying the volume of its mapped dual cell.
inline MapSample radial_power_map(const MetricMeasureSpace& grid, double a, int cell_subdivision = 4) {
  if (!(a > 0.0)) throw ConfigError("radial power exponent must be positive");
  if (cell_subdivision < 1) throw ConfigError("cell subdivision must be positive");
  MapSample map;
  map.source = detail::shared_grid(grid);
  map.family = MapFamily::radial_power;
  map.params = {a};
  map.assignment = detail::identity_assignment(grid.size());
  const GridInfo& gi = *grid.grid();
  const auto n = static_cast<std::size_t>(gi.n_dim);
  const double L = gi.side_length, R = 0.5 * L, h = gi.spacing();
  auto f = [&](const std::vector<double>& c) { return radial_power_point(c, a, R); };
  std::vector<double> coords(grid.size() * n), measure(grid.size());
  std::vector<double> lo(n);
  for (std::size_t x = 0; x < grid.size(); ++x) {
    const auto c = centered_coords(grid, x);
    const auto y = f(c);
    for (std::size_t d = 0; d < n; ++d) {
      double v = y[d] + R;
      v -= L * std::floor(v / L);
      coords[x * n + d] = v;
      lo[d] = c[d] - 0.5 * h;
    }
    measure[x] = detail::mapped_cube_volume(lo, h, cell_subdivision, f);
  }
  map.target = std::make_shared<const MetricMeasureSpace>(
      build_torus_cloud(std::move(coords), gi.n_dim, std::vector<double>(n, L), std::move(measure)));
  return map;
}

/// Masks grid points within `cells` spacings of the origin of a radial map (the degenerate cell).
inline std::vector<char> origin_mask(const MetricMeasureSpace& grid, double cells = 2.0) {
  if (!grid.is_grid()) throw ConfigError("origin mask needs a periodic grid");
  const double h = grid.grid()->spacing();
  std::vector<char> mask(grid.size(), 0);
  for (std::size_t x = 0; x < grid.size(); ++x) {
    const auto c = centered_coords(grid, x);
    double r2 = 0.0;
    for (double v : c) r2 += v * v;
    mask[x] = std::sqrt(r2) < cells * h ? 1 : 0;
  }
  return mask;
}

inline ScalarField compose(const ScalarField& on_target, const MapSample& map) {
  if (on_target.values.size() != map.size()) throw ValidationError("field size does not match map");
  ScalarField out{map.source->hash(), std::vector<double>(map.size())};
  for (std::size_t x = 0; x < map.size(); ++x) out.values[x] = on_target.values[map.assignment[x]];
  return out;
}

// --- distortion -----------------------------------------------------------------------

struct EtaSample {
  double t = 0.0;
  double ratio = 0.0;
};

struct MapAnalysis {
  std::vector<int> scales;               // j, radius 2^{-j}
  std::vector<int> skipped_scales;       // no realized distance at or below 2^{-j}
  std::vector<std::vector<double>> L_table;    // [scale][point], NaN when skipped for that point
  std::vector<std::vector<double>> ell_table;  // [scale][point]
  std::vector<double> H_hat;             // per point, 1 where no scale applied
  double H_global = 1.0;                 // sup over unmasked points
  std::vector<EtaSample> eta_samples;
  /// min / max of L_f(x,2^{-j})^n / mu_Y(f(B(x,2^{-j}))) over unmasked points and interior scales.
  double volume_ratio_min = kInf;
  double volume_ratio_max = 0.0;
  /// multiplicity_histogram[m] = number of (point, dyadic band) pairs hit by exactly m scales.
  std::vector<std::size_t> multiplicity_histogram;
};

struct DistortionOptions {
  std::optional<ScaleWindow> window;
  std::vector<char> mask;  // nonzero: exclude as center from summaries
  std::size_t eta_count = 2000;
  std::uint64_t seed = 1;
};

inline MapAnalysis analyze_distortion(const MapSample& map, const DistortionOptions& opts = {}) {
  validate_map(map);
  const auto& X = *map.source;
  const auto& Y = *map.target;
  const std::size_t n = X.size();
  if (n < 2) throw ValidationError("distortion analysis needs at least two points");
  if (!opts.mask.empty() && opts.mask.size() != n) throw ValidationError("mask size does not match map");
  const ScaleWindow w = opts.window.value_or(X.window());
  const double nd = std::max(X.ambient_dim(), 1);
  MapAnalysis out;
  for (int j = w.k_min; j <= w.k_max; ++j) out.scales.push_back(j);
  const std::size_t J = out.scales.size();
  out.L_table.assign(J, std::vector<double>(n, std::nan("")));
  out.ell_table.assign(J, std::vector<double>(n, std::nan("")));
  out.H_hat.assign(n, 1.0);
  std::vector<char> scale_used(J, 0);
  std::map<std::size_t, std::size_t> hist;
  std::vector<double> dx(n), dy(n);
  auto masked = [&](std::size_t x) { return !opts.mask.empty() && opts.mask[x]; };
  for (std::size_t x = 0; x < n; ++x) {
    const std::size_t fx = map.assignment[x];
    for (std::size_t y = 0; y < n; ++y) {
      dx[y] = X.dist(x, y);
      dy[y] = Y.dist(fx, map.assignment[y]);
    }
    std::map<int, std::size_t> bands;
    for (std::size_t jj = 0; jj < J; ++jj) {
      const double r = dyadic(out.scales[jj]);
      double snapped = 0.0;
      for (std::size_t y = 0; y < n; ++y)
        if (y != x && dx[y] <= r) snapped = std::max(snapped, dx[y]);
      if (snapped == 0.0) continue;
      double L = 0.0, ell = kInf, image = 0.0;
      for (std::size_t y = 0; y < n; ++y) {
        if (dx[y] <= snapped) L = std::max(L, dy[y]);
        if (y != x && dx[y] >= snapped) ell = std::min(ell, dy[y]);
        if (dx[y] < r) image += Y.measure(map.assignment[y]);
      }
      if (!(ell < kInf)) continue;
      scale_used[jj] = 1;
      out.L_table[jj][x] = L;
      out.ell_table[jj][x] = ell;
      out.H_hat[x] = std::max(out.H_hat[x], L / ell);
      ++bands[scale_of_distance(L)];
      if (!masked(x) && jj > 0 && jj + 1 < J) {
        const double ratio = std::pow(L, nd) / image;
        out.volume_ratio_min = std::min(out.volume_ratio_min, ratio);
        out.volume_ratio_max = std::max(out.volume_ratio_max, ratio);
      }
    }
    for (const auto& [band, m] : bands) ++hist[m];
    if (!masked(x)) out.H_global = std::max(out.H_global, out.H_hat[x]);
  }
  for (std::size_t jj = 0; jj < J; ++jj)
    if (!scale_used[jj]) out.skipped_scales.push_back(out.scales[jj]);
  if (!hist.empty()) {
    out.multiplicity_histogram.assign(hist.rbegin()->first + 1, 0);
    for (const auto& [m, c] : hist) out.multiplicity_histogram[m] = c;
  }
  std::mt19937_64 rng(opts.seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (std::size_t i = 0, tries = 0; i < opts.eta_count && tries < 20 * opts.eta_count + 100; ++tries) {
    const std::size_t x = pick(rng), a = pick(rng), b = pick(rng);
    if (x == a || x == b || masked(x)) continue;
    const std::size_t fx = map.assignment[x];
    out.eta_samples.push_back({X.dist(x, a) / X.dist(x, b), Y.dist(fx, map.assignment[a]) / Y.dist(fx, map.assignment[b])});
    ++i;
  }
  return out;
}

// --- volume derivative and reverse Hoelder -------------------------------------------------

struct VolumeDerivativeField {
  std::vector<double> J_hat;
  double radius = 0.0;
  std::vector<std::size_t> flagged;  // points whose image ball was empty at the policy radius
  /// |sum_x mu_X(x) J_hat(x) - mu_Y(Y)| / mu_Y(Y)
  double mass_error = 0.0;
};

/// Default radius: 3 typical spacings (mu(X)/N)^{1/n}.
inline double default_jacobian_radius(const MetricMeasureSpace& space) {
  const int n = std::max(space.ambient_dim(), 1);
  return 3.0 * std::pow(space.total_measure() / static_cast<double>(space.size()), 1.0 / n);
}

inline VolumeDerivativeField volume_derivative(const MapSample& map, std::optional<double> radius = {}) {
  validate_map(map);
  const auto& X = *map.source;
  const auto& Y = *map.target;
  VolumeDerivativeField out;
  out.radius = radius.value_or(default_jacobian_radius(X));
  if (!(out.radius > 0.0)) throw ConfigError("jacobian radius must be positive");
  const std::size_t n = X.size();
  out.J_hat.assign(n, 0.0);
  for (std::size_t x = 0; x < n; ++x) {
    double r = out.radius;
    for (int attempt = 0; attempt < 60; ++attempt, r *= 2.0) {
      double src = 0.0, img = 0.0;
      for (std::size_t y = 0; y < n; ++y)
        if (X.dist(x, y) < r) {
          src += X.measure(y);
          img += Y.measure(map.assignment[y]);
        }
      if (img > 0.0 && src > 0.0) {
        out.J_hat[x] = img / src;
        break;
      }
      if (attempt == 0) out.flagged.push_back(x);
    }
  }
  std::vector<double> terms(n);
  for (std::size_t x = 0; x < n; ++x) terms[x] = X.measure(x) * out.J_hat[x];
  out.mass_error = std::fabs(pairwise_sum(terms) - Y.total_measure()) / Y.total_measure();
  return out;
}

struct SampledBall {
  std::size_t center = 0;
  double radius = 0.0;
};

/// Deterministic balls with log-uniform radii in [r_min, r_max]; balls containing a masked point are rejected.
inline std::vector<SampledBall> sample_balls(const MetricMeasureSpace& space, std::size_t count, double r_min,
                                             double r_max, std::uint64_t seed, const std::vector<char>& mask = {}) {
  if (!(r_min > 0.0) || r_max < r_min) throw ConfigError("ball radii need 0 < r_min <= r_max");
  if (!mask.empty() && mask.size() != space.size()) throw ValidationError("mask size does not match space");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, space.size() - 1);
  std::uniform_real_distribution<double> logr(std::log(r_min), std::log(r_max));
  std::vector<SampledBall> out;
  for (std::size_t tries = 0; out.size() < count && tries < 50 * count + 100; ++tries) {
    const SampledBall b{pick(rng), std::exp(logr(rng))};
    bool ok = true;
    if (!mask.empty())
      for (std::size_t y = 0; y < space.size() && ok; ++y)
        if (mask[y] && space.dist(b.center, y) < b.radius) ok = false;
    if (ok) out.push_back(b);
  }
  return out;
}

struct ReverseHolderReport {
  std::vector<double> r_grid;
  std::vector<double> B_r;  // sup over balls of (avg w^r)^{1/r} / avg w
  double R_f_hat = 1.0;     // largest r with B_r below the threshold
  double threshold = 10.0;
};

inline ReverseHolderReport reverse_holder_scan(const MetricMeasureSpace& space, std::span<const double> w,
                                               const std::vector<double>& r_grid,
                                               const std::vector<SampledBall>& balls, double threshold = 10.0) {
  if (w.size() != space.size()) throw ValidationError("weight size does not match space");
  for (double v : w)
    if (!(v > 0.0)) throw DomainError("reverse Hoelder weight must be positive");
  ReverseHolderReport rep;
  rep.r_grid = r_grid;
  std::sort(rep.r_grid.begin(), rep.r_grid.end());
  rep.threshold = threshold;
  rep.B_r.assign(rep.r_grid.size(), 1.0);
  std::vector<double> powered(w.size());
  for (std::size_t i = 0; i < rep.r_grid.size(); ++i) {
    const double r = rep.r_grid[i];
    for (std::size_t y = 0; y < w.size(); ++y) powered[y] = abs_pow(w[y], r);
    for (const auto& b : balls) {
      const double avg = ball_average(space, w, b.center, b.radius);
      const double avg_r = ball_average(space, powered, b.center, b.radius);
      rep.B_r[i] = std::max(rep.B_r[i], root(avg_r, r) / avg);
    }
    if (i > 0) rep.B_r[i] = std::max(rep.B_r[i], rep.B_r[i - 1]);  // guards rounding; exact sups are monotone
  }
  for (std::size_t i = 0; i < rep.r_grid.size(); ++i)
    if (rep.B_r[i] < threshold) rep.R_f_hat = std::max(rep.R_f_hat, rep.r_grid[i]);
  return rep;
}

struct ChangeOfVariablesReport {
  double source_integral = 0.0;  // sum_x mu_X(x) u(f(x)) J(x)
  double target_integral = 0.0;  // sum_y mu_Y(y) u(y)
  double discrepancy = 0.0;
  bool relative = true;
};

inline ChangeOfVariablesReport change_of_variables_check(const ScalarField& on_target, const MapSample& map,
                                                         std::span<const double> J_hat) {
  validate_map(map);
  if (on_target.values.size() != map.size() || J_hat.size() != map.size())
    throw ValidationError("field or jacobian size does not match map");
  for (double v : on_target.values)
    if (v < 0.0) throw DomainError("change of variables check needs a nonnegative field");
  const std::size_t n = map.size();
  std::vector<double> a(n), b(n);
  for (std::size_t x = 0; x < n; ++x) a[x] = map.source->measure(x) * on_target.values[map.assignment[x]] * J_hat[x];
  for (std::size_t y = 0; y < n; ++y) b[y] = map.target->measure(y) * on_target.values[y];
  ChangeOfVariablesReport rep;
  rep.source_integral = pairwise_sum(a);
  rep.target_integral = pairwise_sum(b);
  rep.discrepancy = std::fabs(rep.source_integral - rep.target_integral);
  if (rep.target_integral > 0.0) {
    rep.discrepancy /= rep.target_integral;
  } else {
    rep.relative = false;
  }
  return rep;
}

// --- invariance experiments ------------------------------------------------------------------

enum class NormBackend { optimal, difference, grand, lp };

inline const char* to_string(NormBackend b) {
  switch (b) {
    case NormBackend::optimal: return "optimal";
    case NormBackend::difference: return "difference";
    case NormBackend::grand: return "grand";
    case NormBackend::lp: return "lp";
  }
  return "?";
}

inline NormBackend backend_from_string(const std::string& s) {
  if (s == "optimal") return NormBackend::optimal;
  if (s == "difference") return NormBackend::difference;
  if (s == "grand") return NormBackend::grand;
  if (s == "lp") return NormBackend::lp;
  throw ConfigError("unknown norm backend '" + s + "'");
}

struct BackendOptions {
  int K0 = 2;
  SolverConfig solver;
};

/// Evaluates one norm backend; `table` may be shared across fields on the same space.
class NormEvaluator {
 public:
  NormEvaluator(const MetricMeasureSpace& space, NormBackend backend, BackendOptions opts = {})
      : space_(space), backend_(backend), opts_(std::move(opts)) {
    if ((backend == NormBackend::grand || backend == NormBackend::lp) && !space.is_grid())
      throw ConfigError(std::string(to_string(backend)) + " backend needs a periodic grid");
    if (backend == NormBackend::difference) table_ = std::make_unique<NeighborTable>(space);
    if (backend == NormBackend::grand) dict_ = default_dictionary(space.grid()->n_dim);
    if (backend == NormBackend::lp) bank_ = build_band_filters(*space.grid());
  }

  double operator()(std::span<const double> u, double s, double p, double q) const {
    switch (backend_) {
      case NormBackend::optimal:
        return solve(build_program(space_, u, s, p, q, AggregationMode::Lp_lq), opts_.solver).upper_bound;
      case NormBackend::difference:
        return aggregate(space_, difference_gradient(space_, u, s, p, opts_.K0, table_.get()), p, q,
                         AggregationMode::Lp_lq);
      case NormBackend::grand:
        return grand_norm(space_, u, s, p, q, dict_, GrandFamily::F);
      case NormBackend::lp:
        return tl_norm(space_, band_decompose(space_, u, bank_), s, p, q);
    }
    return 0.0;
  }

 private:
  const MetricMeasureSpace& space_;
  NormBackend backend_;
  BackendOptions opts_;
  std::unique_ptr<NeighborTable> table_;
  Dictionary dict_;
  FilterBank bank_;
};

struct RatioRow {
  std::size_t field_id = 0;
  double s = 0.0, p = 0.0, q = 0.0;
  double source_norm = 0.0;  // ||u o f|| on the source
  double target_norm = 0.0;  // ||u|| on the target
  double ratio = 0.0;
};

struct RatioSummary {
  double s = 0.0, p = 0.0, q = 0.0;
  double min = kInf, max = 0.0, geometric_mean = 0.0;
  double spread() const { return max / min; }
};

struct RatioReport {
  std::string backend;
  std::string map_family;
  std::vector<RatioRow> rows;
  std::vector<RatioSummary> summaries;
};

/// Runs `work(i)` for i < count on up to `threads` workers; results must be written by index.
template <class F>
void parallel_for(std::size_t count, unsigned threads, F&& work) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) work(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < count; i += threads) work(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// ratio ||u o f||_source / ||u||_target for each field u generated on the target.
inline RatioReport invariance_experiment(const MapSample& map, const FunctionFamilySpec& family,
                                         const std::vector<NormParams>& params, NormBackend backend,
                                         const BackendOptions& opts = {}, unsigned threads = 1) {
  validate_map(map);
  for (const auto& np : params) np.validate();
  const NormEvaluator on_source(*map.source, backend, opts);
  const bool same = map.source == map.target;
  std::unique_ptr<NormEvaluator> target_eval;
  if (!same) target_eval = std::make_unique<NormEvaluator>(*map.target, backend, opts);
  const NormEvaluator& on_target = same ? on_source : *target_eval;
  const auto fields = generate_family(*map.target, family);
  RatioReport rep;
  rep.backend = to_string(backend);
  rep.map_family = to_string(map.family);
  rep.rows.resize(fields.size() * params.size());
  parallel_for(fields.size(), threads, [&](std::size_t i) {
    const auto composed = compose(fields[i], map);
    for (std::size_t j = 0; j < params.size(); ++j) {
      const auto& np = params[j];
      RatioRow row{i, np.s, np.p, np.q, 0.0, 0.0, 0.0};
      row.target_norm = on_target(fields[i].values, np.s, np.p, np.q);
      row.source_norm = same ? row.target_norm : on_source(composed.values, np.s, np.p, np.q);
      row.ratio = row.source_norm / row.target_norm;
      rep.rows[i * params.size() + j] = row;
    }
  });
  for (std::size_t j = 0; j < params.size(); ++j) {
    RatioSummary sum{params[j].s, params[j].p, params[j].q};
    double logs = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const double r = rep.rows[i * params.size() + j].ratio;
      if (!(r > 0.0) || !std::isfinite(r)) continue;
      sum.min = std::min(sum.min, r);
      sum.max = std::max(sum.max, r);
      logs += std::log(r);
      ++used;
    }
    sum.geometric_mean = used ? std::exp(logs / static_cast<double>(used)) : 0.0;
    rep.summaries.push_back(sum);
  }
  return rep;
}

}  // namespace hajnorm
