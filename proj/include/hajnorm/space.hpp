#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "hajnorm/error.hpp"
#include "hajnorm/util.hpp"

namespace hajnorm {

enum class Topology { point_cloud, periodic_grid, torus_cloud };

inline const char* to_string(Topology t) {
  switch (t) {
    case Topology::point_cloud: return "point_cloud";
    case Topology::periodic_grid: return "periodic_grid";
    case Topology::torus_cloud: return "torus_cloud";
  }
  return "?";
}

struct GridInfo {
  int n_dim = 1;
  int resolution = 4;
  double side_length = 1.0;

  double spacing() const { return side_length / resolution; }
};

/// Dyadic scale range realized by the pairwise distances of a space.
struct ScaleWindow {
  int k_min = 0;
  int k_max = 0;

  int count() const { return k_max >= k_min ? k_max - k_min + 1 : 0; }
  bool contains(int k) const { return k >= k_min && k <= k_max; }
};

inline ScaleWindow hull(ScaleWindow a, ScaleWindow b) {
  return {std::min(a.k_min, b.k_min), std::max(a.k_max, b.k_max)};
}

/// Unique k with 2^{-k-1} <= d < 2^{-k}; d must be positive and finite.
inline int scale_of_distance(double d) {
  if (!(d > 0.0) || !std::isfinite(d)) throw DomainError("scale_of_distance: distance must be positive");
  int e = 0;
  std::frexp(d, &e);  // d = m * 2^e, m in [0.5, 1)
  return -e;
}

inline double dyadic(int k) { return std::ldexp(1.0, -k); }  // 2^{-k}

struct SpaceOptions {
  std::size_t point_budget = 1u << 16;
  std::size_t dense_distance_limit = 1u << 12;
  std::size_t exhaustive_triangle_limit = 200;
  std::size_t sampled_triangle_checks = 20000;
  std::uint64_t validation_seed = 0x5eed;
};

/// Finite metric measure space. Immutable after construction.
class MetricMeasureSpace {
 public:
  std::size_t size() const { return measure_.size(); }
  Topology topology() const { return topology_; }
  bool is_grid() const { return topology_ == Topology::periodic_grid; }
  bool is_periodic() const { return topology_ != Topology::point_cloud; }
  const std::optional<GridInfo>& grid() const { return grid_; }

  /// Coordinate dimension; 0 for pure distance-matrix clouds.
  int coord_dim() const { return coord_dim_; }
  std::span<const double> coords(std::size_t i) const {
    return {coords_.data() + i * static_cast<std::size_t>(coord_dim_), static_cast<std::size_t>(coord_dim_)};
  }
  const std::vector<double>& periods() const { return periods_; }

  double measure(std::size_t i) const { return measure_[i]; }
  std::span<const double> measures() const { return measure_; }
  double total_measure() const { return total_measure_; }

  double dist(std::size_t i, std::size_t j) const {
    if (!dense_.empty()) return dense_[i * size() + j];
    return coord_dist(i, j);
  }

  double diameter() const { return diameter_; }
  double min_distance() const { return min_distance_; }
  ScaleWindow window() const { return window_; }
  const std::string& hash() const { return hash_; }

  /// Ambient dimension used by scaling laws: grid dimension, torus coordinate dimension, or 0.
  int ambient_dim() const {
    if (grid_) return grid_->n_dim;
    return topology_ == Topology::torus_cloud ? coord_dim_ : 0;
  }

  friend MetricMeasureSpace build_periodic_grid(int, int, double, const SpaceOptions&);
  friend MetricMeasureSpace build_point_cloud(const std::vector<std::vector<double>>&, std::vector<double>,
                                              const SpaceOptions&);
  friend MetricMeasureSpace build_torus_cloud(std::vector<double>, int, std::vector<double>, std::vector<double>,
                                              const SpaceOptions&);

 private:
  MetricMeasureSpace() = default;

  double coord_dist(std::size_t i, std::size_t j) const {
    double acc = 0.0;
    const double* a = coords_.data() + i * static_cast<std::size_t>(coord_dim_);
    const double* b = coords_.data() + j * static_cast<std::size_t>(coord_dim_);
    for (int c = 0; c < coord_dim_; ++c) {
      double delta = std::fabs(a[c] - b[c]);
      if (!periods_.empty()) {
        const double period = periods_[static_cast<std::size_t>(c)];
        delta = std::fmod(delta, period);
        delta = std::min(delta, period - delta);
      }
      acc += delta * delta;
    }
    return std::sqrt(acc);
  }

  void finalize(const SpaceOptions& opts) {
    const std::size_t n = size();
    total_measure_ = pairwise_sum(measure_);
    if (!coords_.empty() && n <= opts.dense_distance_limit) {
      dense_.assign(n * n, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) dense_[i * n + j] = dense_[j * n + i] = coord_dist(i, j);
    }
    diameter_ = 0.0;
    min_distance_ = kInf;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double d = dist(i, j);
        if (!(d > 0.0)) {
          std::ostringstream msg;
          msg << "points " << i << " and " << j << " coincide (distance " << d << ")";
          throw ValidationError(msg.str());
        }
        diameter_ = std::max(diameter_, d);
        min_distance_ = std::min(min_distance_, d);
      }
    }
    if (n >= 2) {
      window_ = {scale_of_distance(diameter_), scale_of_distance(min_distance_)};
    } else {
      min_distance_ = 0.0;
      window_ = {0, -1};
    }
    Fnv1a h;
    h.update(to_string(topology_));
    h.update(static_cast<std::int64_t>(n));
    h.update(measure_);
    if (!coords_.empty()) {
      h.update(coords_);
      h.update(periods_);
    } else {
      h.update(dense_);
    }
    hash_ = h.hex();
  }

  Topology topology_ = Topology::point_cloud;
  std::optional<GridInfo> grid_;
  int coord_dim_ = 0;
  std::vector<double> coords_;
  std::vector<double> periods_;
  std::vector<double> measure_;
  std::vector<double> dense_;
  double total_measure_ = 0.0;
  double diameter_ = 0.0;
  double min_distance_ = 0.0;
  ScaleWindow window_{0, -1};
  std::string hash_;
};

inline void validate_measures(std::span<const double> measure) {
  if (measure.empty()) throw ValidationError("space needs at least one point");
  for (std::size_t i = 0; i < measure.size(); ++i) {
    if (!(measure[i] > 0.0) || !std::isfinite(measure[i])) {
      std::ostringstream msg;
      msg << "measure of point " << i << " must be positive and finite, got " << measure[i];
      throw ValidationError(msg.str());
    }
  }
}

/// Flat torus grid [0, side)^n with uniform measure (side/resolution)^n per point.
inline MetricMeasureSpace build_periodic_grid(int n_dim, int resolution, double side_length,
                                              const SpaceOptions& opts = {}) {
  if (n_dim < 1 || n_dim > 3) throw ConfigError("periodic grid dimension must be 1, 2 or 3");
  if (resolution < 4) throw ConfigError("periodic grid resolution must be >= 4");
  if (!(side_length > 0.0)) throw ConfigError("periodic grid side length must be positive");
  std::size_t count = 1;
  for (int d = 0; d < n_dim; ++d) {
    count *= static_cast<std::size_t>(resolution);
    if (count > opts.point_budget) {
      throw ResourceError("periodic grid exceeds point budget of " + std::to_string(opts.point_budget));
    }
  }
  MetricMeasureSpace space;
  space.topology_ = Topology::periodic_grid;
  space.grid_ = GridInfo{n_dim, resolution, side_length};
  space.coord_dim_ = n_dim;
  space.periods_.assign(static_cast<std::size_t>(n_dim), side_length);
  const double h = side_length / resolution;
  space.coords_.resize(count * static_cast<std::size_t>(n_dim));
  for (std::size_t idx = 0; idx < count; ++idx) {
    std::size_t rest = idx;
    // axis 0 varies fastest
    for (int d = 0; d < n_dim; ++d) {
      space.coords_[idx * static_cast<std::size_t>(n_dim) + static_cast<std::size_t>(d)] =
          static_cast<double>(rest % static_cast<std::size_t>(resolution)) * h;
      rest /= static_cast<std::size_t>(resolution);
    }
  }
  space.measure_.assign(count, std::pow(h, n_dim));
  space.finalize(opts);
  return space;
}

/// Point cloud from an explicit distance matrix; validates the metric axioms.
inline MetricMeasureSpace build_point_cloud(const std::vector<std::vector<double>>& dist, std::vector<double> measure,
                                            const SpaceOptions& opts = {}) {
  const std::size_t n = measure.size();
  validate_measures(measure);
  if (dist.size() != n) throw ValidationError("distance matrix size does not match measure vector");
  if (n > opts.dense_distance_limit) throw ResourceError("point cloud exceeds dense distance limit");
  for (std::size_t i = 0; i < n; ++i) {
    if (dist[i].size() != n) throw ValidationError("distance matrix is not square");
    if (dist[i][i] != 0.0) throw ValidationError("distance matrix diagonal must be zero at " + std::to_string(i));
    for (std::size_t j = 0; j < n; ++j) {
      const double d = dist[i][j];
      if (!std::isfinite(d) || d < 0.0) throw ValidationError("distances must be finite and nonnegative");
      if (d != dist[j][i]) {
        std::ostringstream msg;
        msg << "symmetry violated for pair (" << i << "," << j << ")";
        throw ValidationError(msg.str());
      }
    }
  }
  auto check_triple = [&](std::size_t a, std::size_t b, std::size_t c) {
    const double lhs = dist[a][c];
    const double rhs = dist[a][b] + dist[b][c];
    if (lhs > rhs * (1.0 + 1e-12) + 1e-300) {
      std::ostringstream msg;
      msg << "triangle inequality violated for triple (" << a << "," << b << "," << c << "): d(" << a << "," << c
          << ")=" << lhs << " > " << rhs;
      throw ValidationError(msg.str());
    }
  };
  if (n <= opts.exhaustive_triangle_limit) {
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t c = 0; c < n; ++c) check_triple(a, b, c);
  } else {
    std::mt19937_64 rng(opts.validation_seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t t = 0; t < opts.sampled_triangle_checks; ++t) check_triple(pick(rng), pick(rng), pick(rng));
  }
  MetricMeasureSpace space;
  space.topology_ = Topology::point_cloud;
  space.measure_ = std::move(measure);
  space.dense_.resize(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) space.dense_[i * n + j] = dist[i][j];
  space.finalize(opts);
  return space;
}

/// Points with coordinates on a flat torus with per-axis periods (empty periods: Euclidean cloud).
inline MetricMeasureSpace build_torus_cloud(std::vector<double> coords, int coord_dim, std::vector<double> periods,
                                            std::vector<double> measure, const SpaceOptions& opts = {}) {
  validate_measures(measure);
  if (coord_dim < 1) throw ConfigError("coordinate dimension must be positive");
  if (coords.size() != measure.size() * static_cast<std::size_t>(coord_dim))
    throw ValidationError("coordinate array does not match point count");
  if (!periods.empty() && periods.size() != static_cast<std::size_t>(coord_dim))
    throw ValidationError("one period per coordinate axis required");
  for (double p : periods)
    if (!(p > 0.0)) throw ValidationError("torus periods must be positive");
  if (measure.size() > opts.point_budget) throw ResourceError("point cloud exceeds point budget");
  MetricMeasureSpace space;
  space.topology_ = periods.empty() ? Topology::point_cloud : Topology::torus_cloud;
  space.coord_dim_ = coord_dim;
  space.coords_ = std::move(coords);
  space.periods_ = std::move(periods);
  space.measure_ = std::move(measure);
  space.finalize(opts);
  return space;
}

// --- queries ---------------------------------------------------------------

inline int scale_of_pair(const MetricMeasureSpace& space, std::size_t x, std::size_t y) {
  if (x == y) throw DomainError("scale_of_pair: x and y must differ");
  return scale_of_distance(space.dist(x, y));
}

/// Open ball {y : d(center, y) < radius}.
inline std::vector<std::size_t> ball_members(const MetricMeasureSpace& space, std::size_t center, double radius) {
  std::vector<std::size_t> out;
  for (std::size_t y = 0; y < space.size(); ++y)
    if (space.dist(center, y) < radius) out.push_back(y);
  return out;
}

inline double ball_measure(const MetricMeasureSpace& space, std::size_t center, double radius) {
  double m = 0.0;
  for (std::size_t y = 0; y < space.size(); ++y)
    if (space.dist(center, y) < radius) m += space.measure(y);
  return m;
}

inline double ball_average(const MetricMeasureSpace& space, std::span<const double> field, std::size_t center,
                           double radius) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t y = 0; y < space.size(); ++y) {
    if (space.dist(center, y) < radius) {
      num += space.measure(y) * field[y];
      den += space.measure(y);
    }
  }
  return num / den;
}

// --- doubling diagnostics --------------------------------------------------

struct DoublingSample {
  std::size_t x = 0;
  double r = 0.0;
  double lambda = 0.0;
  double ratio = 0.0;
};

struct DoublingReport {
  double C1_hat = 1.0;
  double C2_hat = 1.0;
  double kappa_hat = 0.0;
  double n_hat = 0.0;
  std::vector<DoublingSample> samples;
};

struct DoublingOptions {
  std::vector<double> lambda_grid{2.0, 4.0};
  std::size_t sample_count = 400;
  std::uint64_t rng_seed = 1;
  /// Radius range; nonpositive values select [2 * min distance, diameter / (2 lambda)].
  double r_min = 0.0;
  double r_max = 0.0;
};

inline DoublingReport estimate_doubling(const MetricMeasureSpace& space, const DoublingOptions& opts = {}) {
  if (space.size() < 2) throw DomainError("estimate_doubling needs at least two points");
  DoublingReport report;
  std::mt19937_64 rng(opts.rng_seed);
  std::uniform_int_distribution<std::size_t> pick(0, space.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t s = 0; s < opts.sample_count; ++s) {
    const double lambda = opts.lambda_grid[s % opts.lambda_grid.size()];
    const double lo = opts.r_min > 0.0 ? opts.r_min : 2.0 * space.min_distance();
    const double hi = opts.r_max > 0.0 ? opts.r_max : space.diameter() / (2.0 * lambda);
    const std::size_t x = pick(rng);
    const double u = unit(rng);
    if (!(hi > lo)) continue;
    const double r = lo * std::pow(hi / lo, u);
    const double small = ball_measure(space, x, r);
    const double big = ball_measure(space, x, lambda * r);
    report.samples.push_back({x, r, lambda, big / small});
  }
  if (report.samples.empty()) return report;
  // Least squares through the origin of log(ratio) on log(lambda); a weighted mean of per-sample slopes.
  double num = 0.0, den = 0.0;
  double slope_min = kInf;
  for (const auto& smp : report.samples) {
    const double ll = std::log(smp.lambda);
    num += ll * std::log(smp.ratio);
    den += ll * ll;
    slope_min = std::min(slope_min, std::log(smp.ratio) / ll);
  }
  report.n_hat = num / den;
  report.kappa_hat = std::clamp(slope_min, 0.0, report.n_hat);
  report.C1_hat = kInf;
  report.C2_hat = 0.0;
  for (const auto& smp : report.samples) {
    report.C1_hat = std::min(report.C1_hat, smp.ratio / std::pow(smp.lambda, report.kappa_hat));
    report.C2_hat = std::max(report.C2_hat, smp.ratio / std::pow(smp.lambda, report.n_hat));
  }
  return report;
}

}  // namespace hajnorm
