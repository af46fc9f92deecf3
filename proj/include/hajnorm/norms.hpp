#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "hajnorm/error.hpp"
#include "hajnorm/gradients.hpp"
#include "hajnorm/space.hpp"
#include "hajnorm/util.hpp"

namespace hajnorm {

enum class AggregationMode { Lp_lq, lq_Lp };

inline const char* to_string(AggregationMode m) { return m == AggregationMode::Lp_lq ? "Lp_lq" : "lq_Lp"; }

inline AggregationMode mode_from_string(const std::string& s) {
  if (s == "Lp_lq" || s == "M" || s == "F") return AggregationMode::Lp_lq;
  if (s == "lq_Lp" || s == "N" || s == "B") return AggregationMode::lq_Lp;
  throw ConfigError("unknown aggregation mode '" + s + "'");
}

enum class NormFamily { M, N, F, B, BP, Sobolev };

struct NormParams {
  double s = 0.5;
  double p = 2.0;
  double q = 2.0;
  NormFamily family = NormFamily::M;

  void validate() const {
    if (!(s > 0.0)) throw ConfigError("s must be positive");
    if (!(p > 0.0) || !(q > 0.0)) throw ConfigError("p and q must be positive or inf");
    if (family == NormFamily::BP && (p < 1.0 || is_inf(p))) throw ConfigError("Bourdon-Pajot norm needs p in [1, inf)");
  }
};

/// Lp_lq: pointwise l^q over scales, then weighted L^p. lq_Lp: weighted L^p per scale, then l^q.
inline double aggregate(const MetricMeasureSpace& space, const GradientSequence& grad, double p, double q,
                        AggregationMode mode) {
  const ScaleWindow w = grad.window();
  const std::size_t n = space.size();
  if (w.count() == 0 || n == 0) return 0.0;
  if (mode == AggregationMode::Lp_lq) {
    std::vector<double> pointwise(n);
    std::vector<double> column(static_cast<std::size_t>(w.count()));
    for (std::size_t x = 0; x < n; ++x) {
      for (int k = w.k_min; k <= w.k_max; ++k) column[static_cast<std::size_t>(k - w.k_min)] = grad(k, x);
      pointwise[x] = weighted_norm(column, {}, q);
    }
    return weighted_norm(pointwise, space.measures(), p);
  }
  std::vector<double> per_scale(static_cast<std::size_t>(w.count()));
  for (int k = w.k_min; k <= w.k_max; ++k)
    per_scale[static_cast<std::size_t>(k - w.k_min)] = weighted_norm(grad.scale(k), space.measures(), p);
  return weighted_norm(per_scale, {}, q);
}

/// L^p norm of a single field (the Sobolev-type aggregate of one gradient).
inline double lp_norm(const MetricMeasureSpace& space, std::span<const double> g, double p) {
  return weighted_norm(g, space.measures(), p);
}

/// Aggregation used by the p = inf spaces: sup over (k, x) of (sum_{j>=k} avg_{B(x,2^{-k})} g_j^q)^{1/q}.
inline double norm_infinity_q(const MetricMeasureSpace& space, const GradientSequence& grad, double q) {
  const ScaleWindow w = grad.window();
  if (w.count() == 0) return 0.0;
  if (is_inf(q)) {
    double m = 0.0;
    for (double v : grad.raw()) m = std::max(m, v);
    return m;
  }
  const std::size_t n = space.size();
  // tail[k][y] = sum_{j >= k} g_j(y)^q
  std::vector<double> tail(n, 0.0);
  double best = 0.0;
  for (int k = w.k_max; k >= w.k_min; --k) {
    for (std::size_t y = 0; y < n; ++y) tail[y] += abs_pow(grad(k, y), q);
    for (std::size_t x = 0; x < n; ++x) best = std::max(best, ball_average(space, tail, x, dyadic(k)));
  }
  return root(best, q);
}

/// (sum over ordered pairs mu(x) mu(y) |u(x)-u(y)|^p / (d^{sp} V(x,y)))^{1/p}, V(x,y) = mu(B(x, d(x,y))).
inline double bourdon_pajot_norm(const MetricMeasureSpace& space, std::span<const double> u, double s, double p,
                                 const NeighborTable* table = nullptr) {
  if (p < 1.0 || is_inf(p)) throw ConfigError("Bourdon-Pajot norm needs p in [1, inf)");
  const std::size_t n = space.size();
  std::unique_ptr<NeighborTable> own;
  if (!table) {
    own = std::make_unique<NeighborTable>(space);
    table = own.get();
  }
  std::vector<double> rows(n, 0.0);
  for (std::size_t x = 0; x < n; ++x) {
    double acc = 0.0;
    for (std::size_t y = 0; y < n; ++y) {
      if (y == x) continue;
      const double diff = abs_pow(u[x] - u[y], p);
      if (diff == 0.0) continue;
      acc += space.measure(y) * diff / (std::pow(space.dist(x, y), s * p) * table->volume(x, y));
    }
    rows[x] = space.measure(x) * acc;
  }
  return root(pairwise_sum(rows), p);
}

// --- medians and rearrangements ----------------------------------------------

/// Smallest value m with mass{u > m} <= M/2 and mass{u < m} <= M/2, M the total weight.
inline double weighted_median(std::span<const double> values, std::span<const double> weights) {
  if (values.empty()) throw DomainError("median of an empty set");
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0u);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double total = 0.0;
  for (double w : weights) total += w;
  const double half = 0.5 * total;
  double cum = 0.0;
  for (std::size_t t = 0; t < idx.size(); ++t) {
    cum += weights[idx[t]];
    // finish the tie block before testing
    if (t + 1 < idx.size() && values[idx[t + 1]] == values[idx[t]]) continue;
    if (cum >= half * (1.0 - 1e-14)) return values[idx[t]];
  }
  return values[idx.back()];
}

/// Nonincreasing rearrangement v*(t) = inf{alpha >= 0 : mass{|v| > alpha} <= t}.
inline double rearrangement(std::span<const double> values, std::span<const double> weights, double t) {
  if (t < 0.0) throw DomainError("rearrangement needs t >= 0");
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0u);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return std::fabs(values[a]) > std::fabs(values[b]); });
  // walk from the top: mass above the candidate alpha = |v_(i)| is the mass of strictly larger values
  double above = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    const double level = std::fabs(values[idx[i]]);
    if (above > t) break;
    std::size_t j = i;
    double block = 0.0;
    while (j < idx.size() && std::fabs(values[idx[j]]) == level) block += weights[idx[j++]];
    if (above + block > t) return level;  // alpha slightly below level would leave too much mass
    above += block;
    i = j;
  }
  return 0.0;
}

inline double rearrangement(const MetricMeasureSpace& space, std::span<const double> values, double t) {
  return rearrangement(values, space.measures(), t);
}

struct Ball {
  std::size_t center = 0;
  double radius = 0.0;
};

inline double median(const MetricMeasureSpace& space, std::span<const double> u, Ball ball) {
  std::vector<double> vals, wts;
  for (std::size_t y : ball_members(space, ball.center, ball.radius)) {
    vals.push_back(u[y]);
    wts.push_back(space.measure(y));
  }
  return weighted_median(vals, wts);
}

struct MedianReport {
  double median_value = 0.0;
  Ball ball;
  double delta = 1.0;
  double c = 0.0;
  double lhs = 0.0;        // |m_u(B) - c|
  double middle = 0.0;     // (|u - c| chi_B)^*(|B|/2)
  double bound_rhs = 0.0;  // (2 avg_B |u - c|^delta)^{1/delta}
  bool first_holds = true;
  bool second_holds = true;

  bool ok() const { return first_holds && second_holds; }
};

inline MedianReport check_median_bound(const MetricMeasureSpace& space, std::span<const double> u, Ball ball,
                                       double c, double delta) {
  if (!(delta > 0.0) || delta > 1.0) throw ConfigError("delta must lie in (0, 1]");
  MedianReport rep;
  rep.ball = ball;
  rep.delta = delta;
  rep.c = c;
  std::vector<double> vals, dev, wts;
  double mass = 0.0, moment = 0.0;
  for (std::size_t y : ball_members(space, ball.center, ball.radius)) {
    vals.push_back(u[y]);
    dev.push_back(std::fabs(u[y] - c));
    wts.push_back(space.measure(y));
    mass += space.measure(y);
    moment += space.measure(y) * std::pow(std::fabs(u[y] - c), delta);
  }
  rep.median_value = weighted_median(vals, wts);
  rep.lhs = std::fabs(rep.median_value - c);
  rep.middle = rearrangement(dev, wts, 0.5 * mass);
  rep.bound_rhs = std::pow(2.0 * moment / mass, 1.0 / delta);
  const double slack = 1e-12 * (1.0 + std::fabs(c) + rep.bound_rhs);
  rep.first_holds = rep.lhs <= rep.middle + slack;
  rep.second_holds = rep.middle <= rep.bound_rhs + slack;
  return rep;
}

// --- Poincare-type checks ------------------------------------------------------

struct PoincareVariant {
  enum Kind { L1_annulus, subcritical } kind = L1_annulus;
  double p = 1.0;
  double eps = 0.0;
  double eps_prime = 0.0;
  /// Dimension used in the exponent np/(n - eps p); 0 selects the space's ambient dimension.
  int n = 0;
  double min_annulus_fraction = 0.25;

  static PoincareVariant l1() { return {}; }
  static PoincareVariant sub(double p, double eps, double eps_prime, int n = 0) {
    return {subcritical, p, eps, eps_prime, n, 0.25};
  }
};

struct PoincareSample {
  std::size_t center = 0;
  int k = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;
};

struct PoincareReport {
  std::vector<PoincareSample> samples;
  double max_ratio = 0.0;
  bool all_finite = true;
  std::size_t skipped = 0;
};

/// inf_c (avg |u - c|^P)^{1/P} over weighted values; exact median for P = 1, golden section otherwise.
inline double best_constant_deviation(std::span<const double> vals, std::span<const double> wts, double P) {
  double mass = 0.0;
  for (double w : wts) mass += w;
  auto cost = [&](double c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i) acc += wts[i] * abs_pow(vals[i] - c, P);
    return root(acc / mass, P);
  };
  if (P == 1.0) return cost(weighted_median(vals, wts));
  double lo = *std::min_element(vals.begin(), vals.end());
  double hi = *std::max_element(vals.begin(), vals.end());
  if (hi == lo) return 0.0;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - inv_phi * (hi - lo);
  double b = lo + inv_phi * (hi - lo);
  double fa = cost(a), fb = cost(b);
  while (hi - lo > 1e-10) {
    if (fa < fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - inv_phi * (hi - lo);
      fa = cost(a);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + inv_phi * (hi - lo);
      fb = cost(b);
    }
  }
  return std::min(fa, fb);
}

/// Evaluates lhs and the constant-free rhs on balls B(x, 2^{-k}) for every center in `centers`
/// (all points when empty) and every k of the gradient window. Balls whose annulus
/// {2^{-k-1} <= d(x, .) < 2^{-k+2}} carries less than min_annulus_fraction of mu(B(x, 2^{-k})) are
/// skipped: there the space is not reverse doubling at that scale and the rhs can vanish.
inline PoincareReport check_poincare(const MetricMeasureSpace& space, std::span<const double> u,
                                     const GradientSequence& grad, double s, const PoincareVariant& variant,
                                     std::vector<std::size_t> centers = {}) {
  if (centers.empty()) {
    centers.resize(space.size());
    std::iota(centers.begin(), centers.end(), 0u);
  }
  double P = 1.0;
  if (variant.kind == PoincareVariant::subcritical) {
    const int n = variant.n > 0 ? variant.n : space.ambient_dim();
    if (n <= 0) throw ConfigError("subcritical Poincare check needs a dimension");
    if (!(variant.eps > 0.0 && variant.eps < variant.eps_prime && variant.eps_prime < s))
      throw ConfigError("subcritical Poincare check needs 0 < eps < eps' < s");
    if (!(variant.p > 0.0) || variant.p > 1.0) throw ConfigError("subcritical Poincare check needs p in (0, 1]");
    if (n <= variant.eps * variant.p) throw ConfigError("subcritical Poincare check needs n > eps p");
    P = n * variant.p / (n - variant.eps * variant.p);
  }
  const ScaleWindow w = grad.window();
  PoincareReport rep;
  std::vector<double> vals, wts, gp(space.size());
  for (std::size_t x : centers) {
    for (int k = w.k_min; k <= w.k_max; ++k) {
      const double ball_mass = ball_measure(space, x, dyadic(k));
      const double annulus = ball_measure(space, x, dyadic(k - 2)) - ball_measure(space, x, dyadic(k + 1));
      if (annulus < variant.min_annulus_fraction * ball_mass) {
        ++rep.skipped;
        continue;
      }
      vals.clear();
      wts.clear();
      for (std::size_t y : ball_members(space, x, dyadic(k))) {
        vals.push_back(u[y]);
        wts.push_back(space.measure(y));
      }
      PoincareSample smp{x, k, best_constant_deviation(vals, wts, P), 0.0, 0.0};
      if (variant.kind == PoincareVariant::L1_annulus) {
        double acc = 0.0;
        for (int j = k - 3; j <= k; ++j) {
          if (!w.contains(j)) continue;
          acc += ball_average(space, grad.scale(j), x, dyadic(k - 2));
        }
        smp.rhs = std::exp2(-k * s) * acc;
      } else {
        double acc = 0.0;
        for (int j = std::max(k - 2, w.k_min); j <= w.k_max; ++j) {
          const auto gj = grad.scale(j);
          for (std::size_t y = 0; y < gp.size(); ++y) gp[y] = abs_pow(gj[y], variant.p);
          acc += std::exp2(-j * (s - variant.eps_prime)) * root(ball_average(space, gp, x, dyadic(k - 1)), variant.p);
        }
        smp.rhs = std::exp2(-k * variant.eps_prime) * acc;
      }
      if (smp.lhs == 0.0)
        smp.ratio = 0.0;
      else
        smp.ratio = smp.rhs > 0.0 ? smp.lhs / smp.rhs : kInf;
      if (!std::isfinite(smp.ratio)) rep.all_finite = false;
      rep.max_ratio = std::max(rep.max_ratio, smp.ratio);
      rep.samples.push_back(smp);
    }
  }
  return rep;
}

}  // namespace hajnorm
