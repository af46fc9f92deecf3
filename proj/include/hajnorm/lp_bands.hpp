#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hajnorm/dictionary.hpp"
#include "hajnorm/error.hpp"
#include "hajnorm/fft.hpp"
#include "hajnorm/norms.hpp"
#include "hajnorm/space.hpp"
#include "hajnorm/util.hpp"

namespace hajnorm {

/// Smooth cutoff: 1 on [0, 1], 0 on [2, inf), C^inf transition of sharpness sigma in between.
inline double band_cutoff(double r, double sigma) {
  if (r <= 1.0) return 1.0;
  if (r >= 2.0) return 0.0;
  const double a = std::exp(-sigma / (2.0 - r));
  const double b = std::exp(-sigma / (r - 1.0));
  return a / (a + b);
}

struct FilterBank {
  GridInfo grid;
  int k_lo = 1;
  int k_hi = 1;
  double taper = 1.0;
  bool squared = false;
  /// multipliers[k - k_lo][flat frequency index]
  std::vector<std::vector<double>> multipliers;

  std::span<const double> multiplier(int k) const { return multipliers[static_cast<std::size_t>(k - k_lo)]; }
  int count() const { return k_hi - k_lo + 1; }
};

/// Smallest band range whose annuli cover every nonzero representable frequency.
inline std::pair<int, int> auto_band_range(const GridInfo& grid) {
  const GridFFT fft(grid);
  double lo = kInf, hi = 0.0;
  for (std::size_t i = 1; i < fft.size(); ++i) {
    const double r = fft.frequency_norm(i);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  return {static_cast<int>(std::floor(std::log2(lo) + 1e-12)) + 1, static_cast<int>(std::ceil(std::log2(hi) - 1e-12))};
}

/// Band k has multiplier theta(|xi|/2^k) - theta(|xi|/2^{k-1}); the lowest band keeps theta(|xi|/2^{k_lo}).
/// With `squared` the differences are taken on theta^2 and square-rooted, so the squares sum to 1.
inline FilterBank build_band_filters(const GridInfo& grid, std::optional<std::pair<int, int>> k_range = {},
                                     double taper = 1.0, bool squared = false) {
  if (!(taper > 0.0)) throw ConfigError("taper sharpness must be positive");
  FilterBank bank;
  bank.grid = grid;
  bank.taper = taper;
  bank.squared = squared;
  const auto range = k_range.value_or(auto_band_range(grid));
  bank.k_lo = range.first;
  bank.k_hi = range.second;
  if (bank.k_hi < bank.k_lo) throw ConfigError("empty band range");
  const GridFFT fft(grid);
  double top = 0.0;
  for (std::size_t i = 1; i < fft.size(); ++i) top = std::max(top, fft.frequency_norm(i));
  if (top > std::exp2(bank.k_hi) * (1.0 + 1e-12))
    throw ConfigError("band range ends at 2^" + std::to_string(bank.k_hi) + " below the largest frequency " +
                      std::to_string(top));
  auto theta = [&](double r) {
    const double t = band_cutoff(r, taper);
    return squared ? t * t : t;
  };
  bank.multipliers.assign(static_cast<std::size_t>(bank.count()), std::vector<double>(fft.size(), 0.0));
  for (std::size_t i = 1; i < fft.size(); ++i) {
    const double r = fft.frequency_norm(i);
    for (int k = bank.k_lo; k <= bank.k_hi; ++k) {
      double m = theta(r / std::exp2(k));
      if (k > bank.k_lo) m -= theta(r / std::exp2(k - 1));
      m = std::max(m, 0.0);
      bank.multipliers[static_cast<std::size_t>(k - bank.k_lo)][i] = squared ? std::sqrt(m) : m;
    }
  }
  return bank;
}

struct BandCoefficients {
  int k_lo = 1;
  int k_hi = 0;
  std::vector<std::vector<double>> bands;

  std::span<const double> band(int k) const { return bands[static_cast<std::size_t>(k - k_lo)]; }
};

inline BandCoefficients band_decompose(const MetricMeasureSpace& space, std::span<const double> u,
                                       const FilterBank& bank) {
  if (!space.is_grid()) throw DomainError("band decomposition needs a periodic grid");
  const GridFFT fft(*space.grid());
  if (fft.size() != bank.multipliers.front().size()) throw ValidationError("filter bank does not match grid");
  const auto u_hat = fft.forward(u);
  BandCoefficients out;
  out.k_lo = bank.k_lo;
  out.k_hi = bank.k_hi;
  for (int k = bank.k_lo; k <= bank.k_hi; ++k) {
    const auto m = bank.multiplier(k);
    std::vector<cplx> a(u_hat.size());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = u_hat[i] * m[i];
    out.bands.push_back(fft.inverse_real(std::move(a)));
  }
  return out;
}

/// Triebel-Lizorkin aggregation of already weighted band fields f_k = 2^{ks} |band_k|:
/// ||(sum_k f_k^q)^{1/q}||_{L^p}, and for p = inf the ball-average form
/// sup_x sup_l (avg_{B(x,2^{-l})} sum_{k>=l} f_k^q)^{1/q}.
inline double tl_aggregate(const MetricMeasureSpace& space, int k_lo, const std::vector<std::vector<double>>& f, double p,
                           double q) {
  const std::size_t n = space.size();
  const int k_hi = k_lo + static_cast<int>(f.size()) - 1;
  if (f.empty()) return 0.0;
  if (!is_inf(p)) {
    std::vector<double> pointwise(n), column(f.size());
    for (std::size_t x = 0; x < n; ++x) {
      for (std::size_t k = 0; k < f.size(); ++k) column[k] = f[k][x];
      pointwise[x] = weighted_norm(column, {}, q);
    }
    return weighted_norm(pointwise, space.measures(), p);
  }
  if (is_inf(q)) {
    double m = 0.0;
    for (const auto& fk : f)
      for (double v : fk) m = std::max(m, std::fabs(v));
    return m;
  }
  std::vector<double> tail(n, 0.0);
  double best = 0.0;
  for (int l = k_hi; l >= k_lo; --l) {
    const auto& fl = f[static_cast<std::size_t>(l - k_lo)];
    for (std::size_t y = 0; y < n; ++y) tail[y] += abs_pow(fl[y], q);
    for (std::size_t x = 0; x < n; ++x) best = std::max(best, ball_average(space, tail, x, dyadic(l)));
  }
  return root(best, q);
}

inline double besov_aggregate(const MetricMeasureSpace& space, const std::vector<std::vector<double>>& f, double p,
                              double q) {
  std::vector<double> per_band(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) per_band[k] = weighted_norm(f[k], space.measures(), p);
  return weighted_norm(per_band, {}, q);
}

namespace detail {

inline std::vector<std::vector<double>> weighted_bands(const BandCoefficients& c, double s) {
  std::vector<std::vector<double>> f;
  for (int k = c.k_lo; k <= c.k_hi; ++k) {
    const double w = std::exp2(k * s);
    std::vector<double> fk(c.band(k).begin(), c.band(k).end());
    for (double& v : fk) v = w * std::fabs(v);
    f.push_back(std::move(fk));
  }
  return f;
}

}  // namespace detail

inline double tl_norm(const MetricMeasureSpace& space, const BandCoefficients& coeffs, double s, double p, double q) {
  return tl_aggregate(space, coeffs.k_lo, detail::weighted_bands(coeffs, s), p, q);
}

inline double besov_norm(const MetricMeasureSpace& space, const BandCoefficients& coeffs, double s, double p, double q) {
  return besov_aggregate(space, detail::weighted_bands(coeffs, s), p, q);
}

enum class GrandFamily { F, B };

/// Band norm with |phi_{2^{-k}} * u| replaced by the dictionary maximum, over the automatic band range.
inline double grand_norm(const MetricMeasureSpace& space, std::span<const double> u, double s, double p, double q,
                         const Dictionary& dict, GrandFamily family) {
  if (!space.is_grid()) throw DomainError("grand norm needs a periodic grid");
  const auto [k_lo, k_hi] = auto_band_range(*space.grid());
  const GradientSequence g = grand_maximal_gradient(space, u, s, dict, ScaleWindow{k_lo, k_hi});
  std::vector<std::vector<double>> f;
  for (int k = k_lo; k <= k_hi; ++k) f.emplace_back(g.scale(k).begin(), g.scale(k).end());
  return family == GrandFamily::F ? tl_aggregate(space, k_lo, f, p, q) : besov_aggregate(space, f, p, q);
}

}  // namespace hajnorm
