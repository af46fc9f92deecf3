#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "hajnorm/error.hpp"
#include "hajnorm/space.hpp"
#include "hajnorm/util.hpp"

namespace hajnorm {

/// Per-scale nonnegative fields g_k over a finite window; zero outside the window.
class GradientSequence {
 public:
  GradientSequence() = default;
  GradientSequence(ScaleWindow window, std::size_t points)
      : window_(window), points_(points), data_(static_cast<std::size_t>(window.count()) * points, 0.0) {}

  ScaleWindow window() const { return window_; }
  std::size_t points() const { return points_; }

  double operator()(int k, std::size_t x) const {
    return window_.contains(k) ? data_[offset(k) + x] : 0.0;
  }
  double& at(int k, std::size_t x) {
    if (!window_.contains(k)) throw DomainError("gradient scale " + std::to_string(k) + " outside window");
    return data_[offset(k) + x];
  }
  std::span<const double> scale(int k) const { return {data_.data() + offset(k), points_}; }
  std::span<double> scale(int k) { return {data_.data() + offset(k), points_}; }

  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  GradientSequence& operator*=(double a) {
    for (double& v : data_) v *= a;
    return *this;
  }

 private:
  std::size_t offset(int k) const { return static_cast<std::size_t>(k - window_.k_min) * points_; }

  ScaleWindow window_{0, -1};
  std::size_t points_ = 0;
  std::vector<double> data_;
};

inline GradientSequence operator*(double a, GradientSequence g) {
  g *= a;
  return g;
}

enum class GradientClass { base, shifted, lower_tail, upper_tail };

struct GradientClassSpec {
  GradientClass cls = GradientClass::base;
  double s = 1.0;
  int N1 = 0;  // shifted: extra finer scales
  int N2 = 0;  // shifted: extra coarser scales
  double eps = 0.0;  // tail classes
  int N = 0;         // tail classes: N3 (lower) or N4 (upper)

  static GradientClassSpec base(double s) { return {GradientClass::base, s, 0, 0, 0.0, 0}; }
  static GradientClassSpec shifted(double s, int n1, int n2) { return {GradientClass::shifted, s, n1, n2, 0.0, 0}; }
  static GradientClassSpec lower_tail(double s, double eps, int n) { return {GradientClass::lower_tail, s, 0, 0, eps, n}; }
  static GradientClassSpec upper_tail(double s, double eps, int n) { return {GradientClass::upper_tail, s, 0, 0, eps, n}; }
};

/// Throws ConfigError on inadmissible parameters; returns warnings (possibly empty) for p = inf use.
inline std::vector<std::string> validate_class_spec(const GradientClassSpec& spec, double p = 1.0) {
  if (!(spec.s > 0.0) || spec.s > 2.0) throw ConfigError("class smoothness s must lie in (0, 2]");
  std::vector<std::string> warnings;
  switch (spec.cls) {
    case GradientClass::base: break;
    case GradientClass::shifted:
      if (spec.N1 < 0 || spec.N2 < 0) throw ConfigError("shifted class needs N1, N2 >= 0");
      if (is_inf(p) && spec.N1 != 0) warnings.emplace_back("p = inf: equivalence with the base class needs N1 = 0");
      break;
    case GradientClass::lower_tail:
      if (!(spec.eps > 0.0) || spec.eps > spec.s) throw ConfigError("lower tail class needs eps in (0, s]");
      if (spec.N < 0) throw ConfigError("lower tail class needs N >= 0");
      if (is_inf(p) && spec.N > 0) warnings.emplace_back("p = inf: equivalence with the base class needs N3 <= 0");
      break;
    case GradientClass::upper_tail:
      if (!(spec.eps > 0.0)) throw ConfigError("upper tail class needs eps > 0");
      if (spec.N < 0) throw ConfigError("upper tail class needs N >= 0");
      break;
  }
  return warnings;
}

struct WorstPair {
  std::size_t x = 0;
  std::size_t y = 0;
  int k = 0;
};

struct FeasibilityReport {
  double rho_min = 0.0;
  WorstPair worst_pair;
  std::size_t violated_count = 0;

  bool member(double slack = 0.0) const { return rho_min <= 1.0 + slack; }
};

namespace detail {

inline void record(FeasibilityReport& rep, double required, double available, std::size_t x, std::size_t y, int k) {
  if (!(required > 0.0)) return;
  const double ratio = available > 0.0 ? required / available : kInf;
  if (ratio > 1.0) ++rep.violated_count;
  if (ratio > rep.rho_min) {
    rep.rho_min = ratio;
    rep.worst_pair = {x, y, k};
  }
}

}  // namespace detail

/// Smallest rho such that rho * grad belongs to the class for u.
inline FeasibilityReport check_membership(const MetricMeasureSpace& space, std::span<const double> u,
                                          const GradientSequence& grad, const GradientClassSpec& spec) {
  validate_class_spec(spec);
  FeasibilityReport rep;
  const ScaleWindow w = grad.window();
  auto gsum = [&](int k, std::size_t x, std::size_t y) { return grad(k, x) + grad(k, y); };
  for (std::size_t x = 0; x < space.size(); ++x) {
    for (std::size_t y = x + 1; y < space.size(); ++y) {
      const double required = std::fabs(u[x] - u[y]);
      if (!(required > 0.0)) continue;
      const double d = space.dist(x, y);
      const int k0 = scale_of_distance(d);
      switch (spec.cls) {
        case GradientClass::base:
          detail::record(rep, required, std::pow(d, spec.s) * gsum(k0, x, y), x, y, k0);
          break;
        case GradientClass::shifted: {
          const double ds = std::pow(d, spec.s);
          for (int k = k0 - spec.N1; k <= k0 + spec.N2; ++k) detail::record(rep, required, ds * gsum(k, x, y), x, y, k);
          break;
        }
        case GradientClass::lower_tail: {
          double acc = 0.0;
          for (int k = std::max(w.k_min, k0 - spec.N); k <= w.k_max; ++k)
            acc += std::exp2(-k * spec.eps) * gsum(k, x, y);
          detail::record(rep, required, std::pow(d, spec.s - spec.eps) * acc, x, y, k0);
          break;
        }
        case GradientClass::upper_tail: {
          double acc = 0.0;
          for (int k = w.k_min; k <= std::min(w.k_max, k0 - spec.N); ++k)
            acc += std::exp2(k * spec.eps) * gsum(k, x, y);
          detail::record(rep, required, std::pow(d, spec.s + spec.eps) * acc, x, y, k0);
          break;
        }
      }
    }
  }
  return rep;
}

/// Base member -> member of the given class.
inline GradientSequence transform_from_base(const GradientSequence& g, const GradientClassSpec& spec) {
  validate_class_spec(spec);
  const ScaleWindow w = g.window();
  const std::size_t n = g.points();
  switch (spec.cls) {
    case GradientClass::base: return g;
    case GradientClass::shifted: {
      GradientSequence h({w.k_min - spec.N1, w.k_max + spec.N2}, n);
      for (int k = h.window().k_min; k <= h.window().k_max; ++k)
        for (int j = -spec.N2; j <= spec.N1; ++j)
          for (std::size_t x = 0; x < n; ++x) h.at(k, x) += g(k + j, x);
      return h;
    }
    case GradientClass::lower_tail: {
      // h_k = 2^{N eps} g_{k-N}
      GradientSequence h({w.k_min + spec.N, w.k_max + spec.N}, n);
      const double c = std::exp2(spec.N * spec.eps);
      for (int k = h.window().k_min; k <= h.window().k_max; ++k)
        for (std::size_t x = 0; x < n; ++x) h.at(k, x) = c * g(k - spec.N, x);
      return h;
    }
    case GradientClass::upper_tail: {
      // h_k = 2^{(N+1) eps} g_{k+N}; the extra factor absorbs d^eps 2^{k eps} >= 2^{-eps}.
      GradientSequence h({w.k_min - spec.N, w.k_max - spec.N}, n);
      const double c = std::exp2((spec.N + 1) * spec.eps);
      for (int k = h.window().k_min; k <= h.window().k_max; ++k)
        for (std::size_t x = 0; x < n; ++x) h.at(k, x) = c * g(k + spec.N, x);
      return h;
    }
  }
  return g;
}

/// Class member -> base member. The output window is the hull of the input window, its shift by
/// the class offset, and `cover` (pass the space window so that every realized scale is present).
inline GradientSequence transform_to_base(const GradientSequence& g, const GradientClassSpec& spec,
                                          ScaleWindow cover = {0, -1}) {
  validate_class_spec(spec);
  const ScaleWindow w = g.window();
  const std::size_t n = g.points();
  auto widen = [&](ScaleWindow a) { return cover.count() > 0 ? hull(a, cover) : a; };
  switch (spec.cls) {
    case GradientClass::base:
    case GradientClass::shifted: return g;
    case GradientClass::lower_tail: {
      // h_k = sum_{j >= k-N} 2^{(k-j+1) eps} g_j
      GradientSequence h(widen(hull(w, {w.k_min + spec.N, w.k_max + spec.N})), n);
      for (int k = h.window().k_min; k <= h.window().k_max; ++k)
        for (int j = std::max(w.k_min, k - spec.N); j <= w.k_max; ++j) {
          const double c = std::exp2((k - j + 1) * spec.eps);
          for (std::size_t x = 0; x < n; ++x) h.at(k, x) += c * g(j, x);
        }
      return h;
    }
    case GradientClass::upper_tail: {
      // h_k = sum_{j <= k-N} 2^{(j-k) eps} g_j
      GradientSequence h(widen(hull(w, {w.k_min + spec.N, w.k_max + spec.N})), n);
      for (int k = h.window().k_min; k <= h.window().k_max; ++k)
        for (int j = w.k_min; j <= std::min(w.k_max, k - spec.N); ++j) {
          const double c = std::exp2((j - k) * spec.eps);
          for (std::size_t x = 0; x < n; ++x) h.at(k, x) += c * g(j, x);
        }
      return h;
    }
  }
  return g;
}

// --- difference gradient -----------------------------------------------------

/// Geometry shared by every difference-type computation on one space: neighbors of each point
/// sorted by distance and V(x, y) = mu(B(x, d(x, y))).
class NeighborTable {
 public:
  explicit NeighborTable(const MetricMeasureSpace& space) : n_(space.size()) {
    order_.resize(n_ * n_);
    dist_.resize(n_ * n_);
    vol_.resize(n_ * n_);
    std::vector<std::uint32_t> idx(n_);
    for (std::size_t x = 0; x < n_; ++x) {
      std::iota(idx.begin(), idx.end(), 0u);
      std::stable_sort(idx.begin(), idx.end(),
                       [&](std::uint32_t a, std::uint32_t b) { return space.dist(x, a) < space.dist(x, b); });
      double mass = 0.0;
      std::size_t i = 0;
      while (i < n_) {
        const double d = space.dist(x, idx[i]);
        std::size_t j = i;
        while (j < n_ && space.dist(x, idx[j]) == d) ++j;
        // open ball of radius d excludes the tie block itself
        for (std::size_t t = i; t < j; ++t) {
          order_[x * n_ + t] = idx[t];
          dist_[x * n_ + t] = d;
          vol_[x * n_ + idx[t]] = mass;
        }
        for (std::size_t t = i; t < j; ++t) mass += space.measure(idx[t]);
        i = j;
      }
    }
  }

  std::size_t size() const { return n_; }
  std::uint32_t neighbor(std::size_t x, std::size_t rank) const { return order_[x * n_ + rank]; }
  /// V(x, y) = mu(B(x, d(x, y))), open ball.
  double volume(std::size_t x, std::size_t y) const { return vol_[x * n_ + y]; }
  /// Number of neighbors of x (itself included) at distance < r.
  std::size_t count_below(std::size_t x, double r) const {
    const double* row = dist_.data() + x * n_;
    return static_cast<std::size_t>(std::lower_bound(row, row + n_, r) - row);
  }

 private:
  std::size_t n_;
  std::vector<std::uint32_t> order_;
  std::vector<double> dist_;
  std::vector<double> vol_;
};

/// Nonzero range of difference_gradient: annuli [2^{-j+1}, 2^{-j+K0+1}) must meet realized distances.
inline ScaleWindow difference_window(const MetricMeasureSpace& space, int K0) {
  const ScaleWindow w = space.window();
  if (w.count() == 0) return w;
  return {w.k_min + 2, w.k_max + K0 + 1};
}

/// Constructive gradient built from pair differences over annuli:
/// h_j(x)^p = avg_{y in B(x,2^{-j-1})} sum_{z in annulus_j(x)} mu(z) |u(y)-u(z)|^p / (d(y,z)^{sp} V(y,z)).
inline GradientSequence difference_gradient(const MetricMeasureSpace& space, std::span<const double> u, double s,
                                            double p, int K0, const NeighborTable* table = nullptr) {
  if (K0 < 1) throw ConfigError("difference gradient needs K0 >= 1");
  if (!(p > 0.0) || is_inf(p)) throw ConfigError("difference gradient needs finite p > 0");
  const std::size_t n = space.size();
  const ScaleWindow w = difference_window(space, K0);
  GradientSequence h(w, n);
  if (w.count() == 0) return h;
  std::unique_ptr<NeighborTable> own;
  if (!table) {
    own = std::make_unique<NeighborTable>(space);
    table = own.get();
  }
  // kernel K(y, z) = mu(z) |u(y)-u(z)|^p / (d^{sp} V(y,z)), row-major in y
  std::vector<double> kernel(n * n, 0.0);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t z = 0; z < n; ++z) {
      if (y == z) continue;
      const double diff = abs_pow(u[y] - u[z], p);
      if (diff == 0.0) continue;
      kernel[y * n + z] = space.measure(z) * diff / (std::pow(space.dist(y, z), s * p) * table->volume(y, z));
    }
  for (int j = w.k_min; j <= w.k_max; ++j) {
    const double r_in = dyadic(j + 1);
    const double a_lo = dyadic(j - 1);
    const double a_hi = dyadic(j - K0 - 1);
    auto hj = h.scale(j);
    for (std::size_t x = 0; x < n; ++x) {
      const std::size_t ball_end = table->count_below(x, r_in);
      const std::size_t ann_begin = table->count_below(x, a_lo);
      const std::size_t ann_end = table->count_below(x, a_hi);
      if (ann_begin >= ann_end) continue;
      double mass = 0.0;
      double acc = 0.0;
      for (std::size_t b = 0; b < ball_end; ++b) {
        const std::size_t y = table->neighbor(x, b);
        const double* row = kernel.data() + y * n;
        double inner = 0.0;
        for (std::size_t a = ann_begin; a < ann_end; ++a) inner += row[table->neighbor(x, a)];
        acc += space.measure(y) * inner;
        mass += space.measure(y);
      }
      hj[x] = root(acc / mass, p);
    }
  }
  return h;
}

}  // namespace hajnorm
