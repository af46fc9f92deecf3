#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hajnorm/error.hpp"
#include "hajnorm/space.hpp"
#include "hajnorm/util.hpp"

namespace hajnorm {

struct ScalarField {
  std::string space;  // hash of the owning space
  std::vector<double> values;
};

enum class FamilyKind { trig_polynomial, bump_mixture, lipschitz_random, constant };

inline const char* to_string(FamilyKind k) {
  switch (k) {
    case FamilyKind::trig_polynomial: return "trig_polynomial";
    case FamilyKind::bump_mixture: return "bump_mixture";
    case FamilyKind::lipschitz_random: return "lipschitz_random";
    case FamilyKind::constant: return "constant";
  }
  return "?";
}

inline FamilyKind family_kind_from_string(const std::string& s) {
  if (s == "trig_polynomial") return FamilyKind::trig_polynomial;
  if (s == "bump_mixture") return FamilyKind::bump_mixture;
  if (s == "lipschitz_random") return FamilyKind::lipschitz_random;
  if (s == "constant") return FamilyKind::constant;
  throw ConfigError("unknown family kind '" + s + "'");
}

struct FunctionFamilySpec {
  FamilyKind kind = FamilyKind::trig_polynomial;
  int count = 16;
  /// trig: max frequency per axis; bumps and lipschitz: number of centers/anchors.
  int degree = 4;
  /// trig: number of random Fourier terms per field.
  int terms = 4;
  double amplitude_min = 0.5;
  double amplitude_max = 1.5;
  /// trig amplitudes are divided by |m|^decay.
  double decay = 1.0;
  std::uint64_t rng_seed = 1;

  std::string hash() const {
    Fnv1a h;
    h.update(to_string(kind));
    h.update(static_cast<std::int64_t>(count));
    h.update(static_cast<std::int64_t>(degree));
    h.update(static_cast<std::int64_t>(terms));
    h.update(amplitude_min);
    h.update(amplitude_max);
    h.update(decay);
    h.update(static_cast<std::int64_t>(rng_seed));
    return h.hex();
  }
};

inline double weighted_mean(const MetricMeasureSpace& space, std::span<const double> u) {
  std::vector<double> terms(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) terms[i] = space.measure(i) * u[i];
  return pairwise_sum(terms) / space.total_measure();
}

namespace detail {

inline std::vector<double> trig_field(const MetricMeasureSpace& space, const FunctionFamilySpec& spec,
                                      std::mt19937_64& rng) {
  const int dim = space.coord_dim();
  const auto& periods = space.periods();
  std::uniform_int_distribution<int> freq(-spec.degree, spec.degree);
  std::uniform_real_distribution<double> amp(spec.amplitude_min, spec.amplitude_max);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::vector<double> u(space.size(), 0.0);
  for (int t = 0; t < spec.terms; ++t) {
    std::vector<int> m(static_cast<std::size_t>(dim));
    do {
      for (auto& mi : m) mi = freq(rng);
    } while (std::all_of(m.begin(), m.end(), [](int v) { return v == 0; }));
    double norm2 = 0.0;
    for (int mi : m) norm2 += static_cast<double>(mi) * mi;
    const double a = amp(rng) / std::pow(std::sqrt(norm2), spec.decay);
    const double ph = phase(rng);
    for (std::size_t x = 0; x < space.size(); ++x) {
      const auto c = space.coords(x);
      double arg = ph;
      for (int d = 0; d < dim; ++d)
        arg += 2.0 * std::numbers::pi * m[static_cast<std::size_t>(d)] * c[static_cast<std::size_t>(d)] /
               periods[static_cast<std::size_t>(d)];
      u[x] += a * std::cos(arg);
    }
  }
  const double mean = weighted_mean(space, u);
  for (double& v : u) v -= mean;
  return u;
}

inline std::vector<double> bump_field(const MetricMeasureSpace& space, const FunctionFamilySpec& spec,
                                      std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, space.size() - 1);
  std::uniform_real_distribution<double> amp(spec.amplitude_min, spec.amplitude_max);
  std::uniform_real_distribution<double> sign(-1.0, 1.0);
  std::uniform_real_distribution<double> width(0.1, 0.3);
  std::vector<double> u(space.size(), 0.0);
  const double diam = std::max(space.diameter(), 1e-300);
  for (int b = 0; b < std::max(spec.degree, 1); ++b) {
    const std::size_t center = pick(rng);
    const double a = amp(rng) * (sign(rng) < 0 ? -1.0 : 1.0);
    const double w = width(rng) * diam;
    for (std::size_t x = 0; x < space.size(); ++x) {
      const double r = space.dist(center, x) / w;
      u[x] += a * std::exp(-r * r);
    }
  }
  return u;
}

// McShane extension of random anchor values with random slope.
inline std::vector<double> lipschitz_field(const MetricMeasureSpace& space, const FunctionFamilySpec& spec,
                                           std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, space.size() - 1);
  std::uniform_real_distribution<double> amp(spec.amplitude_min, spec.amplitude_max);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  const double L = amp(rng);
  std::vector<double> u(space.size(), kInf);
  for (int a = 0; a < std::max(spec.degree, 1); ++a) {
    const std::size_t anchor = pick(rng);
    const double v = val(rng) * L * space.diameter();
    for (std::size_t x = 0; x < space.size(); ++x) u[x] = std::min(u[x], v + L * space.dist(anchor, x));
  }
  return u;
}

}  // namespace detail

/// Deterministic family of test fields; field i uses a generator seeded from (rng_seed, i).
inline std::vector<ScalarField> generate_family(const MetricMeasureSpace& space, const FunctionFamilySpec& spec) {
  if (spec.count < 0) throw ConfigError("family count must be nonnegative");
  if (spec.kind == FamilyKind::trig_polynomial && !space.is_periodic())
    throw ConfigError("trig_polynomial fields need a periodic grid or torus cloud");
  if (spec.kind == FamilyKind::trig_polynomial && spec.degree < 1) throw ConfigError("trig degree must be >= 1");
  std::vector<ScalarField> out;
  out.reserve(static_cast<std::size_t>(spec.count));
  for (int i = 0; i < spec.count; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.rng_seed), static_cast<std::uint32_t>(spec.rng_seed >> 32),
                      static_cast<std::uint32_t>(i)};
    std::mt19937_64 rng(seq);
    ScalarField f{space.hash(), {}};
    switch (spec.kind) {
      case FamilyKind::trig_polynomial: f.values = detail::trig_field(space, spec, rng); break;
      case FamilyKind::bump_mixture: f.values = detail::bump_field(space, spec, rng); break;
      case FamilyKind::lipschitz_random: f.values = detail::lipschitz_field(space, spec, rng); break;
      case FamilyKind::constant: f.values.assign(space.size(), spec.amplitude_max); break;
    }
    out.push_back(std::move(f));
  }
  return out;
}

inline double lipschitz_constant(const MetricMeasureSpace& space, std::span<const double> u) {
  double best = 0.0;
  for (std::size_t x = 0; x < space.size(); ++x)
    for (std::size_t y = x + 1; y < space.size(); ++y) best = std::max(best, std::fabs(u[x] - u[y]) / space.dist(x, y));
  return best;
}

}  // namespace hajnorm
