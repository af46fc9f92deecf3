#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hajnorm/error.hpp"
#include "hajnorm/fft.hpp"
#include "hajnorm/gradients.hpp"
#include "hajnorm/space.hpp"

namespace hajnorm {

/// Width of the Gaussian bump psi^(xi) = exp(-alpha |xi|^2); with this alpha the dilation
/// difference psi^(xi) - psi^(2 xi) peaks at |xi| = 1.
inline const double kBumpAlpha = std::log(4.0) / 3.0;

/// One term c * beta^{-n} psi((x - shift) / beta) of an atom.
struct AtomTerm {
  double coef = 1.0;
  double beta = 1.0;
  std::array<double, 3> shift{0.0, 0.0, 0.0};
};

struct Atom {
  std::string name;
  std::vector<AtomTerm> terms;
  /// Multiplies the atom so that its discretized S_{1,m} seminorm equals 1.
  double scale = 1.0;

  cplx fourier(const double* xi, int n_dim) const {
    double r2 = 0.0;
    for (int d = 0; d < n_dim; ++d) r2 += xi[d] * xi[d];
    cplx acc = 0.0;
    for (const auto& t : terms) {
      double phase = 0.0;
      for (int d = 0; d < n_dim; ++d) phase += xi[d] * t.shift[static_cast<std::size_t>(d)];
      acc += t.coef * std::exp(-kBumpAlpha * t.beta * t.beta * r2) *
             std::polar(1.0, -2.0 * std::numbers::pi * phase);
    }
    return scale * acc;
  }
};

namespace detail {

inline double bump(double r2, int n_dim) {
  return std::pow(std::numbers::pi / kBumpAlpha, 0.5 * n_dim) * std::exp(-std::numbers::pi * std::numbers::pi * r2 / kBumpAlpha);
}

/// sup_{|gamma| <= 1} sup_x |d^gamma phi(x)| (1 + |x|)^m, sampled on a uniform box.
inline double s1m_seminorm(const Atom& atom, int n_dim, double m) {
  const double half = 10.0;
  const double h = n_dim <= 2 ? 0.05 : 0.2;
  const int per_axis = static_cast<int>(2.0 * half / h) + 1;
  std::size_t total = 1;
  for (int d = 0; d < n_dim; ++d) total *= static_cast<std::size_t>(per_axis);
  double best = 0.0;
  std::array<double, 3> x{};
  std::array<double, 4> vals{};
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rest = idx;
    double r2 = 0.0;
    for (int d = 0; d < n_dim; ++d) {
      x[static_cast<std::size_t>(d)] = -half + h * static_cast<double>(rest % static_cast<std::size_t>(per_axis));
      rest /= static_cast<std::size_t>(per_axis);
      r2 += x[static_cast<std::size_t>(d)] * x[static_cast<std::size_t>(d)];
    }
    vals.fill(0.0);
    for (const auto& t : atom.terms) {
      double y2 = 0.0;
      std::array<double, 3> y{};
      for (int d = 0; d < n_dim; ++d) {
        y[static_cast<std::size_t>(d)] = (x[static_cast<std::size_t>(d)] - t.shift[static_cast<std::size_t>(d)]) / t.beta;
        y2 += y[static_cast<std::size_t>(d)] * y[static_cast<std::size_t>(d)];
      }
      const double base = t.coef * std::pow(t.beta, -n_dim) * bump(y2, n_dim);
      vals[0] += base;
      for (int d = 0; d < n_dim; ++d)
        vals[static_cast<std::size_t>(d) + 1] +=
            base / t.beta * (-2.0 * std::numbers::pi * std::numbers::pi * y[static_cast<std::size_t>(d)] / kBumpAlpha);
    }
    const double weight = std::pow(1.0 + std::sqrt(r2), m);
    for (int d = 0; d <= n_dim; ++d) best = std::max(best, std::fabs(vals[static_cast<std::size_t>(d)]) * weight);
  }
  return best;
}

}  // namespace detail

/// Finite family of mean-zero test functions used in place of the full grand class.
struct Dictionary {
  int n_dim = 1;
  double m = 3.0;
  std::vector<Atom> atoms;
};

/// Dilation differences of the bump (ratios 2 and sqrt 2) and first differences of the bump
/// along each axis, each normalized in S_{1,m} with m = n + 2.
inline Dictionary default_dictionary(int n_dim) {
  if (n_dim < 1 || n_dim > 3) throw ConfigError("dictionary dimension must be 1, 2 or 3");
  Dictionary dict;
  dict.n_dim = n_dim;
  dict.m = n_dim + 2.0;
  dict.atoms.push_back({"dilation_2", {{1.0, 1.0, {}}, {-1.0, 2.0, {}}}, 1.0});
  dict.atoms.push_back({"dilation_sqrt2", {{1.0, 1.0, {}}, {-1.0, std::sqrt(2.0), {}}}, 1.0});
  for (int d = 0; d < n_dim; ++d) {
    AtomTerm shifted{-1.0, 1.0, {}};
    shifted.shift[static_cast<std::size_t>(d)] = 1.0;
    dict.atoms.push_back({"difference_" + std::to_string(d), {{1.0, 1.0, {}}, shifted}, 1.0});
  }
  for (auto& atom : dict.atoms) atom.scale = 1.0 / detail::s1m_seminorm(atom, n_dim, dict.m);
  return dict;
}

/// Periodized phi_{2^{-k}} * u on a grid, via the Fourier multiplier phi^(2^{-k} xi).
inline std::vector<double> atom_convolution(const GridFFT& fft, const std::vector<cplx>& u_hat, const Atom& atom,
                                            int k) {
  std::vector<cplx> a(u_hat.size());
  const double t = dyadic(k);
  double xi[3] = {0, 0, 0};
  for (std::size_t i = 0; i < a.size(); ++i) {
    fft.frequency(i, xi);
    for (int d = 0; d < fft.n_dim(); ++d) xi[d] *= t;
    a[i] = u_hat[i] * atom.fourier(xi, fft.n_dim());
  }
  return fft.inverse_real(std::move(a));
}

/// g_k(x) = 2^{ks} max over atoms |phi_{2^{-k}} * u(x)| for k in `window` (default: the space window).
inline GradientSequence grand_maximal_gradient(const MetricMeasureSpace& space, std::span<const double> u, double s,
                                               const Dictionary& dict, std::optional<ScaleWindow> window = {}) {
  if (!space.is_grid()) throw DomainError("grand maximal gradient needs a periodic grid");
  if (dict.atoms.empty()) throw ConfigError("dictionary is empty");
  if (dict.n_dim != space.grid()->n_dim) throw ConfigError("dictionary dimension does not match grid");
  const ScaleWindow w = window.value_or(space.window());
  GradientSequence g(w, space.size());
  const GridFFT fft(*space.grid());
  const auto u_hat = fft.forward(u);
  for (int k = w.k_min; k <= w.k_max; ++k) {
    auto gk = g.scale(k);
    const double weight = std::exp2(k * s);
    for (const auto& atom : dict.atoms) {
      const auto conv = atom_convolution(fft, u_hat, atom, k);
      for (std::size_t x = 0; x < conv.size(); ++x) gk[x] = std::max(gk[x], weight * std::fabs(conv[x]));
    }
  }
  return g;
}

}  // namespace hajnorm
