#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "hajnorm/error.hpp"
#include "hajnorm/gradients.hpp"
#include "hajnorm/norms.hpp"
#include "hajnorm/space.hpp"
#include "hajnorm/util.hpp"

namespace hajnorm {

struct PairConstraint {
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  int k = 0;
  double c = 0.0;  // |u(x) - u(y)| / d(x, y)^s
};

/// min ||g|| subject to g_k(x) + g_k(y) >= c_xy for every pair, k = scale of the pair.
struct HajlaszProgram {
  std::size_t points = 0;
  std::vector<double> measure;
  std::vector<PairConstraint> constraints;
  double s = 1.0;
  double p = 2.0;
  double q = 2.0;
  AggregationMode mode = AggregationMode::Lp_lq;
  /// All pairs share one gradient (the Sobolev-type program); constraints carry k = 0.
  bool single_gradient = false;

  /// Scales carrying at least one constraint with c > 0, ascending.
  std::vector<int> active_scales() const {
    std::vector<int> ks;
    for (const auto& e : constraints)
      if (e.c > 0.0) ks.push_back(e.k);
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    return ks;
  }

  ScaleWindow window() const {
    const auto ks = active_scales();
    if (ks.empty()) return {0, -1};
    return {ks.front(), ks.back()};
  }
};

inline HajlaszProgram build_program(const MetricMeasureSpace& space, std::span<const double> u, double s, double p,
                                    double q, AggregationMode mode) {
  if (space.size() == 0) throw ConfigError("program needs at least one point");
  if (u.size() != space.size()) throw ValidationError("field size does not match space");
  HajlaszProgram prog;
  prog.points = space.size();
  prog.measure.assign(space.measures().begin(), space.measures().end());
  prog.s = s;
  prog.p = p;
  prog.q = q;
  prog.mode = mode;
  for (std::size_t x = 0; x < space.size(); ++x)
    for (std::size_t y = x + 1; y < space.size(); ++y) {
      const double d = space.dist(x, y);
      prog.constraints.push_back({static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y), scale_of_distance(d),
                                  std::fabs(u[x] - u[y]) / std::pow(d, s)});
    }
  std::stable_sort(prog.constraints.begin(), prog.constraints.end(),
                   [](const PairConstraint& a, const PairConstraint& b) { return a.k < b.k; });
  return prog;
}

/// One shared gradient g(x) for all scales; objective ||g||_{L^p}.
inline HajlaszProgram build_sobolev_program(const MetricMeasureSpace& space, std::span<const double> u, double s,
                                            double p) {
  HajlaszProgram prog = build_program(space, u, s, p, kInf, AggregationMode::Lp_lq);
  prog.single_gradient = true;
  for (auto& e : prog.constraints) e.k = 0;
  return prog;
}

struct SolverConfig {
  std::size_t max_iters = 0;  // 0: method default
  double tol = 1e-9;          // relative duality-gap target of the interior-point method
  /// Largest coupled block solved by the interior-point method; larger programs use PDHG.
  std::size_t newton_max_block = 1500;
  bool force_first_order = false;
  std::size_t pdhg_max_iters = 4000;
  std::size_t pdhg_window = 500;
  double pdhg_rel_improvement = 1e-4;
  /// Exponent standing in for an infinite outer exponent in the first-order method.
  double pdhg_surrogate_exponent = 32.0;
};

struct OptimizationResult {
  double upper_bound = 0.0;
  GradientSequence gradient;
  std::optional<double> oracle_gap;
  std::size_t iterations = 0;
  double tolerance = 0.0;
  bool converged = false;
  bool heuristic = false;
  bool repair_fallback = false;
  std::string method;
};

// --- evaluation and repair ------------------------------------------------------

/// Objective of the program at a gradient laid out on the program window.
inline double program_objective(const HajlaszProgram& prog, const GradientSequence& g) {
  const ScaleWindow w = g.window();
  const std::size_t n = prog.points;
  if (w.count() == 0) return 0.0;
  if (prog.single_gradient) return weighted_norm(g.scale(w.k_min), prog.measure, prog.p);
  if (prog.mode == AggregationMode::Lp_lq) {
    std::vector<double> pointwise(n), column(static_cast<std::size_t>(w.count()));
    for (std::size_t x = 0; x < n; ++x) {
      for (int k = w.k_min; k <= w.k_max; ++k) column[static_cast<std::size_t>(k - w.k_min)] = g(k, x);
      pointwise[x] = weighted_norm(column, {}, prog.q);
    }
    return weighted_norm(pointwise, prog.measure, prog.p);
  }
  std::vector<double> per_scale(static_cast<std::size_t>(w.count()));
  for (int k = w.k_min; k <= w.k_max; ++k)
    per_scale[static_cast<std::size_t>(k - w.k_min)] = weighted_norm(g.scale(k), prog.measure, prog.p);
  return weighted_norm(per_scale, {}, prog.q);
}

/// max over constraints of c / (g_k(x) + g_k(y)); inf when a positive c meets a zero sum.
inline double program_rho(const HajlaszProgram& prog, const GradientSequence& g) {
  double rho = 0.0;
  for (const auto& e : prog.constraints) {
    if (!(e.c > 0.0)) continue;
    const double avail = g(e.k, e.x) + g(e.k, e.y);
    rho = std::max(rho, avail > 0.0 ? e.c / avail : kInf);
  }
  return rho;
}

struct RepairResult {
  GradientSequence grad;
  double rho = 0.0;
  bool fallback = false;
};

/// Scales g by rho when rho > 1 (or by any finite positive rho when `tighten`). With rho = inf the
/// gradient is replaced by the constant c_max(k) / 2 on every active scale and flagged.
inline RepairResult repair(const HajlaszProgram& prog, GradientSequence g, bool tighten = false) {
  RepairResult out;
  out.rho = program_rho(prog, g);
  if (std::isinf(out.rho)) {
    const ScaleWindow w = prog.window();
    GradientSequence h(w, prog.points);
    std::map<int, double> cmax;
    for (const auto& e : prog.constraints) cmax[e.k] = std::max(cmax[e.k], e.c);
    for (const auto& [k, c] : cmax)
      if (w.contains(k))
        for (double& v : h.scale(k)) v = 0.5 * c;
    out.grad = std::move(h);
    out.fallback = true;
    return out;
  }
  if (out.rho > 1.0 || (tighten && out.rho > 0.0)) g *= out.rho;
  out.grad = std::move(g);
  return out;
}

/// Public repair for the base class of a field on a space.
inline RepairResult feasibility_repair(const MetricMeasureSpace& space, std::span<const double> u, double s,
                                       const GradientSequence& grad) {
  const HajlaszProgram prog = build_program(space, u, s, 1.0, 1.0, AggregationMode::Lp_lq);
  return repair(prog, grad);
}

namespace detail {

// --- variable layout ------------------------------------------------------------------

struct Layout {
  std::vector<int> scales;              // active scales
  std::vector<std::int64_t> var_of;     // (scale index * n + x) -> variable id or -1
  std::vector<std::size_t> var_scale;   // variable -> scale index
  std::vector<std::size_t> var_point;   // variable -> point
  std::vector<double> var_cmax;         // largest c touching the variable
  std::vector<std::uint32_t> ea, eb;    // positive constraints as variable pairs
  std::vector<double> ec;
  double c_scale = 1.0;

  std::size_t vars() const { return var_scale.size(); }
};

inline Layout make_layout(const HajlaszProgram& prog) {
  Layout L;
  L.scales = prog.active_scales();
  const std::size_t n = prog.points;
  L.var_of.assign(L.scales.size() * n, -1);
  std::map<int, std::size_t> scale_index;
  for (std::size_t i = 0; i < L.scales.size(); ++i) scale_index[L.scales[i]] = i;
  double cmax = 0.0;
  for (const auto& e : prog.constraints) cmax = std::max(cmax, e.c);
  L.c_scale = cmax > 0.0 ? cmax : 1.0;
  auto var = [&](std::size_t si, std::size_t x) {
    auto& slot = L.var_of[si * n + x];
    if (slot < 0) {
      slot = static_cast<std::int64_t>(L.var_scale.size());
      L.var_scale.push_back(si);
      L.var_point.push_back(x);
      L.var_cmax.push_back(0.0);
    }
    return static_cast<std::uint32_t>(slot);
  };
  for (const auto& e : prog.constraints) {
    if (!(e.c > 0.0)) continue;
    const std::size_t si = scale_index[e.k];
    const auto a = var(si, e.x), b = var(si, e.y);
    const double c = e.c / L.c_scale;
    L.ea.push_back(a);
    L.eb.push_back(b);
    L.ec.push_back(c);
    L.var_cmax[a] = std::max(L.var_cmax[a], c);
    L.var_cmax[b] = std::max(L.var_cmax[b], c);
  }
  return L;
}

struct ObjGroup {
  double W = 1.0;
  std::vector<std::uint32_t> members;
  std::vector<double> w;
};

/// Outer groups with outer exponent a and inner exponent b over the layout variables.
inline std::vector<ObjGroup> make_groups(const HajlaszProgram& prog, const Layout& L, double& a, double& b) {
  std::vector<ObjGroup> groups;
  if (prog.single_gradient || prog.mode == AggregationMode::Lp_lq) {
    a = prog.p;
    b = prog.single_gradient ? 1.0 : prog.q;
    groups.resize(prog.points);
    for (std::size_t x = 0; x < prog.points; ++x) groups[x].W = prog.measure[x];
    for (std::uint32_t v = 0; v < L.vars(); ++v) {
      groups[L.var_point[v]].members.push_back(v);
      groups[L.var_point[v]].w.push_back(1.0);
    }
  } else {
    a = prog.q;
    b = prog.p;
    groups.resize(L.scales.size());
    for (std::uint32_t v = 0; v < L.vars(); ++v) {
      groups[L.var_scale[v]].members.push_back(v);
      groups[L.var_scale[v]].w.push_back(prog.measure[L.var_point[v]]);
    }
  }
  groups.erase(std::remove_if(groups.begin(), groups.end(), [](const ObjGroup& g) { return g.members.empty(); }),
               groups.end());
  return groups;
}

struct UnionFind {
  std::vector<std::uint32_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0u); }
  std::uint32_t find(std::uint32_t v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  }
  void unite(std::uint32_t a, std::uint32_t b) { parent[find(a)] = find(b); }
};

// --- dense log-barrier block ---------------------------------------------------------

struct Slack {
  int i = -1, j = -1;
  double ci = 0.0, cj = 0.0, c = 0.0;  // ci z_i + cj z_j - c > 0

  double value(const Eigen::VectorXd& z) const { return ci * z[i] + (j >= 0 ? cj * z[j] : 0.0) - c; }
  double dir(const Eigen::VectorXd& d) const { return ci * d[i] + (j >= 0 ? cj * d[j] : 0.0); }
};

struct LocalGroup {
  double W = 1.0;
  std::vector<int> idx;
  std::vector<double> w;
  int epi = -1;  // epigraph variable (inner exponent inf)
};

enum class ObjKind { power, epi_power, linear };

struct BarrierBlock {
  int n = 0;
  std::vector<Slack> slacks;
  std::vector<LocalGroup> groups;
  double a = 2.0, b = 2.0;
  ObjKind obj = ObjKind::power;
  int t_var = -1;
  bool norm_barrier = false;  // T - R_i(v) > 0 for every group

  double objective(const Eigen::VectorXd& z) const {
    switch (obj) {
      case ObjKind::power: {
        double F = 0.0;
        for (const auto& g : groups) {
          double S = 0.0;
          for (std::size_t m = 0; m < g.idx.size(); ++m) S += g.w[m] * abs_pow(z[g.idx[m]], b);
          F += g.W * std::pow(S, a / b);
        }
        return F;
      }
      case ObjKind::epi_power: {
        double F = 0.0;
        for (const auto& g : groups) F += g.W * abs_pow(z[g.epi], a);
        return F;
      }
      case ObjKind::linear: return z[t_var];
    }
    return 0.0;
  }

  double group_norm(const LocalGroup& g, const Eigen::VectorXd& z) const {
    double S = 0.0;
    for (std::size_t m = 0; m < g.idx.size(); ++m) S += g.w[m] * abs_pow(z[g.idx[m]], b);
    return std::pow(S, 1.0 / b);
  }

  std::size_t barrier_terms() const { return slacks.size() + (norm_barrier ? groups.size() : 0); }

  double merit(const Eigen::VectorXd& z, double t) const {
    double f = t * objective(z);
    for (const auto& sl : slacks) {
      const double v = sl.value(z);
      if (!(v > 0.0)) return kInf;
      f -= std::log(v);
    }
    if (norm_barrier)
      for (const auto& g : groups) {
        const double v = z[t_var] - group_norm(g, z);
        if (!(v > 0.0)) return kInf;
        f -= std::log(v);
      }
    return f;
  }

  // Adds W a S^{a/b-1} w v^{b-1} (gradient) and the matching Hessian of W S^{a/b} through add(i, j, v).
  template <class Add>
  void add_power(const LocalGroup& g, double W, double aa, const Eigen::VectorXd& z, Eigen::VectorXd& grad,
                 Add&& add) const {
    double S = 0.0;
    const std::size_t m = g.idx.size();
    std::vector<double> u(m);
    for (std::size_t t = 0; t < m; ++t) {
      const double v = z[g.idx[t]];
      S += g.w[t] * abs_pow(v, b);
      u[t] = g.w[t] * abs_pow(v, b - 1.0);
    }
    const double c1 = W * aa * std::pow(S, aa / b - 1.0);
    const double c2 = W * aa * (aa / b - 1.0) * std::pow(S, aa / b - 2.0) * b;
    for (std::size_t t = 0; t < m; ++t) {
      const int i = g.idx[t];
      grad[i] += c1 * u[t];
      add(i, i, c1 * (b - 1.0) * g.w[t] * abs_pow(z[i], b - 2.0));
      if (c2 != 0.0)
        for (std::size_t r = 0; r < m; ++r) add(i, g.idx[r], c2 * u[t] * u[r]);
    }
  }

  void add_power(const LocalGroup& g, double W, double aa, const Eigen::VectorXd& z, Eigen::VectorXd& grad,
                 Eigen::MatrixXd& H) const {
    add_power(g, W, aa, z, grad, [&](int i, int j, double v) { H(i, j) += v; });
  }

  // Gradient and Hessian of t * objective; the Hessian goes through add(i, j, v).
  template <class Add>
  void objective_derivatives(const Eigen::VectorXd& z, double t, Eigen::VectorXd& grad, Add&& add) const {
    switch (obj) {
      case ObjKind::power:
        for (const auto& g : groups) add_power(g, t * g.W, a, z, grad, add);
        break;
      case ObjKind::epi_power:
        for (const auto& g : groups) {
          const double r = z[g.epi];
          grad[g.epi] += t * g.W * a * abs_pow(r, a - 1.0);
          add(g.epi, g.epi, t * g.W * a * (a - 1.0) * abs_pow(r, a - 2.0));
        }
        break;
      case ObjKind::linear: grad[t_var] += t; break;
    }
  }

  /// Upper bound on the Hessian nonzeros of objective plus linear constraints.
  std::size_t hessian_nnz_bound() const {
    std::size_t nnz = static_cast<std::size_t>(n);
    for (const auto& sl : slacks) nnz += sl.j >= 0 ? 2 : 0;
    if (obj == ObjKind::power && a != b)
      for (const auto& g : groups) nnz += g.idx.size() * g.idx.size();
    return nnz;
  }

  void derivatives(const Eigen::VectorXd& z, double t, Eigen::VectorXd& grad, Eigen::MatrixXd& H) const {
    grad.setZero(n);
    H.setZero(n, n);
    objective_derivatives(z, t, grad, [&](int i, int j, double v) { H(i, j) += v; });
    for (const auto& sl : slacks) {
      const double v = sl.value(z);
      const double inv = 1.0 / v, inv2 = inv * inv;
      grad[sl.i] -= sl.ci * inv;
      H(sl.i, sl.i) += sl.ci * sl.ci * inv2;
      if (sl.j >= 0) {
        grad[sl.j] -= sl.cj * inv;
        H(sl.j, sl.j) += sl.cj * sl.cj * inv2;
        H(sl.i, sl.j) += sl.ci * sl.cj * inv2;
        H(sl.j, sl.i) += sl.ci * sl.cj * inv2;
      }
    }
    if (norm_barrier) {
      Eigen::VectorXd gr(n);
      Eigen::MatrixXd hr(n, n);
      for (const auto& g : groups) {
        // phi = T - R; -log phi has gradient -(e_T - dR)/phi and Hessian (e_T - dR)(e_T - dR)^T/phi^2 + d2R/phi
        gr.setZero();
        hr.setZero();
        add_power(g, 1.0, 1.0, z, gr, hr);
        const double phi = z[t_var] - group_norm(g, z);
        Eigen::VectorXd dphi = -gr;
        dphi[t_var] += 1.0;
        grad -= dphi / phi;
        H.noalias() += dphi * dphi.transpose() / (phi * phi);
        H += hr / phi;
      }
    }
  }
};

struct BlockOutcome {
  std::size_t newton_steps = 0;
  bool converged = false;
};

inline BlockOutcome solve_barrier(const BarrierBlock& blk, Eigen::VectorXd& z, double tol, std::size_t max_steps) {
  BlockOutcome out;
  const double m = static_cast<double>(std::max<std::size_t>(blk.barrier_terms(), 1));
  double t = m / std::max(blk.objective(z), 1e-12);
  Eigen::VectorXd grad(blk.n), dz(blk.n);
  Eigen::MatrixXd H(blk.n, blk.n);
  while (out.newton_steps < max_steps) {
    // centering
    for (int inner = 0; inner < 50 && out.newton_steps < max_steps; ++inner) {
      blk.derivatives(z, t, grad, H);
      Eigen::LLT<Eigen::MatrixXd> llt(H);
      if (llt.info() == Eigen::Success) {
        dz = llt.solve(-grad);
      } else {
        const double shift = 1e-12 * (1.0 + H.diagonal().cwiseAbs().maxCoeff());
        H.diagonal().array() += shift;
        dz = H.ldlt().solve(-grad);
      }
      ++out.newton_steps;
      const double decrement = -grad.dot(dz);
      if (!(decrement > 1e-9)) break;
      double step = 1.0;
      for (const auto& sl : blk.slacks) {
        const double ds = sl.dir(dz);
        if (ds < 0.0) step = std::min(step, -0.99 * sl.value(z) / ds);
      }
      const double f0 = blk.merit(z, t);
      double f1 = blk.merit(z + step * dz, t);
      int back = 0;
      while (!(f1 <= f0 - 0.25 * step * decrement) && back < 60) {
        step *= 0.5;
        f1 = blk.merit(z + step * dz, t);
        ++back;
      }
      if (!(f1 < kInf) || back >= 60) break;
      z += step * dz;
      if (decrement < 1e-7) break;
    }
    const double F = blk.objective(z);
    if (m / t <= tol * F) {
      out.converged = true;
      break;
    }
    t *= 20.0;
  }
  return out;
}

// --- primal-dual interior point (linear constraints only) ------------------------------

/// Mehrotra predictor-corrector on min f(z) s.t. slack rows >= 0. Falls back to the barrier
/// schedule when the iteration stalls. The normal matrix is factored sparse when it is sparse.
inline BlockOutcome solve_primal_dual(const BarrierBlock& blk, Eigen::VectorXd& z, double tol,
                                      std::size_t max_steps) {
  BlockOutcome out;
  const std::size_t m = blk.slacks.size();
  const int n = blk.n;
  const bool sparse = n > 200 && static_cast<double>(blk.hessian_nnz_bound()) < 0.1 * n * static_cast<double>(n);
  Eigen::VectorXd s(m), lam(m), grad(n), rhs(n), dz(n), ds(m), dl(m), ds_aff(m), dl_aff(m);
  for (std::size_t r = 0; r < m; ++r) s[r] = blk.slacks[r].value(z);
  {
    const double F = std::max(blk.objective(z), 1e-12);
    lam.setConstant(F / static_cast<double>(std::max<std::size_t>(m, 1)));
  }
  Eigen::MatrixXd H;
  Eigen::SparseMatrix<double> Hs;
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::LLT<Eigen::MatrixXd> dense_llt;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> sparse_ldlt;
  bool analyzed = false;
  auto atv = [&](const Eigen::VectorXd& w, Eigen::VectorXd& acc) {
    for (std::size_t r = 0; r < m; ++r) {
      const auto& sl = blk.slacks[r];
      acc[sl.i] += sl.ci * w[static_cast<Eigen::Index>(r)];
      if (sl.j >= 0) acc[sl.j] += sl.cj * w[static_cast<Eigen::Index>(r)];
    }
  };
  auto max_step = [](const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
    double a = 1.0;
    for (Eigen::Index r = 0; r < v.size(); ++r)
      if (dv[r] < 0.0) a = std::min(a, -v[r] / dv[r]);
    return a;
  };
  double best_res = kInf;
  std::size_t stalled = 0;
  while (out.newton_steps < max_steps) {
    const double F = blk.objective(z);
    const double mu = s.dot(lam) / static_cast<double>(std::max<std::size_t>(m, 1));
    grad.setZero(n);
    auto add_dense = [&](int i, int j, double v) { H(i, j) += v; };
    auto add_sparse = [&](int i, int j, double v) { trip.emplace_back(i, j, v); };
    if (sparse) {
      trip.clear();
      blk.objective_derivatives(z, 1.0, grad, add_sparse);
    } else {
      H.setZero(n, n);
      blk.objective_derivatives(z, 1.0, grad, add_dense);
    }
    Eigen::VectorXd rd = grad;
    {
      Eigen::VectorXd at_lam = Eigen::VectorXd::Zero(n);
      atv(lam, at_lam);
      rd -= at_lam;
    }
    const double scale = 1.0 + grad.cwiseAbs().maxCoeff();
    const double res = rd.cwiseAbs().maxCoeff() / scale;
    if (s.dot(lam) <= tol * std::max(F, 1e-300) && res <= 1e-9) {
      out.converged = true;
      break;
    }
    if (s.dot(lam) + res < 0.5 * best_res) {
      best_res = s.dot(lam) + res;
      stalled = 0;
    } else if (++stalled > 40) {
      break;
    }
    for (std::size_t r = 0; r < m; ++r) {
      const auto& sl = blk.slacks[r];
      const double d = lam[static_cast<Eigen::Index>(r)] / s[static_cast<Eigen::Index>(r)];
      if (sparse) {
        trip.emplace_back(sl.i, sl.i, sl.ci * sl.ci * d);
        if (sl.j >= 0) {
          trip.emplace_back(sl.j, sl.j, sl.cj * sl.cj * d);
          trip.emplace_back(sl.i, sl.j, sl.ci * sl.cj * d);
          trip.emplace_back(sl.j, sl.i, sl.ci * sl.cj * d);
        }
      } else {
        H(sl.i, sl.i) += sl.ci * sl.ci * d;
        if (sl.j >= 0) {
          H(sl.j, sl.j) += sl.cj * sl.cj * d;
          H(sl.i, sl.j) += sl.ci * sl.cj * d;
          H(sl.j, sl.i) += sl.ci * sl.cj * d;
        }
      }
    }
    bool ok = false;
    if (sparse) {
      for (int i = 0; i < n; ++i) trip.emplace_back(i, i, 1e-14 * scale);
      Hs.resize(n, n);
      Hs.setFromTriplets(trip.begin(), trip.end());
      if (!analyzed) {
        sparse_ldlt.analyzePattern(Hs);
        analyzed = true;
      }
      sparse_ldlt.factorize(Hs);
      ok = sparse_ldlt.info() == Eigen::Success;
    } else {
      H.diagonal().array() += 1e-14 * scale;
      dense_llt.compute(H);
      ok = dense_llt.info() == Eigen::Success;
    }
    if (!ok) break;
    ++out.newton_steps;
    // H dz = -rd + A^T (rc / s), dlam = (rc - lam * A dz) / s
    auto direction = [&](const Eigen::VectorXd& rc, Eigen::VectorXd& dzo, Eigen::VectorXd& dso, Eigen::VectorXd& dlo) {
      rhs = -rd;
      atv(rc.cwiseQuotient(s), rhs);
      dzo = sparse ? Eigen::VectorXd(sparse_ldlt.solve(rhs)) : Eigen::VectorXd(dense_llt.solve(rhs));
      for (std::size_t r = 0; r < m; ++r) dso[static_cast<Eigen::Index>(r)] = blk.slacks[r].dir(dzo);
      dlo = (rc - lam.cwiseProduct(dso)).cwiseQuotient(s);
    };
    Eigen::VectorXd rc = -s.cwiseProduct(lam);
    direction(rc, dz, ds_aff, dl_aff);
    const double a_aff = std::min(max_step(s, ds_aff), max_step(lam, dl_aff));
    const double mu_aff = (s + a_aff * ds_aff).dot(lam + a_aff * dl_aff) / static_cast<double>(m);
    const double sigma = std::pow(mu_aff / mu, 3.0);
    rc.array() += sigma * mu - (ds_aff.cwiseProduct(dl_aff)).array();
    direction(rc, dz, ds, dl);
    const double alpha = std::min(1.0, 0.99 * std::min(max_step(s, ds), max_step(lam, dl)));
    if (!(alpha > 1e-12)) break;
    z += alpha * dz;
    lam += alpha * dl;
    // recompute slacks from z so they stay consistent with the primal point
    for (std::size_t r = 0; r < m; ++r) s[static_cast<Eigen::Index>(r)] = blk.slacks[r].value(z);
    if (!(s.minCoeff() > 0.0)) {
      z -= alpha * dz;
      lam -= alpha * dl;
      for (std::size_t r = 0; r < m; ++r) s[static_cast<Eigen::Index>(r)] = blk.slacks[r].value(z);
      break;
    }
  }
  return out;
}

// --- first-order method (diagonally preconditioned primal-dual) -------------------------

/// argmin_{v >= 0} (v - w)^2 / (2 tau) + c v^a for a >= 1.
inline double scalar_power_prox(double w, double tau, double c, double a) {
  if (w <= 0.0) return 0.0;
  if (a == 1.0) return std::max(w - tau * c, 0.0);
  if (a == 2.0) return w / (1.0 + 2.0 * tau * c);
  // safeguarded Newton on the increasing function (v - w)/tau + c a v^{a-1} over [0, w]
  double lo = 0.0, hi = w, v = w;
  for (int it = 0; it < 100; ++it) {
    const double pw = abs_pow(v, a - 2.0);
    const double fv = (v - w) / tau + c * a * pw * v;
    if (fv > 0.0) hi = v; else lo = v;
    const double df = 1.0 / tau + c * a * (a - 1.0) * pw;
    double next = v - fv / df;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::fabs(next - v) <= 1e-15 * w || hi - lo <= 1e-15 * w) return next;
    v = next;
  }
  return v;
}

struct FirstOrderOutcome {
  std::vector<double> best;
  double best_value = kInf;
  std::size_t iterations = 0;
  bool converged = false;
};

inline FirstOrderOutcome solve_first_order(const Layout& L, const std::vector<ObjGroup>& groups, double a, double b,
                                           const SolverConfig& cfg,
                                           const std::function<double(const std::vector<double>&)>& evaluate) {
  const std::size_t nv = L.vars();
  const std::size_t ne = L.ec.size();
  std::vector<double> deg(nv, 0.0);
  for (std::size_t e = 0; e < ne; ++e) {
    deg[L.ea[e]] += 1.0;
    deg[L.eb[e]] += 1.0;
  }
  std::vector<double> g(nv), gbar(nv), w(nv), aty(nv), y(ne, 0.0), rep(nv);
  for (std::size_t v = 0; v < nv; ++v) g[v] = 0.55 * L.var_cmax[v];
  const double aa = is_inf(a) ? cfg.pdhg_surrogate_exponent : a;

  // Primal/dual balance: the objective is homogeneous of degree aa, so its mean partial
  // derivative at g is about aa F(g) / sum g. Constraint data are O(1) after scaling.
  double f0 = 0.0, gsum = 0.0;
  for (const auto& grp : groups) {
    double inner = 0.0;
    for (std::size_t t = 0; t < grp.members.size(); ++t) {
      const double gv = g[grp.members[t]];
      inner = is_inf(b) ? std::max(inner, gv) : inner + grp.w[t] * abs_pow(gv, b);
    }
    f0 += grp.W * std::pow(is_inf(b) ? inner : std::pow(inner, 1.0 / b), aa);
  }
  for (double v : g) gsum += v;
  const double omega = (f0 > 0.0 && gsum > 0.0) ? gsum / (aa * f0) : 1.0;
  const double sigma = 0.5 / omega;
  std::vector<double> tau(nv);
  for (std::size_t v = 0; v < nv; ++v) tau[v] = omega / std::max(deg[v], 1.0);

  std::vector<double> lambda_prev(groups.size(), 1.0);
  auto prox = [&](const std::vector<double>& in, std::vector<double>& outv) {
    for (const auto& grp : groups) {
      const std::size_t m = grp.members.size();
      if (is_inf(b)) {
        // g_j = min(w_j, r), r solving W a r^{a-1} = sum_{w_j > r} (w_j - r) / tau_j
        double hi = 0.0;
        for (auto v : grp.members) hi = std::max(hi, in[v]);
        double lo = 0.0, r = 0.0;
        if (hi > 0.0) {
          for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            double excess = 0.0;
            for (auto v : grp.members)
              if (in[v] > mid) excess += (in[v] - mid) / tau[v];
            (grp.W * aa * abs_pow(mid, aa - 1.0) > excess ? hi : lo) = mid;
          }
          r = 0.5 * (lo + hi);
        }
        for (auto v : grp.members) outv[v] = std::clamp(in[v], 0.0, r);
      } else if (aa == b) {
        for (std::size_t t = 0; t < m; ++t) {
          const auto v = grp.members[t];
          outv[v] = scalar_power_prox(in[v], tau[v], grp.W * grp.w[t], b);
        }
      } else {
        // g_j solves (g - w_j)/tau_j + lambda w_j g^{b-1} = 0 with lambda = W a S^{a/b-1}
        auto fill = [&](double lambda) {
          double S = 0.0;
          for (std::size_t t = 0; t < m; ++t) {
            const auto v = grp.members[t];
            outv[v] = scalar_power_prox(in[v], tau[v], lambda * grp.w[t] / b, b);
            S += grp.w[t] * abs_pow(outv[v], b);
          }
          return S;
        };
        auto resid = [&](double lambda) {
          const double S = fill(lambda);
          return S > 0.0 ? lambda - grp.W * aa * std::pow(S, aa / b - 1.0) : lambda;
        };
        // resid is increasing in lambda; bracket around the previous root, then bisect in log scale
        double& guess = lambda_prev[&grp - groups.data()];
        double lo = guess, hi = guess;
        while (resid(lo) > 0.0 && lo > 1e-300) lo *= 0.25;
        while (resid(hi) < 0.0 && hi < 1e300) hi *= 4.0;
        for (int it = 0; it < 60 && hi > lo * (1.0 + 1e-12); ++it) {
          const double mid = std::sqrt(lo * hi);
          (resid(mid) > 0.0 ? hi : lo) = mid;
        }
        guess = hi;
        fill(hi);
      }
    }
  };

  // Feasible point near `cur`: raise both ends of every violated constraint by half the deficit
  // (one pass suffices since values only grow), then shrink uniformly while feasible.
  std::vector<double> local(nv);
  auto repaired = [&](const std::vector<double>& cur) {
    for (std::size_t v = 0; v < nv; ++v) local[v] = std::max(cur[v], 0.0);
    for (std::size_t e = 0; e < ne; ++e) {
      const double deficit = L.ec[e] - local[L.ea[e]] - local[L.eb[e]];
      if (deficit > 0.0) {
        local[L.ea[e]] += 0.5 * deficit;
        local[L.eb[e]] += 0.5 * deficit;
      }
    }
    double rho = 0.0;
    for (std::size_t e = 0; e < ne; ++e) rho = std::max(rho, L.ec[e] / (local[L.ea[e]] + local[L.eb[e]]));
    for (std::size_t v = 0; v < nv; ++v) rep[v] = rho * local[v];
    return evaluate(rep);
  };

  FirstOrderOutcome out;
  out.best = g;
  out.best_value = repaired(g);
  out.best = rep;
  double window_start_value = out.best_value;
  std::size_t window_start = 0;
  const std::size_t check_every = 25;
  const std::size_t max_iters = cfg.max_iters ? cfg.max_iters : cfg.pdhg_max_iters;
  for (std::size_t it = 1; it <= max_iters; ++it) {
    std::fill(aty.begin(), aty.end(), 0.0);
    for (std::size_t e = 0; e < ne; ++e) {
      aty[L.ea[e]] += y[e];
      aty[L.eb[e]] += y[e];
    }
    for (std::size_t v = 0; v < nv; ++v) w[v] = g[v] + tau[v] * aty[v];
    prox(w, gbar);  // gbar holds the new iterate for now
    for (std::size_t v = 0; v < nv; ++v) {
      const double next = gbar[v];
      gbar[v] = 2.0 * next - g[v];
      g[v] = next;
    }
    for (std::size_t e = 0; e < ne; ++e) y[e] = std::max(0.0, y[e] + sigma * (L.ec[e] - gbar[L.ea[e]] - gbar[L.eb[e]]));
    out.iterations = it;
    if (it % check_every == 0) {
      const double val = repaired(g);
      if (val < out.best_value) {
        out.best_value = val;
        out.best = rep;
      }
      if (it - window_start >= cfg.pdhg_window) {
        if (out.best_value > window_start_value * (1.0 - cfg.pdhg_rel_improvement)) {
          out.converged = true;
          break;
        }
        window_start = it;
        window_start_value = out.best_value;
      }
    }
  }
  return out;
}

}  // namespace detail

/// Minimizes the program objective; the returned gradient is feasible (rho <= 1) and
/// upper_bound is its exact objective.
inline OptimizationResult solve(const HajlaszProgram& prog, const SolverConfig& cfg = {}) {
  OptimizationResult res;
  res.tolerance = cfg.tol;
  res.heuristic = prog.p < 1.0 || prog.q < 1.0;
  const detail::Layout L = detail::make_layout(prog);
  const ScaleWindow win = L.scales.empty() ? ScaleWindow{0, -1} : ScaleWindow{L.scales.front(), L.scales.back()};
  auto to_gradient = [&](const std::vector<double>& vals) {
    GradientSequence g(win, prog.points);
    for (std::size_t v = 0; v < L.vars(); ++v)
      g.at(L.scales[L.var_scale[v]], L.var_point[v]) = L.c_scale * std::max(vals[v], 0.0);
    return g;
  };
  if (L.vars() == 0) {
    res.gradient = GradientSequence(win, prog.points);
    res.converged = true;
    res.method = "trivial";
    return res;
  }
  HajlaszProgram relaxed = prog;
  relaxed.p = std::max(prog.p, 1.0);
  relaxed.q = std::max(prog.q, 1.0);
  double a = 0.0, b = 0.0;
  const auto groups = detail::make_groups(relaxed, L, a, b);

  // coupling structure
  const bool separable = !is_inf(a) && !is_inf(b) && a == b;
  detail::UnionFind uf(L.vars());
  for (std::size_t e = 0; e < L.ec.size(); ++e) uf.unite(L.ea[e], L.eb[e]);
  if (is_inf(a)) {
    for (std::uint32_t v = 1; v < L.vars(); ++v) uf.unite(0, v);
  } else if (!separable) {
    for (const auto& g : groups)
      for (auto v : g.members) uf.unite(g.members.front(), v);
  }
  std::map<std::uint32_t, std::vector<std::uint32_t>> blocks;
  for (std::uint32_t v = 0; v < L.vars(); ++v) blocks[uf.find(v)].push_back(v);
  std::size_t largest = 0;
  for (const auto& [root_id, members] : blocks) {
    std::size_t extra = 0;
    if (is_inf(a)) extra = 1;
    if (is_inf(b)) extra += groups.size();
    largest = std::max(largest, members.size() + extra);
  }

  std::vector<double> vals(L.vars(), 0.0);
  if (!cfg.force_first_order && largest <= cfg.newton_max_block) {
    res.method = "interior-point";
    res.converged = true;
    std::vector<int> local(L.vars(), -1);
    std::vector<std::vector<std::size_t>> edges_of_block(blocks.size());
    std::map<std::uint32_t, std::size_t> block_id;
    {
      std::size_t id = 0;
      for (const auto& kv : blocks) block_id[kv.first] = id++;
    }
    for (std::size_t e = 0; e < L.ec.size(); ++e) edges_of_block[block_id[uf.find(L.ea[e])]].push_back(e);
    std::vector<std::vector<std::size_t>> groups_of_block(blocks.size());
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      // a group may straddle blocks only when the objective is separable
      std::map<std::size_t, bool> seen;
      for (auto v : groups[gi].members) seen[block_id[uf.find(v)]] = true;
      for (const auto& kv : seen) groups_of_block[kv.first].push_back(gi);
    }
    const std::size_t max_steps = cfg.max_iters ? cfg.max_iters : 2000;
    std::size_t bi = 0;
    for (const auto& [root_id, members] : blocks) {
      detail::BarrierBlock blk;
      blk.a = a;
      blk.b = b;
      int next = 0;
      for (auto v : members) local[v] = next++;
      Eigen::VectorXd z;
      std::vector<double> init;
      for (auto v : members) init.push_back(0.55 * L.var_cmax[v] + 1e-3);
      for (auto e : edges_of_block[bi]) blk.slacks.push_back({local[L.ea[e]], local[L.eb[e]], 1.0, 1.0, L.ec[e]});
      for (auto v : members) blk.slacks.push_back({local[v], -1, 1.0, 0.0, 0.0});
      for (auto gi : groups_of_block[bi]) {
        detail::LocalGroup lg;
        lg.W = groups[gi].W;
        for (std::size_t t = 0; t < groups[gi].members.size(); ++t) {
          const auto v = groups[gi].members[t];
          if (uf.find(v) != root_id) continue;
          lg.idx.push_back(local[v]);
          lg.w.push_back(groups[gi].w[t]);
        }
        blk.groups.push_back(std::move(lg));
      }
      if (is_inf(b)) {
        for (auto& lg : blk.groups) {
          lg.epi = next++;
          double top = 0.0;
          for (int i : lg.idx) top = std::max(top, init[static_cast<std::size_t>(i)]);
          init.push_back(1.1 * top + 1e-2);
          for (int i : lg.idx) blk.slacks.push_back({lg.epi, i, 1.0, -1.0, 0.0});
        }
      }
      if (is_inf(a)) {
        blk.t_var = next++;
        blk.obj = detail::ObjKind::linear;
        double top = 0.0;
        Eigen::VectorXd tmp = Eigen::Map<Eigen::VectorXd>(init.data(), static_cast<Eigen::Index>(init.size()));
        if (is_inf(b)) {
          for (auto& lg : blk.groups) {
            top = std::max(top, init[static_cast<std::size_t>(lg.epi)]);
            blk.slacks.push_back({blk.t_var, lg.epi, 1.0, -1.0, 0.0});
          }
        } else {
          blk.norm_barrier = true;
          for (auto& lg : blk.groups) top = std::max(top, blk.group_norm(lg, tmp));
        }
        init.push_back(1.1 * top + 1e-2);
      } else {
        blk.obj = is_inf(b) ? detail::ObjKind::epi_power : detail::ObjKind::power;
      }
      blk.n = next;
      z = Eigen::Map<Eigen::VectorXd>(init.data(), static_cast<Eigen::Index>(init.size()));
      auto outcome = blk.norm_barrier ? detail::BlockOutcome{} : detail::solve_primal_dual(blk, z, cfg.tol, max_steps);
      if (!outcome.converged) {
        const auto fallback = detail::solve_barrier(blk, z, cfg.tol, max_steps);
        outcome.newton_steps += fallback.newton_steps;
        outcome.converged = fallback.converged;
      }
      res.iterations += outcome.newton_steps;
      res.converged = res.converged && outcome.converged;
      for (auto v : members) vals[v] = z[local[v]];
      ++bi;
    }
    auto fixed = repair(prog, to_gradient(vals), true);
    res.gradient = std::move(fixed.grad);
    res.repair_fallback = fixed.fallback;
  } else {
    res.method = "primal-dual";
    auto evaluate = [&](const std::vector<double>& cur) { return program_objective(prog, to_gradient(cur)); };
    auto outcome = detail::solve_first_order(L, groups, a, b, cfg, evaluate);
    res.iterations = outcome.iterations;
    res.converged = outcome.converged;
    auto fixed = repair(prog, to_gradient(outcome.best), true);
    res.gradient = std::move(fixed.grad);
    res.repair_fallback = fixed.fallback;
  }
  res.upper_bound = program_objective(prog, res.gradient);
  return res;
}

// --- brute-force oracle ----------------------------------------------------------------

struct BruteForceConfig {
  /// Lattice step relative to the largest c.
  double step = 1e-3;
  /// Extra exhaustive passes on a 10x finer lattice around the incumbent.
  int refine_levels = 2;
  std::size_t max_variables = 6;
  std::size_t max_evaluations = 200000000;
};

/// Exhaustive lattice search. Per scale a minimum vertex cover of the constraint graph is found by
/// subset enumeration; cover variables range over the lattice (plus every c value) and each
/// remaining variable takes the smallest feasible value max_nbr (c - g_nbr)_+.
inline double brute_force_norm(const MetricMeasureSpace& space, std::span<const double> u, double s, double p,
                               double q, AggregationMode mode, const BruteForceConfig& cfg = {}) {
  const HajlaszProgram prog = build_program(space, u, s, p, q, mode);
  const auto scales = prog.active_scales();
  const std::size_t n = prog.points;
  struct Var {
    int k;
    std::size_t x;
  };
  std::vector<Var> vars;
  std::map<std::pair<int, std::size_t>, std::size_t> id;
  struct Edge {
    std::size_t a, b;
    double c;
  };
  std::vector<Edge> edges;
  double cmax = 0.0;
  for (const auto& e : prog.constraints) {
    if (!(e.c > 0.0)) continue;
    cmax = std::max(cmax, e.c);
    for (std::size_t pt : {static_cast<std::size_t>(e.x), static_cast<std::size_t>(e.y)})
      if (!id.count({e.k, pt})) {
        id[{e.k, pt}] = vars.size();
        vars.push_back({e.k, pt});
      }
    edges.push_back({id[{e.k, e.x}], id[{e.k, e.y}], e.c});
  }
  if (vars.empty()) return 0.0;
  if (vars.size() > cfg.max_variables)
    throw ResourceError("brute force oracle limited to " + std::to_string(cfg.max_variables) + " variables");
  // minimum vertex cover over all variables (scales are disjoint, so a global search is per-scale optimal)
  const std::size_t nv = vars.size();
  std::uint32_t best_mask = (1u << nv) - 1;
  for (std::uint32_t mask = 0; mask < (1u << nv); ++mask) {
    bool covers = true;
    for (const auto& e : edges)
      if (!((mask >> e.a) & 1u) && !((mask >> e.b) & 1u)) covers = false;
    if (covers && __builtin_popcount(mask) < __builtin_popcount(best_mask)) best_mask = mask;
  }
  std::vector<std::size_t> cover, rest;
  for (std::size_t v = 0; v < nv; ++v) (((best_mask >> v) & 1u) ? cover : rest).push_back(v);

  const ScaleWindow w{scales.front(), scales.back()};
  GradientSequence g(w, n);
  std::vector<double> val(nv, 0.0);
  auto evaluate = [&]() {
    for (std::size_t r : rest) {
      double need = 0.0;
      for (const auto& e : edges) {
        if (e.a == r) need = std::max(need, e.c - val[e.b]);
        if (e.b == r) need = std::max(need, e.c - val[e.a]);
      }
      val[r] = need;
    }
    for (std::size_t v = 0; v < nv; ++v) g.at(vars[v].k, vars[v].x) = val[v];
    return aggregate(space, g, p, q, mode);
  };

  std::vector<double> base_values;
  const double h = cfg.step * cmax;
  for (double t = 0.0; t <= cmax * (1.0 + 1e-12); t += h) base_values.push_back(t);
  for (const auto& e : edges) base_values.push_back(e.c);
  std::sort(base_values.begin(), base_values.end());
  base_values.erase(std::unique(base_values.begin(), base_values.end()), base_values.end());

  std::vector<std::vector<double>> lattice(cover.size(), base_values);
  std::vector<double> incumbent(cover.size(), cmax);
  double best = kInf;
  double step = h;
  for (int level = 0; level <= cfg.refine_levels; ++level) {
    std::size_t total = 1;
    for (const auto& l : lattice) {
      total *= l.size();
      if (total > cfg.max_evaluations) throw ResourceError("brute force lattice too large");
    }
    std::vector<std::size_t> digit(cover.size(), 0);
    for (std::size_t it = 0; it < total; ++it) {
      std::size_t rest_it = it;
      for (std::size_t c = 0; c < cover.size(); ++c) {
        digit[c] = rest_it % lattice[c].size();
        rest_it /= lattice[c].size();
        val[cover[c]] = lattice[c][digit[c]];
      }
      const double f = evaluate();
      if (f < best) {
        best = f;
        for (std::size_t c = 0; c < cover.size(); ++c) incumbent[c] = val[cover[c]];
      }
    }
    // finer lattice within one coarse step of the incumbent
    const double fine = step / 10.0;
    for (std::size_t c = 0; c < cover.size(); ++c) {
      lattice[c].clear();
      for (int t = -10; t <= 10; ++t) {
        const double v = incumbent[c] + t * fine;
        if (v >= 0.0 && v <= cmax) lattice[c].push_back(v);
      }
    }
    step = fine;
  }
  return best;
}

}  // namespace hajnorm
