#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "hajnorm/experiment.hpp"
#include "hajnorm/io.hpp"
#include "hajnorm/lp_bands.hpp"
#include "hajnorm/norms.hpp"
#include "hajnorm/optimize.hpp"
#include "hajnorm/qcmap.hpp"

using namespace hajnorm;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
  } else {
    write_text_atomic(out_path, text);
  }
}

void emit_json(const std::string& out_path, const json& j) { emit(out_path, j.dump(2) + "\n"); }

struct ExponentArgs {
  double s = 0.5;
  std::string p = "2";
  std::string q = "2";
};

void add_exponents(CLI::App* cmd, ExponentArgs& e) {
  cmd->add_option("--s", e.s, "smoothness")->capture_default_str();
  cmd->add_option("--p", e.p, "integrability exponent (number or inf)")->capture_default_str();
  cmd->add_option("--q", e.q, "scale exponent (number or inf)")->capture_default_str();
}

json params_json(const ExponentArgs& e, const std::string& family) {
  return {{"s", e.s}, {"p", exponent_to_json(parse_exponent(e.p))}, {"q", exponent_to_json(parse_exponent(e.q))},
          {"family", family}};
}

MetricMeasureSpace load_space(const std::string& path) { return space_from_json(read_json(path)); }

ScalarField load_field(const std::string& path, const MetricMeasureSpace& space) {
  auto f = field_from_json(read_json(path));
  check_field_space(f, space);
  return f;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Smoothness norms and quasiconformal experiments on finite metric measure spaces"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "global random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads for per-field loops")->capture_default_str();

  std::string out;

  // space
  auto* space_cmd = app.add_subcommand("space", "build and validate spaces");
  space_cmd->require_subcommand(1);
  int dim = 1, res = 64;
  double side = 1.0;
  auto* build_grid = space_cmd->add_subcommand("build-grid", "periodic grid on the torus");
  build_grid->add_option("--dim", dim)->capture_default_str();
  build_grid->add_option("--res", res)->capture_default_str();
  build_grid->add_option("--side", side)->capture_default_str();
  build_grid->add_option("-o,--out", out);
  std::string space_path;
  auto* validate = space_cmd->add_subcommand("validate", "check axioms and estimate doubling constants");
  validate->add_option("space", space_path)->required();

  // field
  auto* field_cmd = app.add_subcommand("field", "generate fields");
  field_cmd->require_subcommand(1);
  auto* field_gen = field_cmd->add_subcommand("gen", "deterministic function family");
  std::string family_spec_path, kind = "trig_polynomial";
  int count = 16, index = -1;
  field_gen->add_option("--space", space_path)->required();
  field_gen->add_option("--spec", family_spec_path, "family spec JSON");
  field_gen->add_option("--kind", kind)->capture_default_str();
  field_gen->add_option("--count", count)->capture_default_str();
  field_gen->add_option("--index", index, "emit only this member");
  field_gen->add_option("-o,--out", out);

  // grad
  auto* grad_cmd = app.add_subcommand("grad", "build and check gradient sequences");
  grad_cmd->require_subcommand(1);
  std::string field_path, grad_path, method = "diff", cls = "base";
  ExponentArgs ex;
  int K0 = 2, N1 = 0, N2 = 0, N = 0;
  double eps = 0.1;
  auto* grad_build = grad_cmd->add_subcommand("build", "constructive gradient");
  grad_build->add_option("--space", space_path)->required();
  grad_build->add_option("--field", field_path)->required();
  grad_build->add_option("--method", method, "diff or grand")->capture_default_str();
  grad_build->add_option("--K0", K0)->capture_default_str();
  add_exponents(grad_build, ex);
  grad_build->add_option("-o,--out", out);
  auto* grad_check = grad_cmd->add_subcommand("check", "membership certificate (rho_min)");
  grad_check->add_option("--space", space_path)->required();
  grad_check->add_option("--field", field_path)->required();
  grad_check->add_option("--grad", grad_path, "gradient JSON or an opt result JSON")->required();
  grad_check->add_option("--s", ex.s)->capture_default_str();
  grad_check->add_option("--class", cls, "base, shifted, lower or upper")->capture_default_str();
  grad_check->add_option("--N1", N1);
  grad_check->add_option("--N2", N2);
  grad_check->add_option("--eps", eps);
  grad_check->add_option("--N", N);

  // norm
  auto* norm_cmd = app.add_subcommand("norm", "norms of a field");
  norm_cmd->require_subcommand(1);
  std::string norm_family = "M";
  auto* norm_compute = norm_cmd->add_subcommand("compute", "optimal Hajlasz norms (M, N) or Bourdon-Pajot (BP)");
  norm_compute->add_option("--space", space_path)->required();
  norm_compute->add_option("--field", field_path)->required();
  norm_compute->add_option("--family", norm_family)->capture_default_str();
  add_exponents(norm_compute, ex);
  norm_compute->add_option("-o,--out", out);

  // opt
  auto* opt_cmd = app.add_subcommand("opt", "optimal gradient sequences");
  opt_cmd->require_subcommand(1);
  std::string mode = "Lp_lq";
  double tol = SolverConfig{}.tol;
  auto* opt_solve = opt_cmd->add_subcommand("solve", "minimize the gradient norm");
  opt_solve->add_option("--space", space_path)->required();
  opt_solve->add_option("--field", field_path)->required();
  add_exponents(opt_solve, ex);
  opt_solve->add_option("--mode", mode, "Lp_lq or lq_Lp")->capture_default_str();
  opt_solve->add_option("--tol", tol)->capture_default_str();
  opt_solve->add_option("-o,--out", out);

  // lp
  auto* lp_cmd = app.add_subcommand("lp", "Littlewood-Paley norms on grids");
  lp_cmd->require_subcommand(1);
  std::string lp_family = "F";
  double taper = 1.0;
  auto* lp_norm = lp_cmd->add_subcommand("norm", "band norms F, B, grandF, grandB");
  lp_norm->add_option("--space", space_path)->required();
  lp_norm->add_option("--field", field_path)->required();
  lp_norm->add_option("--family", lp_family)->capture_default_str();
  lp_norm->add_option("--taper", taper)->capture_default_str();
  add_exponents(lp_norm, ex);
  lp_norm->add_option("-o,--out", out);

  // qc
  auto* qc_cmd = app.add_subcommand("qc", "quasiconformal map analysis");
  qc_cmd->require_subcommand(1);
  std::string map_spec = "identity", backend = "difference";
  bool csv = false;
  double radius = 0.0;
  auto add_map_opts = [&](CLI::App* c) {
    c->add_option("--dim", dim)->capture_default_str();
    c->add_option("--res", res)->capture_default_str();
    c->add_option("--side", side)->capture_default_str();
    c->add_option("--map", map_spec, "identity, radial:a=<a>, linear:<a1>,..., dilation:<l>")->capture_default_str();
    c->add_option("-o,--out", out);
  };
  auto* qc_analyze = qc_cmd->add_subcommand("analyze", "metric distortion H, eta samples");
  add_map_opts(qc_analyze);
  auto* qc_jacobian = qc_cmd->add_subcommand("jacobian", "volume derivative and reverse Hoelder scan");
  add_map_opts(qc_jacobian);
  qc_jacobian->add_option("--radius", radius, "ball radius (default: 3 spacings)");
  auto* qc_inv = qc_cmd->add_subcommand("invariance", "norm ratios ||u o f|| / ||u||");
  add_map_opts(qc_inv);
  add_exponents(qc_inv, ex);
  qc_inv->add_option("--backend", backend, "optimal, difference, grand or lp")->capture_default_str();
  qc_inv->add_option("--count", count)->capture_default_str();
  qc_inv->add_option("--K0", K0)->capture_default_str();
  qc_inv->add_flag("--csv", csv, "CSV rows instead of JSON");

  // experiment
  auto* exp_cmd = app.add_subcommand("experiment", "experiments described by a JSON file");
  exp_cmd->require_subcommand(1);
  std::string spec_path;
  auto* exp_run = exp_cmd->add_subcommand("run", "run an experiment file");
  exp_run->add_option("spec", spec_path)->required();
  exp_run->add_option("-o,--out", out);
  exp_run->add_flag("--csv", csv);

  // report
  auto* report_cmd = app.add_subcommand("report", "report files");
  report_cmd->require_subcommand(1);
  std::string report_path, format = "csv";
  auto* report_convert = report_cmd->add_subcommand("convert", "convert a report to csv or json");
  report_convert->add_option("report", report_path)->required();
  report_convert->add_option("--format", format)->capture_default_str();
  report_convert->add_option("-o,--out", out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (build_grid->parsed()) {
      emit_json(out, to_json(build_periodic_grid(dim, res, side)));
    } else if (validate->parsed()) {
      const auto sp = load_space(space_path);
      DoublingOptions dopts;
      dopts.rng_seed = g.seed;
      const auto d = estimate_doubling(sp, dopts);
      emit_json(out, {{"hash", sp.hash()},
                      {"topology", to_string(sp.topology())},
                      {"points", sp.size()},
                      {"diameter", sp.diameter()},
                      {"window", {sp.window().k_min, sp.window().k_max}},
                      {"doubling", to_json(d)}});
    } else if (field_gen->parsed()) {
      const auto sp = load_space(space_path);
      FunctionFamilySpec fs;
      if (!family_spec_path.empty()) {
        fs = family_from_json(read_json(family_spec_path));
      } else {
        fs.kind = family_kind_from_string(kind);
        fs.count = count;
        fs.rng_seed = g.seed;
      }
      const auto fam = generate_family(sp, fs);
      if (index >= 0) {
        if (index >= static_cast<int>(fam.size())) throw ConfigError("--index beyond family size");
        emit_json(out, to_json(fam[static_cast<std::size_t>(index)]));
      } else {
        json arr = json::array();
        for (const auto& f : fam) arr.push_back(to_json(f));
        emit_json(out, {{"family", to_json(fs)}, {"fields", arr}});
      }
    } else if (grad_build->parsed()) {
      const auto sp = load_space(space_path);
      const auto f = load_field(field_path, sp);
      const double p = parse_exponent(ex.p);
      GradientSequence gr;
      if (method == "diff") {
        gr = difference_gradient(sp, f.values, ex.s, p, K0);
      } else if (method == "grand") {
        if (!sp.is_grid()) throw ConfigError("grand gradient needs a periodic grid");
        gr = grand_maximal_gradient(sp, f.values, ex.s, default_dictionary(sp.grid()->n_dim));
      } else {
        throw ConfigError("unknown gradient method '" + method + "'");
      }
      emit_json(out, to_json(gr));
    } else if (grad_check->parsed()) {
      const auto sp = load_space(space_path);
      const auto f = load_field(field_path, sp);
      json gj = read_json(grad_path);
      if (gj.contains("gradient")) gj = gj.at("gradient");  // opt result certificate
      const auto gr = gradient_from_json(gj);
      if (gr.points() != sp.size()) throw ValidationError("gradient size does not match space");
      GradientClassSpec spec = GradientClassSpec::base(ex.s);
      if (cls == "shifted") spec = GradientClassSpec::shifted(ex.s, N1, N2);
      else if (cls == "lower") spec = GradientClassSpec::lower_tail(ex.s, eps, N);
      else if (cls == "upper") spec = GradientClassSpec::upper_tail(ex.s, eps, N);
      else if (cls != "base") throw ConfigError("unknown class '" + cls + "'");
      emit_json(out, to_json(check_membership(sp, f.values, gr, spec)));
    } else if (norm_compute->parsed()) {
      const auto sp = load_space(space_path);
      const auto f = load_field(field_path, sp);
      const double p = parse_exponent(ex.p), q = parse_exponent(ex.q);
      double value = 0.0;
      if (norm_family == "M" || norm_family == "N") {
        const auto m = norm_family == "M" ? AggregationMode::Lp_lq : AggregationMode::lq_Lp;
        value = solve(build_program(sp, f.values, ex.s, p, q, m)).upper_bound;
      } else if (norm_family == "BP") {
        value = bourdon_pajot_norm(sp, f.values, ex.s, p);
      } else {
        throw ConfigError("unknown norm family '" + norm_family + "' (M, N or BP)");
      }
      emit_json(out, {{"value", value}, {"params", params_json(ex, norm_family)}, {"space_hash", sp.hash()}});
    } else if (opt_solve->parsed()) {
      const auto sp = load_space(space_path);
      const auto f = load_field(field_path, sp);
      SolverConfig cfg;
      cfg.tol = tol;
      const auto r = solve(build_program(sp, f.values, ex.s, parse_exponent(ex.p), parse_exponent(ex.q),
                                         mode_from_string(mode)),
                           cfg);
      json j = to_json(r);
      j["params"] = params_json(ex, mode);
      j["space_hash"] = sp.hash();
      emit_json(out, j);
    } else if (lp_norm->parsed()) {
      const auto sp = load_space(space_path);
      const auto f = load_field(field_path, sp);
      if (!sp.is_grid()) throw DomainError("Littlewood-Paley norms need a periodic grid");
      const double p = parse_exponent(ex.p), q = parse_exponent(ex.q);
      double value = 0.0;
      json bank;
      if (lp_family == "F" || lp_family == "B") {
        const auto fb = build_band_filters(*sp.grid(), std::nullopt, taper);
        const auto coeffs = band_decompose(sp, f.values, fb);
        value = lp_family == "F" ? tl_norm(sp, coeffs, ex.s, p, q) : besov_norm(sp, coeffs, ex.s, p, q);
        bank = {{"k_lo", fb.k_lo}, {"k_hi", fb.k_hi}, {"taper", fb.taper}, {"squared", fb.squared}};
      } else if (lp_family == "grandF" || lp_family == "grandB") {
        const auto dict = default_dictionary(sp.grid()->n_dim);
        value = grand_norm(sp, f.values, ex.s, p, q, dict, lp_family == "grandF" ? GrandFamily::F : GrandFamily::B);
        bank = {{"atoms", dict.atoms.size()}, {"m", dict.m}};
      } else {
        throw ConfigError("unknown family '" + lp_family + "' (F, B, grandF or grandB)");
      }
      emit_json(out, {{"value", value}, {"params", params_json(ex, lp_family)}, {"bank", bank}, {"space_hash", sp.hash()}});
    } else if (qc_analyze->parsed() || qc_jacobian->parsed() || qc_inv->parsed()) {
      const auto grid = build_periodic_grid(dim, res, side);
      const auto map = parse_map_spec(grid, map_spec);
      if (qc_analyze->parsed()) {
        DistortionOptions dopts;
        dopts.seed = g.seed;
        emit_json(out, to_json(analyze_distortion(map, dopts)));
      } else if (qc_jacobian->parsed()) {
        const auto J = volume_derivative(map, radius > 0.0 ? std::optional<double>(radius) : std::nullopt);
        const double h = grid.grid()->spacing();
        const auto balls = sample_balls(grid, 200, 3.0 * h, 0.25 * side, g.seed);
        json j = to_json(J);
        j["reverse_holder"] = to_json(reverse_holder_scan(grid, J.J_hat, {1.0, 1.5, 2.0, 3.0, 4.0}, balls));
        emit_json(out, j);
      } else {
        FunctionFamilySpec fs;
        fs.count = count;
        fs.rng_seed = g.seed;
        BackendOptions bopts;
        bopts.K0 = K0;
        const NormParams np{ex.s, parse_exponent(ex.p), parse_exponent(ex.q), NormFamily::M};
        const auto rr = invariance_experiment(map, fs, {np}, backend_from_string(backend), bopts, g.threads);
        if (csv) {
          emit(out, ratio_csv(rr));
        } else {
          emit_json(out, to_json(rr));
        }
      }
    } else if (exp_run->parsed()) {
      auto spec = spec_from_json(read_json(spec_path));
      if (app.get_option("--threads")->count()) spec.threads = g.threads;
      const auto rep = run_experiment(spec);
      if (spec.output_json) write_text_atomic(*spec.output_json, convert(rep, "json"));
      if (spec.output_csv) write_text_atomic(*spec.output_csv, convert(rep, "csv"));
      if (!out.empty() || (!spec.output_json && !spec.output_csv)) emit(out, convert(rep, csv ? "csv" : "json"));
    } else if (report_convert->parsed()) {
      emit(out, convert(report_from_json(read_json(report_path)), format));
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
