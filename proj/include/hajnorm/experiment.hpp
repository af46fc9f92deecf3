#pragma once

#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hajnorm/io.hpp"
#include "hajnorm/norms.hpp"
#include "hajnorm/qcmap.hpp"

namespace hajnorm {

inline constexpr const char* kToolVersion = "0.1.0";

enum class ReportKind { norm_table, ratio_table, equivalence_table, diagnostics };

inline const char* to_string(ReportKind k) {
  switch (k) {
    case ReportKind::norm_table: return "norm_table";
    case ReportKind::ratio_table: return "ratio_table";
    case ReportKind::equivalence_table: return "equivalence_table";
    case ReportKind::diagnostics: return "diagnostics";
  }
  return "?";
}

inline ReportKind report_kind_from_string(const std::string& s) {
  if (s == "norm_table") return ReportKind::norm_table;
  if (s == "ratio_table") return ReportKind::ratio_table;
  if (s == "equivalence_table") return ReportKind::equivalence_table;
  if (s == "diagnostics") return ReportKind::diagnostics;
  throw ConfigError("unknown report kind '" + s + "'");
}

/// Builds a map on `grid` from "identity", "radial:a=<a>", "linear:<a1>,<a2>,..." or "dilation:<lambda>".
inline MapSample parse_map_spec(const MetricMeasureSpace& grid, const std::string& spec) {
  if (spec == "identity") return identity_map(grid);
  const auto colon = spec.find(':');
  const std::string name = spec.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : spec.substr(colon + 1);
  auto number = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("bad number '" + s + "' in map spec '" + spec + "'");
  };
  if (name == "radial") {
    if (args.rfind("a=", 0) != 0) throw ConfigError("radial map spec needs a=<exponent>");
    return radial_power_map(grid, number(args.substr(2)));
  }
  if (name == "linear" || name == "dilation") {
    std::vector<double> diag;
    std::stringstream ss(args);
    for (std::string item; std::getline(ss, item, ',');) diag.push_back(number(item));
    if (name == "dilation") {
      if (diag.size() != 1) throw ConfigError("dilation map spec needs one factor");
      diag.assign(static_cast<std::size_t>(grid.grid() ? grid.grid()->n_dim : 1), diag.front());
    }
    return linear_map(grid, diag);
  }
  throw ConfigError("unknown map spec '" + spec + "'");
}

struct ExperimentSpec {
  ReportKind kind = ReportKind::norm_table;
  json space;  // {"grid": {...}} or a full space object, or {"file": path}
  FunctionFamilySpec family;
  std::vector<NormParams> norms;
  std::vector<std::string> backends;
  std::optional<std::string> map;
  SolverConfig solver;
  int K0 = 2;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::optional<std::string> output_json;
  std::optional<std::string> output_csv;
};

inline const std::vector<std::string>& known_backends() {
  static const std::vector<std::string> names{"optimal", "difference", "lp", "grand", "bp"};
  return names;
}

/// Parses an experiment spec; errors name the offending field path.
inline ExperimentSpec spec_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("spec: expected an object");
  ExperimentSpec s;
  auto fail = [](const std::string& path, const std::string& what) { throw ValidationError(path + ": " + what); };
  try {
    if (!j.contains("kind")) fail("spec.kind", "missing");
    try {
      s.kind = report_kind_from_string(j.at("kind").get<std::string>());
    } catch (const ConfigError& e) {
      fail("spec.kind", e.what());
    }
    if (!j.contains("space")) fail("spec.space", "missing");
    s.space = j.at("space");
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    s.family.rng_seed = s.seed;
    if (j.contains("family")) {
      s.family = family_from_json(j.at("family"), "spec.family");
      if (!j.at("family").contains("rng_seed")) s.family.rng_seed = s.seed;
    }
    if (j.contains("norms")) {
      const auto& arr = j.at("norms");
      if (!arr.is_array()) fail("spec.norms", "expected an array");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string path = "spec.norms[" + std::to_string(i) + "]";
        NormParams np;
        np.s = arr[i].value("s", np.s);
        if (arr[i].contains("p")) np.p = exponent_from_json(arr[i].at("p"), path + ".p");
        if (arr[i].contains("q")) np.q = exponent_from_json(arr[i].at("q"), path + ".q");
        try {
          np.validate();
        } catch (const ConfigError& e) {
          fail(path, e.what());
        }
        s.norms.push_back(np);
      }
    }
    if (j.contains("backends")) s.backends = j.at("backends").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < s.backends.size(); ++i) {
      const auto& names = known_backends();
      if (std::find(names.begin(), names.end(), s.backends[i]) == names.end())
        fail("spec.backends[" + std::to_string(i) + "]", "unknown backend '" + s.backends[i] + "'");
    }
    if (j.contains("map")) s.map = j.at("map").get<std::string>();
    if (j.contains("K0")) s.K0 = j.at("K0").get<int>();
    if (j.contains("threads")) s.threads = j.at("threads").get<unsigned>();
    if (j.contains("solver")) {
      const auto& c = j.at("solver");
      s.solver.tol = c.value("tol", s.solver.tol);
      s.solver.max_iters = c.value("max_iters", s.solver.max_iters);
      s.solver.newton_max_block = c.value("newton_max_block", s.solver.newton_max_block);
      s.solver.force_first_order = c.value("force_first_order", s.solver.force_first_order);
    }
    if (j.contains("output")) {
      const auto& o = j.at("output");
      if (o.contains("json")) s.output_json = o.at("json").get<std::string>();
      if (o.contains("csv")) s.output_csv = o.at("csv").get<std::string>();
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("spec: ") + e.what());
  }
  if (s.kind != ReportKind::diagnostics && s.norms.empty()) throw ValidationError("spec.norms: at least one entry needed");
  if (s.kind != ReportKind::diagnostics && s.backends.empty()) throw ValidationError("spec.backends: at least one entry needed");
  if (s.kind == ReportKind::ratio_table && !s.map) throw ValidationError("spec.map: ratio_table needs a map");
  if (s.kind == ReportKind::ratio_table && s.backends.size() != 1)
    throw ValidationError("spec.backends: ratio_table takes exactly one backend");
  return s;
}

/// Canonical form of everything that influences the result (output paths and threads excluded).
inline json canonical_json(const ExperimentSpec& s) {
  json norms = json::array();
  for (const auto& np : s.norms) norms.push_back({{"s", np.s}, {"p", exponent_to_json(np.p)}, {"q", exponent_to_json(np.q)}});
  json j{{"kind", to_string(s.kind)},
         {"space", s.space},
         {"family", to_json(s.family)},
         {"norms", norms},
         {"backends", s.backends},
         {"K0", s.K0},
         {"seed", s.seed},
         {"solver",
          {{"tol", s.solver.tol},
           {"max_iters", s.solver.max_iters},
           {"newton_max_block", s.solver.newton_max_block},
           {"force_first_order", s.solver.force_first_order}}}};
  if (s.map) j["map"] = *s.map;
  return j;
}

inline std::string spec_hash(const ExperimentSpec& s) { return hash_string(canonical_json(s).dump()); }

inline MetricMeasureSpace space_from_spec(const json& j) {
  if (j.is_object() && j.contains("file")) return space_from_json(read_json(j.at("file").get<std::string>()));
  return space_from_json(j);
}

struct Report {
  ReportKind kind = ReportKind::norm_table;
  std::string spec_hash;
  std::string version = kToolVersion;
  std::vector<std::string> columns;
  std::vector<std::vector<json>> rows;
  json summary = json::object();
};

inline json to_json(const Report& r) {
  return {{"kind", to_string(r.kind)}, {"spec_hash", r.spec_hash}, {"version", r.version},
          {"columns", r.columns},      {"rows", r.rows},           {"summary", r.summary}};
}

inline Report report_from_json(const json& j) {
  try {
    Report r;
    r.kind = report_kind_from_string(j.at("kind").get<std::string>());
    r.spec_hash = j.value("spec_hash", std::string());
    r.version = j.value("version", std::string(kToolVersion));
    r.columns = j.at("columns").get<std::vector<std::string>>();
    for (const auto& row : j.at("rows")) {
      if (!row.is_array() || row.size() != r.columns.size()) throw ValidationError("report.rows: row width mismatch");
      r.rows.push_back(row.get<std::vector<json>>());
    }
    if (j.contains("summary")) r.summary = j.at("summary");
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("report: ") + e.what());
  } catch (const ConfigError& e) {
    throw ValidationError(std::string("report.kind: ") + e.what());
  }
}

inline std::string report_csv(const Report& r) {
  std::string out;
  for (std::size_t c = 0; c < r.columns.size(); ++c) out += (c ? "," : "") + csv_escape(r.columns[c]);
  out += "\n";
  for (const auto& row : r.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + csv_cell(row[c]);
    out += "\n";
  }
  return out;
}

/// Serializes a report as "json" (lossless) or "csv" (rows only).
inline std::string convert(const Report& r, const std::string& format) {
  if (format == "json") return to_json(r).dump(2) + "\n";
  if (format == "csv") return report_csv(r);
  throw ConfigError("unknown format '" + format + "' (expected csv or json)");
}

// --- norm cache -------------------------------------------------------------------------

/// Content-addressed store of norm values under $HAJNORM_CACHE_DIR; disabled when unset.
class NormCache {
 public:
  NormCache() {
    if (const char* dir = std::getenv("HAJNORM_CACHE_DIR"); dir && *dir) dir_ = dir;
  }
  explicit NormCache(std::string dir) : dir_(std::move(dir)) {}

  bool enabled() const { return !dir_.empty(); }

  std::optional<double> get(const std::string& key) const {
    if (!enabled()) return std::nullopt;
    const auto path = file(key);
    if (!std::filesystem::exists(path)) return std::nullopt;
    try {
      return read_json(path).at("value").get<double>();
    } catch (const std::exception&) {
      return std::nullopt;  // unreadable entries are recomputed
    }
  }

  void put(const std::string& key, double value) const {
    if (enabled()) write_text_atomic(file(key), json{{"value", value}}.dump() + "\n");
  }

 private:
  std::string file(const std::string& key) const { return (std::filesystem::path(dir_) / (key + ".json")).string(); }
  std::string dir_;
};

/// Evaluates the named norm backends on one space, sharing precomputed geometry across fields.
class BackendSet {
 public:
  BackendSet(const MetricMeasureSpace& space, const std::vector<std::string>& names, const ExperimentSpec& spec)
      : space_(space), spec_(spec) {
    BackendOptions opts;
    opts.K0 = spec.K0;
    opts.solver = spec.solver;
    for (const auto& n : names) {
      if (n == "bp") {
        if (!table_) table_ = std::make_unique<NeighborTable>(space);
      } else if (!evaluators_.count(n)) {
        evaluators_.emplace(n, std::make_unique<NormEvaluator>(space, backend_from_string(n), opts));
      }
    }
  }

  /// NaN when the backend does not apply to the exponents (bp with p != q or p outside [1, inf)).
  double operator()(const std::string& name, std::span<const double> u, const NormParams& np,
                    const NormCache& cache) const {
    if (name == "bp" && (np.p != np.q || np.p < 1.0 || is_inf(np.p))) return std::nan("");
    Fnv1a h;
    h.update(space_.hash());
    h.update(u);
    h.update(name);
    h.update(np.s);
    h.update(np.p);
    h.update(np.q);
    h.update(static_cast<std::int64_t>(spec_.K0));
    h.update(spec_.solver.tol);
    h.update(static_cast<std::int64_t>(spec_.solver.max_iters));
    h.update(static_cast<std::int64_t>(spec_.solver.newton_max_block));
    h.update(static_cast<std::int64_t>(spec_.solver.force_first_order));
    h.update(kToolVersion);
    const std::string key = h.hex();
    if (auto v = cache.get(key)) return *v;
    const double v = name == "bp" ? bourdon_pajot_norm(space_, u, np.s, np.p, table_.get())
                                  : (*evaluators_.at(name))(u, np.s, np.p, np.q);
    cache.put(key, v);
    return v;
  }

 private:
  const MetricMeasureSpace& space_;
  const ExperimentSpec& spec_;
  std::map<std::string, std::unique_ptr<NormEvaluator>> evaluators_;
  std::unique_ptr<NeighborTable> table_;
};

namespace detail {

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline Report norm_rows(const ExperimentSpec& spec, const MetricMeasureSpace& space, const NormCache& cache) {
  Report rep;
  rep.columns = {"field_id", "field_hash", "s", "p", "q"};
  for (const auto& b : spec.backends) rep.columns.push_back(b);
  const auto fields = generate_family(space, spec.family);
  const BackendSet backends(space, spec.backends, spec);
  const std::size_t P = spec.norms.size();
  std::vector<std::vector<double>> values(fields.size() * P, std::vector<double>(spec.backends.size()));
  parallel_for(fields.size(), spec.threads, [&](std::size_t i) {
    for (std::size_t j = 0; j < P; ++j)
      for (std::size_t b = 0; b < spec.backends.size(); ++b)
        values[i * P + j][b] = backends(spec.backends[b], fields[i].values, spec.norms[j], cache);
  });
  for (std::size_t i = 0; i < fields.size(); ++i) {
    Fnv1a fh;
    fh.update(std::span<const double>(fields[i].values));
    for (std::size_t j = 0; j < P; ++j) {
      const auto& np = spec.norms[j];
      std::vector<json> row{i, fh.hex(), np.s, exponent_to_json(np.p), exponent_to_json(np.q)};
      for (double v : values[i * P + j]) row.push_back(number_or_null(v));
      rep.rows.push_back(std::move(row));
    }
  }
  if (spec.kind == ReportKind::equivalence_table) {
    // per parameter set and backend pair: extreme ratios over the family
    json sums = json::array();
    for (std::size_t j = 0; j < P; ++j)
      for (std::size_t a = 0; a < spec.backends.size(); ++a)
        for (std::size_t b = a + 1; b < spec.backends.size(); ++b) {
          double lo = kInf, hi = 0.0;
          for (std::size_t i = 0; i < fields.size(); ++i) {
            const double r = values[i * P + j][a] / values[i * P + j][b];
            if (!std::isfinite(r) || !(r > 0.0)) continue;
            lo = std::min(lo, r);
            hi = std::max(hi, r);
          }
          if (hi == 0.0) continue;
          sums.push_back({{"s", spec.norms[j].s},
                          {"p", exponent_to_json(spec.norms[j].p)},
                          {"q", exponent_to_json(spec.norms[j].q)},
                          {"pair", {spec.backends[a], spec.backends[b]}},
                          {"min_ratio", lo},
                          {"max_ratio", hi},
                          {"spread", hi / lo}});
        }
    rep.summary["pairs"] = std::move(sums);
  }
  return rep;
}

}  // namespace detail

inline Report run_experiment(const ExperimentSpec& spec, const NormCache& cache = NormCache()) {
  const MetricMeasureSpace space = space_from_spec(spec.space);
  Report rep;
  switch (spec.kind) {
    case ReportKind::norm_table:
    case ReportKind::equivalence_table: rep = detail::norm_rows(spec, space, cache); break;
    case ReportKind::ratio_table: {
      const MapSample map = parse_map_spec(space, *spec.map);
      BackendOptions opts;
      opts.K0 = spec.K0;
      opts.solver = spec.solver;
      const auto rr = invariance_experiment(map, spec.family, spec.norms, backend_from_string(spec.backends.front()),
                                            opts, spec.threads);
      rep.columns = {"field_id", "backend", "s", "p", "q", "source_norm", "target_norm", "ratio"};
      for (const auto& r : rr.rows)
        rep.rows.push_back({r.field_id, rr.backend, r.s, exponent_to_json(r.p), exponent_to_json(r.q), r.source_norm,
                            r.target_norm, r.ratio});
      rep.summary["ratios"] = to_json(rr).at("summary");
      break;
    }
    case ReportKind::diagnostics: {
      rep.columns = {"quantity", "value"};
      const auto d = estimate_doubling(space, DoublingOptions{{2.0, 4.0}, 400, spec.seed, 0.0, 0.0});
      rep.rows = {{"points", space.size()},       {"diameter", space.diameter()}, {"min_distance", space.min_distance()},
                  {"C1_hat", d.C1_hat},          {"C2_hat", d.C2_hat},           {"n_hat", d.n_hat},
                  {"kappa_hat", d.kappa_hat}};
      if (spec.map) {
        const MapSample map = parse_map_spec(space, *spec.map);
        DistortionOptions dopts;
        dopts.seed = spec.seed;
        const auto a = analyze_distortion(map, dopts);
        const auto J = volume_derivative(map);
        rep.rows.push_back({"H_global", a.H_global});
        rep.rows.push_back({"volume_ratio_min", a.volume_ratio_min});
        rep.rows.push_back({"volume_ratio_max", a.volume_ratio_max});
        rep.rows.push_back({"jacobian_mass_error", J.mass_error});
      }
      break;
    }
  }
  rep.kind = spec.kind;
  rep.spec_hash = spec_hash(spec);
  rep.summary["spec"] = canonical_json(spec);
  return rep;
}

}  // namespace hajnorm
