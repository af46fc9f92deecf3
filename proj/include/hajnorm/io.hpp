#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hajnorm/error.hpp"
#include "hajnorm/fields.hpp"
#include "hajnorm/gradients.hpp"
#include "hajnorm/optimize.hpp"
#include "hajnorm/qcmap.hpp"
#include "hajnorm/space.hpp"
#include "hajnorm/util.hpp"

namespace hajnorm {

using json = nlohmann::json;

// --- exponents ----------------------------------------------------------------

/// JSON has no infinity; exponents are written as numbers or the string "inf".
inline json exponent_to_json(double e) { return is_inf(e) ? json("inf") : json(e); }

inline double exponent_from_json(const json& j, const std::string& path) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string() && (j.get<std::string>() == "inf" || j.get<std::string>() == "infinity")) return kInf;
  throw ValidationError(path + ": expected a number or \"inf\"");
}

inline double parse_exponent(const std::string& s) {
  if (s == "inf" || s == "infinity") return kInf;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("bad exponent '" + s + "'");
  }
  if (used != s.size()) throw ConfigError("bad exponent '" + s + "'");
  return v;
}

// --- files ----------------------------------------------------------------------

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json read_json(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

/// Writes through a sibling temporary file and a rename, so readers never see a partial file.
inline void write_text_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  std::random_device rd;
  const fs::path tmp = target.string() + ".tmp" + std::to_string(rd());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw ConfigError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw ConfigError("cannot move '" + tmp.string() + "' to '" + path + "': " + ec.message());
  }
}

inline void write_json(const std::string& path, const json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

// --- spaces -----------------------------------------------------------------------

inline json to_json(const MetricMeasureSpace& space) {
  json j;
  j["topology"] = to_string(space.topology());
  j["hash"] = space.hash();
  j["measure"] = std::vector<double>(space.measures().begin(), space.measures().end());
  if (space.is_grid()) {
    const GridInfo& g = *space.grid();
    j["grid"] = {{"n_dim", g.n_dim}, {"resolution", g.resolution}, {"side_length", g.side_length}};
  }
  if (space.coord_dim() > 0) {
    json coords = json::array();
    for (std::size_t i = 0; i < space.size(); ++i) {
      const auto c = space.coords(i);
      coords.push_back(std::vector<double>(c.begin(), c.end()));
    }
    j["coords"] = std::move(coords);
    if (!space.periods().empty()) j["periods"] = space.periods();
  } else {
    json dist = json::array();
    for (std::size_t i = 0; i < space.size(); ++i) {
      std::vector<double> row(space.size());
      for (std::size_t k = 0; k < space.size(); ++k) row[k] = space.dist(i, k);
      dist.push_back(std::move(row));
    }
    j["dist"] = std::move(dist);
  }
  return j;
}

inline MetricMeasureSpace space_from_json(const json& j, const SpaceOptions& opts = {}) {
  if (!j.is_object()) throw ValidationError("space: expected an object");
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    try {
      return build_periodic_grid(g.at("n_dim").get<int>(), g.at("resolution").get<int>(),
                                 g.value("side_length", 1.0), opts);
    } catch (const json::exception& e) {
      throw ValidationError(std::string("space.grid: ") + e.what());
    }
  }
  if (!j.contains("measure")) throw ValidationError("space.measure: missing");
  const auto measure = j.at("measure").get<std::vector<double>>();
  if (j.contains("dist")) return build_point_cloud(j.at("dist").get<std::vector<std::vector<double>>>(), measure, opts);
  if (!j.contains("coords")) throw ValidationError("space: needs grid, dist or coords");
  const auto rows = j.at("coords").get<std::vector<std::vector<double>>>();
  if (rows.empty()) throw ValidationError("space.coords: empty");
  const std::size_t dim = rows.front().size();
  std::vector<double> flat;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != dim) throw ValidationError("space.coords[" + std::to_string(i) + "]: inconsistent dimension");
    flat.insert(flat.end(), rows[i].begin(), rows[i].end());
  }
  std::vector<double> periods;
  if (j.contains("periods")) periods = j.at("periods").get<std::vector<double>>();
  return build_torus_cloud(std::move(flat), static_cast<int>(dim), std::move(periods), measure, opts);
}

// --- fields and family specs ---------------------------------------------------------

inline json to_json(const ScalarField& f) { return {{"space", f.space}, {"values", f.values}}; }

inline ScalarField field_from_json(const json& j) {
  if (!j.is_object() || !j.contains("values")) throw ValidationError("field.values: missing");
  ScalarField f;
  f.space = j.value("space", std::string());
  f.values = j.at("values").get<std::vector<double>>();
  return f;
}

/// Field values must belong to `space`; a recorded hash that differs is rejected.
inline void check_field_space(const ScalarField& f, const MetricMeasureSpace& space) {
  if (f.values.size() != space.size()) throw ValidationError("field size does not match space");
  if (!f.space.empty() && f.space != space.hash())
    throw ValidationError("field was generated on space " + f.space + ", not " + space.hash());
}

inline json to_json(const FunctionFamilySpec& s) {
  return {{"kind", to_string(s.kind)},         {"count", s.count},
          {"degree", s.degree},                {"terms", s.terms},
          {"amplitude_min", s.amplitude_min},  {"amplitude_max", s.amplitude_max},
          {"decay", s.decay},                  {"rng_seed", s.rng_seed}};
}

inline FunctionFamilySpec family_from_json(const json& j, const std::string& path = "family") {
  if (!j.is_object()) throw ValidationError(path + ": expected an object");
  FunctionFamilySpec s;
  try {
    if (j.contains("kind")) s.kind = family_kind_from_string(j.at("kind").get<std::string>());
    s.count = j.value("count", s.count);
    s.degree = j.value("degree", s.degree);
    s.terms = j.value("terms", s.terms);
    s.amplitude_min = j.value("amplitude_min", s.amplitude_min);
    s.amplitude_max = j.value("amplitude_max", s.amplitude_max);
    s.decay = j.value("decay", s.decay);
    s.rng_seed = j.value("rng_seed", s.rng_seed);
  } catch (const json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ValidationError(path + ".kind: " + e.what());
  }
  return s;
}

// --- gradients ------------------------------------------------------------------------

inline json to_json(const GradientSequence& g) {
  json j;
  const ScaleWindow w = g.window();
  j["window"] = {w.k_min, w.k_max};
  j["points"] = g.points();
  json per = json::object();
  for (int k = w.k_min; k <= w.k_max; ++k) {
    const auto s = g.scale(k);
    per[std::to_string(k)] = std::vector<double>(s.begin(), s.end());
  }
  j["g"] = std::move(per);
  return j;
}

inline GradientSequence gradient_from_json(const json& j) {
  try {
    const auto w = j.at("window").get<std::vector<int>>();
    if (w.size() != 2) throw ValidationError("gradient.window: expected [kmin, kmax]");
    const auto& per = j.at("g");
    std::size_t points = j.contains("points") ? j.at("points").get<std::size_t>() : 0;
    if (!j.contains("points") && !per.empty()) points = per.begin()->size();
    GradientSequence g({w[0], w[1]}, points);
    for (auto it = per.begin(); it != per.end(); ++it) {
      const int k = std::stoi(it.key());
      const auto vals = it->get<std::vector<double>>();
      if (vals.size() != points) throw ValidationError("gradient.g." + it.key() + ": wrong length");
      for (std::size_t x = 0; x < points; ++x) g.at(k, x) = vals[x];
    }
    return g;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("gradient: ") + e.what());
  } catch (const DomainError& e) {
    throw ValidationError(std::string("gradient.g: ") + e.what());
  }
}

inline json to_json(const FeasibilityReport& r) {
  return {{"rho_min", is_inf(r.rho_min) ? json("inf") : json(r.rho_min)},
          {"worst_pair", {{"x", r.worst_pair.x}, {"y", r.worst_pair.y}, {"k", r.worst_pair.k}}},
          {"violated_count", r.violated_count},
          {"member", r.member()}};
}

// --- results ------------------------------------------------------------------------

inline json to_json(const OptimizationResult& r) {
  json j{{"upper_bound", r.upper_bound},
         {"iterations", r.iterations},
         {"tolerance", r.tolerance},
         {"converged", r.converged},
         {"heuristic", r.heuristic},
         {"repair_fallback", r.repair_fallback},
         {"method", r.method},
         {"gradient", to_json(r.gradient)}};
  if (r.oracle_gap) j["oracle_gap"] = *r.oracle_gap;
  return j;
}

inline json to_json(const DoublingReport& r) {
  return {{"C1_hat", r.C1_hat}, {"C2_hat", r.C2_hat}, {"n_hat", r.n_hat}, {"kappa_hat", r.kappa_hat},
          {"samples", r.samples.size()}};
}

inline json to_json(const MapAnalysis& a) {
  json j{{"scales", a.scales},
         {"skipped_scales", a.skipped_scales},
         {"H_global", a.H_global},
         {"H_hat", a.H_hat},
         {"volume_ratio", {a.volume_ratio_min, a.volume_ratio_max}},
         {"multiplicity_histogram", a.multiplicity_histogram}};
  json eta = json::array();
  for (const auto& e : a.eta_samples) eta.push_back({e.t, e.ratio});
  j["eta_samples"] = std::move(eta);
  return j;
}

inline json to_json(const VolumeDerivativeField& v) {
  return {{"J_hat", v.J_hat}, {"radius", v.radius}, {"flagged", v.flagged}, {"mass_error", v.mass_error}};
}

inline json to_json(const ReverseHolderReport& r) {
  return {{"r_grid", r.r_grid}, {"B_r", r.B_r}, {"R_f_hat", r.R_f_hat}, {"threshold", r.threshold}};
}

inline json to_json(const RatioReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"field_id", row.field_id},
                    {"s", row.s},
                    {"p", exponent_to_json(row.p)},
                    {"q", exponent_to_json(row.q)},
                    {"source_norm", row.source_norm},
                    {"target_norm", row.target_norm},
                    {"ratio", row.ratio}});
  json sums = json::array();
  for (const auto& s : r.summaries)
    sums.push_back({{"s", s.s},
                    {"p", exponent_to_json(s.p)},
                    {"q", exponent_to_json(s.q)},
                    {"min", s.min},
                    {"max", s.max},
                    {"geometric_mean", s.geometric_mean},
                    {"spread", s.spread()}});
  return {{"backend", r.backend}, {"map", r.map_family}, {"rows", rows}, {"summary", sums}};
}

// --- csv ---------------------------------------------------------------------------------

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string csv_cell(const json& v) {
  if (v.is_string()) return csv_escape(v.get<std::string>());
  if (v.is_null()) return "";
  return csv_escape(v.dump());
}

inline std::string ratio_csv(const RatioReport& r) {
  std::string out = "field_id,s,p,q,ratio\n";
  for (const auto& row : r.rows)
    out += std::to_string(row.field_id) + "," + csv_cell(row.s) + "," + csv_cell(exponent_to_json(row.p)) + "," +
           csv_cell(exponent_to_json(row.q)) + "," + csv_cell(row.ratio) + "\n";
  return out;
}

}  // namespace hajnorm
