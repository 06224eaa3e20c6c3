#pragma once

#include <json.hpp>
#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "kinhom/errors.hpp"
#include "kinhom/grids.hpp"
#include "kinhom/kernel.hpp"
#include "kinhom/macro.hpp"

namespace kinhom {

using json = nlohmann::json;

struct SweepPoint {
  double epsilon = 0;
  double eta = 0;
};

struct Tolerances {
  double compat = 1e-11;
  double cell_solve = 1e-10;
  double transport_residual = 1e-9;
};

struct ExperimentConfig {
  std::string name = "study";
  VelocitySpec velocity;
  int n_y = 64;
  KernelSpec kernel;
  PsiStarSpec psi_star;
  SourceSpec source;
  double period = 1.0;
  int macro_n_x = 256;  // grid for standalone density solves
  int min_points_per_cell = 16;
  int max_n_x = 4096;
  std::vector<SweepPoint> sweep;
  std::vector<double> eta_sequence{0.2, 0.1, 0.05, 0.025};
  Tolerances tol;
  std::string floor_check = "finest";  // none | finest | all
  std::string out_dir = "out";
  std::string format = "csv";
  uint64_t seed = 12345;
  int jobs = 1;
};

/// 64-bit FNV-1a.
inline uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(uint64_t h) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

namespace detail {

inline json toml_to_json(const toml::node& n) {
  if (auto t = n.as_table()) {
    json j = json::object();
    for (auto&& [k, v] : *t) j[std::string(k.str())] = toml_to_json(v);
    return j;
  }
  if (auto a = n.as_array()) {
    json j = json::array();
    for (auto&& v : *a) j.push_back(toml_to_json(v));
    return j;
  }
  if (auto v = n.as_string()) return v->get();
  if (auto v = n.as_integer()) return v->get();
  if (auto v = n.as_floating_point()) return v->get();
  if (auto v = n.as_boolean()) return v->get();
  throw ConfigError("unsupported TOML value type");
}

template <typename T>
void get_opt(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

inline void require_keys(const json& j, const std::vector<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a table");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
  if (c.velocity.count <= 0 || c.velocity.count % 2) throw ConfigError("velocity.count must be even");
  if (!(c.velocity.v_min > 0) || c.velocity.v_max < c.velocity.v_min) throw ConfigError("bad velocity interval");
  if (c.n_y <= 0 || c.n_y % 2) throw ConfigError("cell.n_y must be even");
  if (!(c.period > 0)) throw ConfigError("macro.period must be positive");
  if (c.macro_n_x <= 0 || c.macro_n_x % 2) throw ConfigError("macro.n_x must be even");
  if (c.jobs < 1) throw ConfigError("jobs must be at least 1");
  if (c.format != "csv" && c.format != "json") throw ConfigError("format must be csv or json");
  if (c.floor_check != "none" && c.floor_check != "finest" && c.floor_check != "all")
    throw ConfigError("floor_check must be none, finest or all");
  for (const auto& p : c.sweep) {
    if (!(p.epsilon > 0) || !(p.eta > 0)) throw ConfigError("sweep points need positive epsilon and eta");
    const double a = p.epsilon / p.eta;
    if (!(p.eta < 1.0 && a < 1.0 && p.epsilon < a))
      throw ConfigError("sweep point violates eps < eps/eta < 1");
  }
  for (double e : c.eta_sequence)
    if (!(e > 0)) throw ConfigError("eta_sequence entries must be positive");
}

inline ExperimentConfig config_from_json(const json& j) {
  using detail::get_opt;
  ExperimentConfig c;
  detail::require_keys(j, {"name", "velocity", "cell", "kernel", "psi_star", "source", "macro", "sweep", "cell_study",
                           "tolerances", "output", "seed", "jobs"},
                       "config");
  get_opt(j, "name", c.name);
  get_opt(j, "seed", c.seed);
  get_opt(j, "jobs", c.jobs);
  if (j.contains("velocity")) {
    const auto& v = j["velocity"];
    detail::require_keys(v, {"dim", "family", "count", "v_min", "v_max"}, "[velocity]");
    get_opt(v, "dim", c.velocity.dim);
    get_opt(v, "family", c.velocity.family);
    get_opt(v, "count", c.velocity.count);
    get_opt(v, "v_min", c.velocity.v_min);
    get_opt(v, "v_max", c.velocity.v_max);
  }
  if (j.contains("cell")) {
    detail::require_keys(j["cell"], {"n_y"}, "[cell]");
    get_opt(j["cell"], "n_y", c.n_y);
  }
  if (j.contains("kernel")) {
    const auto& k = j["kernel"];
    detail::require_keys(k, {"family", "scale", "amplitude", "y_profile", "beta", "coupling_profile", "g", "g_in",
                             "drift", "table", "allow_asymmetric"},
                         "[kernel]");
    get_opt(k, "family", c.kernel.family);
    get_opt(k, "scale", c.kernel.scale);
    get_opt(k, "amplitude", c.kernel.amplitude);
    get_opt(k, "y_profile", c.kernel.y_profile);
    get_opt(k, "beta", c.kernel.beta);
    get_opt(k, "coupling_profile", c.kernel.coupling_profile);
    get_opt(k, "g", c.kernel.g);
    get_opt(k, "g_in", c.kernel.g_in);
    get_opt(k, "drift", c.kernel.drift);
    get_opt(k, "table", c.kernel.table);
    get_opt(k, "allow_asymmetric", c.kernel.allow_asymmetric);
  }
  if (j.contains("psi_star")) {
    const auto& p = j["psi_star"];
    detail::require_keys(p, {"kind", "c", "table"}, "[psi_star]");
    get_opt(p, "kind", c.psi_star.kind);
    get_opt(p, "c", c.psi_star.c);
    get_opt(p, "table", c.psi_star.table);
  }
  if (j.contains("source")) {
    const auto& s = j["source"];
    detail::require_keys(s, {"terms"}, "[source]");
    if (s.contains("terms")) {
      if (!s["terms"].is_array()) throw ConfigError("source.terms must be an array");
      for (const auto& t : s["terms"]) {
        detail::require_keys(t, {"amplitude", "x_profile", "x_mode", "y_profile", "y_mode", "v_profile"},
                             "[[source.terms]]");
        SourceTerm st;
        get_opt(t, "amplitude", st.amplitude);
        get_opt(t, "x_profile", st.x_profile);
        get_opt(t, "x_mode", st.x_mode);
        get_opt(t, "y_profile", st.y_profile);
        get_opt(t, "y_mode", st.y_mode);
        get_opt(t, "v_profile", st.v_profile);
        c.source.terms.push_back(st);
      }
    }
  }
  if (j.contains("macro")) {
    const auto& m = j["macro"];
    detail::require_keys(m, {"period", "n_x", "min_points_per_cell", "max_n_x"}, "[macro]");
    get_opt(m, "period", c.period);
    get_opt(m, "n_x", c.macro_n_x);
    get_opt(m, "min_points_per_cell", c.min_points_per_cell);
    get_opt(m, "max_n_x", c.max_n_x);
  }
  if (j.contains("sweep")) {
    const auto& s = j["sweep"];
    detail::require_keys(s, {"points", "rule", "epsilon", "floor_check"}, "[sweep]");
    get_opt(s, "floor_check", c.floor_check);
    if (s.contains("points")) {
      for (const auto& p : s["points"]) {
        if (!p.is_array() || p.size() != 2) throw ConfigError("sweep.points entries must be [epsilon, eta]");
        c.sweep.push_back({p[0].get<double>(), p[1].get<double>()});
      }
    }
    if (s.contains("rule")) {
      std::string rule;
      get_opt(s, "rule", rule);
      std::vector<double> eps;
      get_opt(s, "epsilon", eps);
      for (double e : eps) {
        if (rule == "sqrt")
          c.sweep.push_back({e, std::sqrt(e)});
        else if (rule == "cube")  // eps = eta^3
          c.sweep.push_back({e, std::cbrt(e)});
        else
          throw ConfigError("unknown sweep rule '" + rule + "'");
      }
    }
  }
  if (j.contains("cell_study")) {
    detail::require_keys(j["cell_study"], {"eta_sequence"}, "[cell_study]");
    get_opt(j["cell_study"], "eta_sequence", c.eta_sequence);
  }
  if (j.contains("tolerances")) {
    const auto& t = j["tolerances"];
    detail::require_keys(t, {"compat", "cell_solve", "transport_residual"}, "[tolerances]");
    get_opt(t, "compat", c.tol.compat);
    get_opt(t, "cell_solve", c.tol.cell_solve);
    get_opt(t, "transport_residual", c.tol.transport_residual);
  }
  if (j.contains("output")) {
    const auto& o = j["output"];
    detail::require_keys(o, {"dir", "format"}, "[output]");
    get_opt(o, "dir", c.out_dir);
    get_opt(o, "format", c.format);
  }
  validate(c);
  return c;
}

inline ExperimentConfig config_from_toml_string(const std::string& text) {
  try {
    const toml::table t = toml::parse(text);
    return config_from_json(detail::toml_to_json(t));
  } catch (const toml::parse_error& e) {
    throw ConfigError(std::string("TOML parse error: ") + std::string(e.description()));
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const bool is_json = path.size() >= 5 && path.substr(path.size() - 5) == ".json";
  if (is_json) {
    try {
      return config_from_json(json::parse(text));
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("JSON parse error: ") + e.what());
    }
  }
  return config_from_toml_string(text);
}

/// Canonical JSON form, used for hashing and provenance.
inline json config_to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["seed"] = c.seed;
  j["jobs"] = c.jobs;
  j["velocity"] = {{"dim", c.velocity.dim},
                   {"family", c.velocity.family},
                   {"count", c.velocity.count},
                   {"v_min", c.velocity.v_min},
                   {"v_max", c.velocity.v_max}};
  j["cell"] = {{"n_y", c.n_y}};
  j["kernel"] = {{"family", c.kernel.family},
                 {"scale", c.kernel.scale},
                 {"amplitude", c.kernel.amplitude},
                 {"y_profile", c.kernel.y_profile},
                 {"beta", c.kernel.beta},
                 {"coupling_profile", c.kernel.coupling_profile},
                 {"g", c.kernel.g},
                 {"g_in", c.kernel.g_in},
                 {"drift", c.kernel.drift},
                 {"table", c.kernel.table},
                 {"allow_asymmetric", c.kernel.allow_asymmetric}};
  j["psi_star"] = {{"kind", c.psi_star.kind}, {"c", c.psi_star.c}, {"table", c.psi_star.table}};
  json terms = json::array();
  for (const auto& t : c.source.terms)
    terms.push_back({{"amplitude", t.amplitude},
                     {"x_profile", t.x_profile},
                     {"x_mode", t.x_mode},
                     {"y_profile", t.y_profile},
                     {"y_mode", t.y_mode},
                     {"v_profile", t.v_profile}});
  j["source"] = {{"terms", terms}};
  j["macro"] = {{"period", c.period},
                {"n_x", c.macro_n_x},
                {"min_points_per_cell", c.min_points_per_cell},
                {"max_n_x", c.max_n_x}};
  json pts = json::array();
  for (const auto& p : c.sweep) pts.push_back({p.epsilon, p.eta});
  j["sweep"] = {{"points", pts}, {"floor_check", c.floor_check}};
  j["cell_study"] = {{"eta_sequence", c.eta_sequence}};
  j["tolerances"] = {
      {"compat", c.tol.compat}, {"cell_solve", c.tol.cell_solve}, {"transport_residual", c.tol.transport_residual}};
  j["output"] = {{"dir", c.out_dir}, {"format", c.format}};
  return j;
}

/// Hash of the experiment content. Worker count and output location do not change results and are left out.
inline std::string config_hash(const ExperimentConfig& c) {
  nlohmann::json j = config_to_json(c);
  j.erase("jobs");
  j.erase("output");
  return hex64(fnv1a(j.dump()));
}

/// Grids and kernel described by a config.
inline ScatteringKernel kernel_from_config(const ExperimentConfig& c, int n_y_override = 0) {
  const VelocityGrid vg = build_velocity_grid(c.velocity);
  const CellGrid cg(n_y_override > 0 ? n_y_override : c.n_y, c.velocity.dim);
  return build_kernel(c.kernel, c.psi_star, vg, cg);
}

}  // namespace kinhom
