#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "kinhom/cell_transport.hpp"
#include "kinhom/config.hpp"
#include "kinhom/effective.hpp"
#include "kinhom/fit.hpp"
#include "kinhom/macro.hpp"
#include "kinhom/transport.hpp"

namespace kinhom {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kReportSchema = 1;

/// Two-scale approximant on the torus at y = x/alpha mod 1:
///   n00 rho0 psi
///   + eta [n00 psi1 + n01 rho0 psi]
///   + (eps/eta) [-theta^{-1} psi dn00/dx + n1m1 rho0 psi].
inline Mat compose_approximant(const ExpansionBundle& b, const LimitDensities& d, double eps, double eta,
                               const MacroGrid& mg) {
  if (b.dim != 1) throw ConfigError("the approximant is assembled in one dimension");
  const int nv = b.n_v, nc = b.n_cells;
  if (mg.points_per_cell() != nc) throw ResolutionError("points per cell must equal the bundle's cell grid");
  const PhaseSpace ps = b.space();
  const CellField rpsi = ps.scale_cells(b.rho0, b.psi);
  const CellField tpsi = ps.scale_cells(b.theta_m1.col(0), b.psi);
  const MacroField n00x = spectral_derivative(d.n00, mg.period, 1);
  const double r = eps / eta;
  Mat f(mg.n_x, nv);
  for (int i = 0; i < mg.n_x; ++i) {
    const int s = (i % nc) * nv;
    f.row(i) = (d.n00(i) * rpsi.segment(s, nv) +
                eta * (d.n00(i) * b.psi1.segment(s, nv) + d.n01(i) * rpsi.segment(s, nv)) +
                r * (-n00x(i) * tpsi.segment(s, nv) + d.n1m1(i) * rpsi.segment(s, nv)))
                   .transpose();
  }
  return f;
}

struct StudyPoint {
  double epsilon = 0;
  double eta = 0;
  double alpha = 0;
  int cells = 0;
  int n_x = 0;
  double error_L2 = std::numeric_limits<double>::quiet_NaN();
  double ratio = std::numeric_limits<double>::quiet_NaN();
  double residual = std::numeric_limits<double>::quiet_NaN();
  double expansion_remainder = std::numeric_limits<double>::quiet_NaN();
  double apriori_ratio = std::numeric_limits<double>::quiet_NaN();
  double floor = std::numeric_limits<double>::quiet_NaN();
  bool floor_flag = false;
  double seconds = 0;
  std::string error;
};

struct ConvergenceReport {
  std::string name;
  std::string config_hash;
  std::string version = kVersion;
  std::vector<StudyPoint> points;
  SlopeFit fit;
  std::map<std::string, bool> criteria;
  double closed_form_residual = std::numeric_limits<double>::quiet_NaN();
  std::string report_hash;

  bool all_pass() const {
    for (const auto& [k, v] : criteria)
      if (!v) return false;
    return true;
  }
};

/// Cell-level artifacts shared by all sweep points of one kernel.
struct CellArtifacts {
  ScatteringKernel kernel;
  std::shared_ptr<const CollisionBank> bank;
  std::shared_ptr<const EffectiveOperator> effective;
  ExpansionBundle bundle;
};

inline CellArtifacts build_cell_artifacts(const ExperimentConfig& cfg, int n_y_override = 0) {
  CellArtifacts a;
  a.kernel = kernel_from_config(cfg, n_y_override);
  a.bank = std::make_shared<const CollisionBank>(a.kernel, cfg.tol.compat);
  a.effective = std::make_shared<const EffectiveOperator>(a.bank);
  a.bundle = build_bundle(*a.effective);
  a.bundle.meta["config_hash"] = config_hash(cfg);
  a.bundle.meta["kernel_family"] = cfg.kernel.family;
  a.bundle.meta["version"] = kVersion;
  return a;
}

namespace detail {

struct PointOutcome {
  double error = 0;
  double residual = 0;
  Mat f;
  Mat approx;
  MacroGrid grid;
};

inline int commensurate_cells(const SweepPoint& p, double L) {
  const double a = p.epsilon / p.eta;
  const int N = static_cast<int>(std::lround(L / a));
  if (N < 1 || std::abs(a * N - L) > 1e-9 * L)
    throw ConfigError("alpha = eps/eta is not commensurate with the torus length");
  return N;
}

inline PointOutcome solve_point(const ExperimentConfig& cfg, const CellArtifacts& art, const SweepPoint& p,
                                double residual_tol = 0) {
  const int N = commensurate_cells(p, cfg.period);
  const int ppc = art.kernel.cg.n;
  const int nx = N * ppc;
  if (nx > cfg.max_n_x * 2) throw ResolutionError("n_x = " + std::to_string(nx) + " exceeds the configured maximum");
  PointOutcome o;
  o.grid = MacroGrid(cfg.period, nx, N);
  const LimitDensities dens = limit_densities(art.bundle, cfg.source, o.grid);
  o.approx = compose_approximant(art.bundle, dens, p.epsilon, p.eta, o.grid);
  TransportProblem tp{p.epsilon, p.eta, art.kernel, o.grid, cfg.source, {}};
  tp.options.min_points_per_cell = cfg.min_points_per_cell;
  tp.options.residual_tol = residual_tol > 0 ? residual_tol : cfg.tol.transport_residual;
  const TransportSolution sol = solve_transport(tp);
  o.f = sol.f;
  o.residual = sol.residual;
  o.error = torus_norm(o.f - o.approx, art.kernel.vg.weights, cfg.period);
  return o;
}

inline std::string num(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

}  // namespace detail

inline json report_to_json(const ConvergenceReport& r, bool with_timing = true) {
  json j;
  j["schema"] = kReportSchema;
  j["name"] = r.name;
  j["version"] = r.version;
  j["config_hash"] = r.config_hash;
  json pts = json::array();
  for (const auto& p : r.points) {
    json q = {{"epsilon", p.epsilon}, {"eta", p.eta},     {"alpha", p.alpha},
              {"cells", p.cells},     {"n_x", p.n_x},     {"error_L2", detail::num(p.error_L2)},
              {"ratio", detail::num(p.ratio)},             {"residual", detail::num(p.residual)},
              {"expansion_remainder", detail::num(p.expansion_remainder)},
              {"apriori_ratio", detail::num(p.apriori_ratio)},
              {"floor", detail::num(p.floor)},              {"floor_flag", p.floor_flag},
              {"error", p.error}};
    if (with_timing) q["seconds"] = p.seconds;
    pts.push_back(q);
  }
  j["points"] = pts;
  j["fit"] = {{"slope", detail::num(r.fit.slope)},
              {"ci_low", detail::num(r.fit.ci_low)},
              {"ci_high", detail::num(r.fit.ci_high)},
              {"points", r.fit.points}};
  j["criteria"] = r.criteria;
  j["closed_form_residual"] = detail::num(r.closed_form_residual);
  if (!r.report_hash.empty()) j["report_hash"] = r.report_hash;
  return j;
}

/// Full (eps, eta) sweep: direct transport solve, approximant, error, fits
/// and pass/fail flags.
inline ConvergenceReport run_convergence_study(const ExperimentConfig& cfg,
                                               const std::function<void(const std::string&)>& log = {}) {
  ConvergenceReport rep;
  rep.name = cfg.name;
  rep.config_hash = config_hash(cfg);
  if (cfg.sweep.empty()) {
    rep.report_hash = hex64(fnv1a(report_to_json(rep, false).dump()));
    return rep;
  }
  if (cfg.velocity.dim != 1) throw ConfigError("convergence studies are one-dimensional");

  const CellArtifacts art = build_cell_artifacts(cfg);
  rep.points.resize(cfg.sweep.size());
  std::vector<detail::PointOutcome> outcomes(cfg.sweep.size());
  std::atomic<size_t> next{0};
  std::mutex log_mu;
  auto worker = [&]() {
    for (size_t i = next++; i < cfg.sweep.size(); i = next++) {
      const SweepPoint sp = cfg.sweep[i];
      StudyPoint& pt = rep.points[i];
      pt.epsilon = sp.epsilon;
      pt.eta = sp.eta;
      pt.alpha = sp.epsilon / sp.eta;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        pt.cells = detail::commensurate_cells(sp, cfg.period);
        pt.n_x = pt.cells * art.kernel.cg.n;
        if (pt.n_x > cfg.max_n_x) throw ResolutionError("n_x exceeds the configured maximum");
        outcomes[i] = detail::solve_point(cfg, art, sp);
        pt.error_L2 = outcomes[i].error;
        pt.residual = outcomes[i].residual;
        pt.ratio = pt.error_L2 / (sp.eta + sp.epsilon / sp.eta);

        const CellTransport T(art.bank, sp.eta, cfg.tol.cell_solve);
        TransportProblem tp{sp.epsilon, sp.eta, art.kernel, outcomes[i].grid, cfg.source, {}};
        pt.apriori_ratio = apriori_check(tp, outcomes[i].f, T.psi_eta()).ratio;
        const EpsilonExpansion ex = epsilon_expansion_terms(T, cfg.source, outcomes[i].grid);
        const int nc = art.kernel.cg.n, nv = art.kernel.n_v();
        const double e = sp.epsilon;
        const Mat hil = ex.f0.on_torus(outcomes[i].grid, nc, nv) + e * ex.f1.on_torus(outcomes[i].grid, nc, nv) +
                        e * e * ex.f2.on_torus(outcomes[i].grid, nc, nv) +
                        e * e * e * ex.f3.on_torus(outcomes[i].grid, nc, nv);
        pt.expansion_remainder = torus_norm(outcomes[i].f - hil, art.kernel.vg.weights, cfg.period);
      } catch (const std::exception& ex) {
        pt.error = ex.what();
      }
      pt.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (log) {
        std::lock_guard<std::mutex> g(log_mu);
        std::ostringstream os;
        os << "eps=" << pt.epsilon << " eta=" << pt.eta << " error=" << pt.error_L2 << " ratio=" << pt.ratio
           << (pt.error.empty() ? "" : " [" + pt.error + "]") << " (" << std::fixed << std::setprecision(1)
           << pt.seconds << " s)";
        log(os.str());
      }
    }
  };
  {
    std::vector<std::thread> pool;
    const int nt = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(cfg.sweep.size())));
    for (int t = 1; t < nt; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
  }

  // discretization floor: error on a doubled cell grid. That grid doubles
  // the largest wavenumber, which puts the rounding of f itself near the
  // transport residual target, so the solve is only asked for 10x the target;
  // a 10% comparison of errors does not need more.
  bool floor_ran = cfg.floor_check == "none";
  double emin = std::numeric_limits<double>::infinity();
  size_t imin = 0;
  for (size_t i = 0; i < rep.points.size(); ++i)
    if (rep.points[i].error.empty() && rep.points[i].error_L2 < emin) {
      emin = rep.points[i].error_L2;
      imin = i;
    }
  if (cfg.floor_check != "none" && std::isfinite(emin)) {
    try {
      const CellArtifacts fine = build_cell_artifacts(cfg, 2 * cfg.n_y);
      for (size_t i = 0; i < rep.points.size(); ++i) {
        if (!rep.points[i].error.empty()) continue;
        if (cfg.floor_check == "finest" && i != imin) continue;
        const auto o = detail::solve_point(cfg, fine, cfg.sweep[i], 10 * cfg.tol.transport_residual);
        rep.points[i].floor = std::abs(o.error - rep.points[i].error_L2);
        rep.points[i].floor_flag = rep.points[i].floor > 0.1 * emin;
      }
      floor_ran = true;
    } catch (const std::exception& ex) {
      if (log) log(std::string("floor check skipped: ") + ex.what());
    }
  }

  std::vector<double> xs, ys, ratios;
  bool all_ok = true;
  for (const auto& p : rep.points) {
    if (!p.error.empty()) {
      all_ok = false;
      continue;
    }
    ratios.push_back(p.ratio);
    if (p.floor_flag) continue;
    xs.push_back(p.eta + p.epsilon / p.eta);
    ys.push_back(p.error_L2);
  }
  rep.fit = fit_loglog(xs, ys);
  bool dec = all_ok && ratios.size() >= 2;
  for (size_t i = 1; i < ratios.size(); ++i) dec = dec && ratios[i] < ratios[i - 1];
  rep.criteria["all_points_solved"] = all_ok;
  rep.criteria["ratio_strictly_decreasing"] = dec;
  bool floor_ok = floor_ran;
  for (const auto& p : rep.points) floor_ok = floor_ok && !p.floor_flag;
  rep.criteria["discretization_floor"] = floor_ok;

  // isotropic medium: the approximant collapses to n00(x) psi(v)
  if (cfg.kernel.family == "isotropic" && cfg.kernel.amplitude == 0.0 && all_ok) {
    double res = 0;
    for (size_t i = 0; i < rep.points.size(); ++i) {
      const auto& o = outcomes[i];
      const LimitDensities dens = limit_densities(art.bundle, cfg.source, o.grid);
      Mat closed(o.grid.n_x, art.kernel.n_v());
      for (int x = 0; x < o.grid.n_x; ++x) closed.row(x) = dens.n00(x) * art.bank->psi_at(0).transpose();
      res = std::max(res, (o.approx - closed).cwiseAbs().maxCoeff());
    }
    rep.closed_form_residual = res;
    rep.criteria["isotropic_closed_form"] = res <= 1e-12;
    bool halving = ratios.size() >= 2;
    for (size_t i = 1; i < ratios.size(); ++i) halving = halving && ratios[i] <= 0.5 * ratios[i - 1];
    rep.criteria["ratio_halves_per_refinement"] = halving;
  }
  rep.report_hash = hex64(fnv1a(report_to_json(rep, false).dump()));
  return rep;
}

inline void write_report_csv(const ConvergenceReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "epsilon,eta,alpha,error_L2,ratio,fitted_order,floor_flag\n";
  out << std::setprecision(12);
  for (const auto& p : r.points)
    out << p.epsilon << ',' << p.eta << ',' << p.alpha << ',' << p.error_L2 << ',' << p.ratio << ',' << r.fit.slope
        << ',' << (p.floor_flag ? 1 : 0) << '\n';
}

inline void write_report_json(const ConvergenceReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << report_to_json(r).dump(2) << '\n';
}

}  // namespace kinhom
