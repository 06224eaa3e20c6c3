#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "kinhom/kinhom.hpp"

namespace fs = std::filesystem;
using namespace kinhom;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<uint64_t> seed;
  std::string format;
  int jobs = 0;
};

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = load_config(c.config);
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (c.seed) cfg.seed = *c.seed;
  if (!c.format.empty()) cfg.format = c.format;
  if (c.jobs > 0) cfg.jobs = c.jobs;
  validate(cfg);
  fs::create_directories(cfg.out_dir);
  return cfg;
}

void print_tensor(const char* name, const Mat& m) {
  std::cout << name << " =";
  for (Eigen::Index i = 0; i < m.size(); ++i) std::cout << ' ' << std::setprecision(15) << m(i);
  std::cout << '\n';
}

int cmd_cell(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const CellArtifacts art = build_cell_artifacts(cfg);
  const std::string stem = (fs::path(cfg.out_dir) / "bundle").string();
  save_bundle(art.bundle, stem);
  std::cout << "bundle written to " << stem << ".{json,bin}\n";
  print_tensor("D", art.bundle.Dtensor);
  print_tensor("D1", art.bundle.D1tensor);
  print_tensor("D (theorem route)", art.bundle.Dtensor_theorem);
  std::cout << "max |theta^0| = " << art.bundle.theta_0.cwiseAbs().maxCoeff() << '\n';
  std::cout << "rho0 in [" << art.bundle.rho0.minCoeff() << ", " << art.bundle.rho0.maxCoeff() << "]\n";

  std::ofstream est((fs::path(cfg.out_dir) / "estimates.csv").string());
  est << "eta,norm_global,norm_local,eta_norm_chi\n" << std::setprecision(12);
  const PhaseSpace& ps = art.bank->space();
  const CellField pst = art.bank->psi_star_field();
  for (double eta : cfg.eta_sequence) {
    const CellTransport T(art.bank, eta, cfg.tol.cell_solve);
    // y-dependent density with zero global moment, then a field with zero
    // moment at every y
    Vec rho(ps.n_cells);
    for (int j = 0; j < ps.n_cells; ++j) rho(j) = std::cos(2 * std::numbers::pi * j / ps.n_cells);
    const CellField g_glob = ps.scale_cells(rho, pst);
    const CellField g_loc = ps.scale_cells(rho, ps.times_v(pst, 0));
    est << eta << ',' << ps.norm(T.teta_pinv(g_glob)) << ',' << ps.norm(T.teta_pinv(g_loc)) << ','
        << eta * ps.norm(T.chi().col(0)) << '\n';
  }
  return 0;
}

int cmd_macro(const Common& c, const std::string& bundle) {
  const ExperimentConfig cfg = load(c);
  ExpansionBundle b;
  if (!bundle.empty()) {
    b = load_bundle(bundle);
  } else {
    b = build_cell_artifacts(cfg).bundle;
  }
  const MacroGrid mg(cfg.period, cfg.macro_n_x, 1);
  const LimitDensities d = limit_densities(b, cfg.source, mg);
  print_tensor("D", b.Dtensor);
  print_tensor("D1", b.D1tensor);
  const std::string path = (fs::path(cfg.out_dir) / "densities.csv").string();
  std::ofstream out(path);
  out << "x,n00,n01,n1m1,S1m1\n" << std::setprecision(15);
  for (int i = 0; i < mg.n_x; ++i)
    out << mg.x(i) << ',' << d.n00(i) << ',' << d.n01(i) << ',' << d.n1m1(i) << ',' << d.S1m1(i) << '\n';
  std::cout << "densities written to " << path << '\n';
  return 0;
}

int cmd_transport(const Common& c, double eps, double eta) {
  ExperimentConfig cfg = load(c);
  if (!(eps > 0) || !(eta > 0)) throw ConfigError("--epsilon and --eta are required");
  const SweepPoint sp{eps, eta};
  const CellArtifacts art = build_cell_artifacts(cfg);
  const auto o = detail::solve_point(cfg, art, sp);
  std::cout << "n_x = " << o.grid.n_x << ", cells = " << o.grid.cells << '\n';
  std::cout << "relative residual = " << o.residual << '\n';
  std::cout << "||f - approximant|| = " << o.error << ", ratio = " << o.error / (eta + eps / eta) << '\n';
  const std::string path = (fs::path(cfg.out_dir) / "transport.csv").string();
  std::ofstream out(path);
  out << "x";
  for (int k = 0; k < o.f.cols(); ++k) out << ",f" << k;
  out << '\n' << std::setprecision(15);
  for (int i = 0; i < o.f.rows(); ++i) {
    out << o.grid.x(i);
    for (int k = 0; k < o.f.cols(); ++k) out << ',' << o.f(i, k);
    out << '\n';
  }
  std::cout << "solution written to " << path << '\n';
  return 0;
}

int cmd_study(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const ConvergenceReport r = run_convergence_study(cfg, [](const std::string& s) { std::cerr << s << '\n'; });
  const std::string path = (fs::path(cfg.out_dir) / ("report." + cfg.format)).string();
  if (cfg.format == "json")
    write_report_json(r, path);
  else
    write_report_csv(r, path);
  std::cout << "report written to " << path << " (hash " << r.report_hash << ")\n";
  std::cout << "fitted order " << r.fit.slope << " [" << r.fit.ci_low << ", " << r.fit.ci_high << "]\n";
  for (const auto& [k, v] : r.criteria) std::cout << (v ? "PASS " : "FAIL ") << k << '\n';
  return r.all_pass() ? 0 : 1;
}

int cmd_check(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const CheckReport r = run_property_checks(cfg);
  for (const auto& x : r.results) {
    std::cout << (x.pass ? "PASS " : "FAIL ") << x.name;
    if (x.note.empty())
      std::cout << ": " << std::setprecision(3) << std::scientific << x.value << " (tol " << x.tol << ")"
                << std::defaultfloat;
    else
      std::cout << ": " << x.note;
    std::cout << '\n';
  }
  return r.pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-parameter diffusion-homogenization limits of linear kinetic transport"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  Common c;
  std::string bundle;
  double eps = 0, eta = 0;

  auto common = [&](CLI::App* s) {
    s->add_option("--config", c.config, "TOML or JSON experiment file")->required()->check(CLI::ExistingFile);
    s->add_option("--out", c.out, "output directory");
    s->add_option("--seed", c.seed, "random seed");
    s->add_option("--format", c.format, "report format")->check(CLI::IsMember({"csv", "json"}));
    s->add_option("--jobs", c.jobs, "worker threads");
  };
  auto* cell = app.add_subcommand("cell", "cell problems, expansion bundle and estimate tables");
  common(cell);
  auto* macro = app.add_subcommand("macro", "limit densities on the macroscopic torus");
  common(macro);
  macro->add_option("--bundle", bundle, "reuse a saved bundle (path without extension)");
  auto* transport = app.add_subcommand("transport", "single heterogeneous transport solve");
  common(transport);
  transport->add_option("--epsilon", eps, "mean free path")->required();
  transport->add_option("--eta", eta, "ratio of mean free path to period")->required();
  auto* study = app.add_subcommand("study", "(epsilon, eta) sweep against the two-scale approximant");
  common(study);
  auto* check = app.add_subcommand("check", "property battery on the configured kernel");
  common(check);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*cell) return cmd_cell(c);
    if (*macro) return cmd_macro(c, bundle);
    if (*transport) return cmd_transport(c, eps, eta);
    if (*study) return cmd_study(c);
    if (*check) return cmd_check(c);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
