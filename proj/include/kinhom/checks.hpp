#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "kinhom/cell_transport.hpp"
#include "kinhom/config.hpp"
#include "kinhom/effective.hpp"

namespace kinhom {

struct CheckResult {
  std::string name;
  double value = 0;
  double tol = 0;
  bool pass = false;
  std::string note;
};

struct CheckReport {
  std::vector<CheckResult> results;
  bool pass() const {
    for (const auto& r : results)
      if (!r.pass) return false;
    return !results.empty();
  }
};

namespace detail {

inline Vec random_field(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> nd;
  Vec f(n);
  for (int i = 0; i < n; ++i) f(i) = nd(rng);
  return f;
}

}  // namespace detail

/// Property battery over one configured kernel: kernel symmetries,
/// equilibria, normalizations, no-drift moments, parities, adjointness and
/// the two routes to the effective tensor. The first exception raised by a
/// construction step is reported as a failed check named after the step.
inline CheckReport run_property_checks(const ExperimentConfig& cfg) {
  CheckReport rep;
  auto add = [&](const std::string& name, double value, double tol, std::string note = {}) {
    rep.results.push_back({name, value, tol, std::abs(value) <= tol, std::move(note)});
  };
  auto fail = [&](const std::string& name, const std::exception& e) {
    rep.results.push_back({name, std::numeric_limits<double>::quiet_NaN(), 0, false, e.what()});
  };
  std::mt19937_64 rng(cfg.seed);

  ScatteringKernel K;
  try {
    K = kernel_from_config(cfg);
  } catch (const std::exception& e) {
    fail("kernel construction", e);
    return rep;
  }
  const AssumptionReport ar = check_assumptions(K);
  add("sigma parity", std::max(ar.sigma_y_asym, ar.sigma_v_asym), 1e-12 * ar.sigma_max);
  add("Sigma parity", std::max(ar.Sigma_y_asym, ar.Sigma_v_asym), 1e-12 * ar.sigma_max);
  add("Q* psi* residual", ar.qstar_residual, 1e-13 * std::max(1.0, ar.sigma_max));
  add("int psi*^2 dnu - 1", ar.psi_star_norm_defect, 1e-12);

  std::shared_ptr<const CollisionBank> bank;
  try {
    bank = std::make_shared<const CollisionBank>(K, cfg.tol.compat);
  } catch (const std::exception& e) {
    fail("collision operators", e);
    return rep;
  }
  const PhaseSpace& ps = bank->space();
  const CellField pst = bank->psi_star_field();
  add("min psi*", std::min(0.0, K.psi_star.minCoeff()), 0.0);
  add("psi* parity", ps.parity_residual(pst, false, true, 1.0), 1e-12);
  add("min psi", std::min(0.0, bank->psi().minCoeff()), 0.0);
  add("int psi psi* dnu - 1", (ps.vmoment(bank->psi(), pst).array() - 1.0).abs().maxCoeff(), 1e-12);
  const Vec drift = ps.vmoment(ps.times_v(bank->psi(), 0), pst);
  add("int v psi psi* dnu (max over y)", drift.cwiseAbs().maxCoeff(), 1e-12);
  add("psi parity", std::max(ps.parity_residual(bank->psi(), true, false, 1.0),
                             ps.parity_residual(bank->psi(), false, true, 1.0)),
      1e-10);

  std::shared_ptr<const EffectiveOperator> E;
  try {
    E = std::make_shared<const EffectiveOperator>(bank);
  } catch (const std::exception& e) {
    fail("effective operator", e);
    return rep;
  }
  add("min rho0", std::min(0.0, E->rho0().minCoeff()), 0.0);
  add("mean rho0 - 1", E->rho0().mean() - 1.0, 1e-12);
  add("rho0 parity", cell_parity_residual(E->rho0(), ps.y_flip, 1.0), 1e-10);

  try {
    const ExpansionBundle b = build_bundle(*E);
    add("theta^{-1} parity", cell_parity_residual(b.theta_m1.col(0), ps.y_flip, -1.0), 1e-11);
    add("D two routes", (b.Dtensor - b.Dtensor_theorem).norm(), 1e-11 * std::max(1.0, b.Dtensor.norm()));
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (b.Dtensor + b.Dtensor.transpose()));
    add("sym D not positive definite", std::max(0.0, -es.eigenvalues().minCoeff()), 0.0);
    add("|theta^0|", b.theta_0.cwiseAbs().maxCoeff(), 1e-10);
  } catch (const std::exception& e) {
    fail("expansion bundle", e);
    return rep;
  }

  const double eta = cfg.eta_sequence.empty() ? 0.1 : cfg.eta_sequence.front();
  try {
    const CellTransport T(bank, eta, cfg.tol.cell_solve);
    const CellField& pe = T.psi_eta();
    add("min psi^eta", std::min(0.0, pe.minCoeff()), 0.0);
    add("int int psi^eta psi* - 1", ps.inner(pe, pst) - 1.0, 1e-12);
    add("int int v psi^eta psi*", ps.inner(ps.times_v(pe, 0), pst), 1e-12);
    // only the joint reflection commutes with eta v.grad_y
    add("psi^eta parity (y, v) -> (-y, -v)", ps.parity_residual(pe, true, true, 1.0), 1e-10);
    add("T* psi*", T.apply_adjoint(pst).cwiseAbs().maxCoeff(), 1e-12 * T.adjoint_matrix().cwiseAbs().maxCoeff());

    double adj = 0, res = 0, par = 0;
    for (int r = 0; r < 10; ++r) {
      const Vec f = detail::random_field(rng, ps.size()), g = detail::random_field(rng, ps.size());
      const double lhs = ps.inner(T.apply(f), g), rhs = ps.inner(f, T.apply_adjoint(g));
      adj = std::max(adj, std::abs(lhs - rhs) / (ps.norm(T.apply(f)) * ps.norm(g)));
      Vec h = f - pst * ps.inner(f, pst);
      // (y, v) -> (-y, -v) even part
      h = 0.5 * (h + ps.flipped(h, true, true));
      const CellField R = T.teta_pinv(h);
      res = std::max(res, (T.apply(R) - h).norm() / h.norm());
      par = std::max(par, ps.parity_residual(R, true, true, 1.0) / R.cwiseAbs().maxCoeff());
    }
    add("adjointness of T^eta (relative)", adj, 1e-11);
    add("T^eta inverse residual (relative)", res, 1e-10);
    add("parity transfer through T^eta inverse", par, 1e-10);
  } catch (const std::exception& e) {
    fail("cell transport", e);
  }
  return rep;
}

}  // namespace kinhom
