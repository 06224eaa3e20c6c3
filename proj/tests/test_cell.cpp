#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numbers>
#include <random>

#include "kinhom/kinhom.hpp"
#include "oracles.hpp"

using namespace kinhom;
using namespace kinhom::testing;

namespace {

constexpr double kPi = std::numbers::pi;

struct Generic {
  ExperimentConfig cfg = generic_config(32);
  ScatteringKernel K = kernel_from_config(cfg);
  std::shared_ptr<const CollisionBank> bank = std::make_shared<const CollisionBank>(K);
};

const Generic& generic() {
  static const Generic g;
  return g;
}

}  // namespace

// ---------------------------------------------------------------- grids

TEST(Grids, GaussLegendreIsExactForDegree2nMinus1) {
  Vec x, w;
  gauss_legendre(4, 0.2, 1.0, x, w);
  for (int p = 0; p <= 7; ++p) {
    const double exact = (std::pow(1.0, p + 1) - std::pow(0.2, p + 1)) / (p + 1);
    double q = 0;
    for (int i = 0; i < 4; ++i) q += w(i) * std::pow(x(i), p);
    EXPECT_NEAR(q, exact, 1e-14) << "degree " << p;
  }
}

TEST(Grids, VelocityGridIsMirroredWithUnitMass) {
  VelocitySpec s;
  const VelocityGrid vg = build_velocity_grid(s);
  ASSERT_EQ(vg.size(), 8);
  EXPECT_NEAR(vg.weights.sum(), 1.0, 1e-15);
  const CellGrid cg(16);
  const ParityMaps m = parity_maps(vg, cg);
  for (int i = 0; i < 8; ++i) {
    EXPECT_EQ(m.v_flip[i], 7 - i);
    EXPECT_DOUBLE_EQ(vg.v(i), -vg.v(7 - i));
    EXPECT_GE(std::abs(vg.v(i)), 0.2);
    EXPECT_LE(std::abs(vg.v(i)), 1.0);
  }
  for (int j = 0; j < 16; ++j) EXPECT_EQ(m.y_flip[j], (16 - j) % 16);
}

TEST(Grids, RejectsBadSizes) {
  EXPECT_THROW(CellGrid(15), ConfigError);
  VelocitySpec s;
  s.count = 7;
  EXPECT_THROW(build_velocity_grid(s), ConfigError);
  s.count = 8;
  s.v_min = 0.0;
  EXPECT_THROW(build_velocity_grid(s), ConfigError);
  EXPECT_THROW(MacroGrid(1.0, 100, 3), ConfigError);
}

TEST(Grids, SpectralDerivativeIsExactBelowNyquist) {
  const int n = 32;
  const Mat D = spectral_diff_matrix(n);
  for (int m = 1; m < n / 2; ++m) {
    Vec f(n), df(n);
    for (int j = 0; j < n; ++j) {
      f(j) = std::sin(2 * kPi * m * j / n);
      df(j) = 2 * kPi * m * std::cos(2 * kPi * m * j / n);
    }
    EXPECT_LT((D * f - df).cwiseAbs().maxCoeff(), 1e-11 * m) << "mode " << m;
  }
  EXPECT_LT((D + D.transpose()).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Grids, NyquistFilterIsAProjectorKillingTheAlternatingMode) {
  const CellGrid cg(16);
  const Mat P = nyquist_filter(cg);
  Vec alt(16), c(16);
  for (int j = 0; j < 16; ++j) {
    alt(j) = (j % 2 == 0) ? 1.0 : -1.0;
    c(j) = std::cos(2 * kPi * 3 * j / 16.0) + 0.5;
  }
  EXPECT_LT((P * alt).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((P * c - c).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((P * P - P).cwiseAbs().maxCoeff(), 1e-14);
}

// ---------------------------------------------------------------- kernel

TEST(Kernel, SeparableEntriesFollowTheFormula) {
  const auto& g = generic();
  const auto& K = g.K;
  for (int j : {0, 5, 17}) {
    const double y = j / 32.0;
    for (int a = 0; a < 8; ++a)
      for (int b = 0; b < 8; ++b) {
        const double vb = K.vg.v(b);
        const double want = 8.0 * (1 + 0.3 * std::cos(2 * kPi * y)) * (1 + 0.5 * std::cos(2 * kPi * y) * vb * vb);
        EXPECT_NEAR(K.sigma[j](a, b), want, 1e-13);
      }
  }
}

TEST(Kernel, TotalCrossSectionBalancesPsiStar) {
  const auto& K = generic().K;
  const Vec& w = K.vg.weights;
  for (int j = 0; j < K.n_cells(); ++j)
    for (int k = 0; k < K.n_v(); ++k) {
      double s = 0;
      for (int kp = 0; kp < K.n_v(); ++kp) s += K.sigma[j](kp, k) * w(kp) * K.psi_star(kp);
      EXPECT_NEAR(K.sigma_total(j, k), s / K.psi_star(k), 1e-13);
    }
  const AssumptionReport r = check_assumptions(K);
  EXPECT_TRUE(r.pass);
  EXPECT_LE(r.qstar_residual, 1e-13 * r.sigma_max);
  EXPECT_NEAR(w.dot(K.psi_star.cwiseAbs2()), 1.0, 1e-14);
}

TEST(Kernel, IsotropicHasConstantCrossSections) {
  const ScatteringKernel K = kernel_from_config(isotropic_config(8));
  const AssumptionReport r = check_assumptions(K);
  EXPECT_EQ(r.sigma_y_asym, 0.0);
  EXPECT_EQ(r.sigma_v_asym, 0.0);
  EXPECT_LT((K.sigma_total.array() - 1.0).abs().maxCoeff(), 1e-15);
  EXPECT_LT((K.psi_star.array() - 1.0).abs().maxCoeff(), 1e-15);
}

TEST(Kernel, RejectsNegativeOrAsymmetricKernels) {
  ExperimentConfig c = generic_config(16);
  c.kernel.amplitude = 1.5;
  EXPECT_THROW(kernel_from_config(c), KernelRejected);
  c = generic_config(16);
  c.kernel.coupling_profile = "sin";
  EXPECT_THROW(kernel_from_config(c), KernelRejected);
  c = generic_config(16);
  c.kernel.scale = -1;
  EXPECT_THROW(kernel_from_config(c), KernelRejected);
}

TEST(Kernel, DriftFamilyBreaksVelocityParity) {
  const ExperimentConfig c = load_config(KINHOM_SOURCE_DIR "/configs/drift.toml");
  const ScatteringKernel K = kernel_from_config(c);
  const AssumptionReport r = check_assumptions(K);
  EXPECT_FALSE(r.pass);
  EXPECT_GT(r.sigma_v_asym, 0.1);
}

// ---------------------------------------------------------------- collision

TEST(Collision, PseudoInversesMatchConstrainedLeastSquares) {
  const auto& g = generic();
  const auto& K = g.K;
  const Vec& w = K.vg.weights;
  std::mt19937_64 rng(7);
  for (int j : {0, 3, 11, 20}) {
    const Vec psi = g.bank->psi_at(j);
    for (int r = 0; r < 5; ++r) {
      const Vec q = make_compatible(gaussian(rng, 8), psi, K.psi_star, w);
      const Vec u = g.bank->q_pinv(j, q);
      const Vec u_ref = constrained_lsq(g.bank->Q(j), q, w.cwiseProduct(K.psi_star));
      EXPECT_LT(rel(u, u_ref), 1e-10);
      EXPECT_LT((g.bank->Q(j) * u_ref - q).norm(), 1e-12 * q.norm());

      const Vec qs = make_compatible(gaussian(rng, 8), K.psi_star, psi, w);
      const Vec us = g.bank->qstar_pinv(j, qs);
      EXPECT_LT(rel(us, constrained_lsq(g.bank->Qstar(j), qs, w.cwiseProduct(psi))), 1e-10);
    }
  }
}

TEST(Collision, IncompatibleDataIsRejected) {
  const auto& g = generic();
  EXPECT_THROW(g.bank->q_pinv(0, g.K.psi_star), CompatibilityViolation);
  EXPECT_THROW(g.bank->qstar_pinv(0, g.bank->psi_at(0)), CompatibilityViolation);
}

TEST(Collision, LocalEquilibriumIsPositiveAndNormalized) {
  const auto& g = generic();
  const PhaseSpace& ps = g.bank->space();
  EXPECT_GT(g.bank->psi().minCoeff(), 0.0);
  EXPECT_LT((ps.vmoment(g.bank->psi(), g.bank->psi_star_field()).array() - 1).abs().maxCoeff(), 1e-13);
  for (int j = 0; j < ps.n_cells; ++j)
    EXPECT_LT((g.bank->Q(j) * g.bank->psi_at(j)).norm(), 1e-13 * g.bank->Q(j).norm());
  // the asymmetric exchange makes psi genuinely y-dependent
  EXPECT_GT((g.bank->psi_at(0) - g.bank->psi_at(16)).norm(), 1e-3);
}

TEST(Collision, IsotropicClosedForms) {
  ExperimentConfig c = isotropic_config(8);
  c.kernel.scale = 2.5;
  const CollisionBank bank(kernel_from_config(c));
  EXPECT_LT((bank.psi().array() - 1).abs().maxCoeff(), 1e-14);
  EXPECT_NEAR(bank.spectral_gap(), 2.5, 1e-12);
  // Q u = s (u - <u>) so Q^{-1} g = g / s on mean-free g
  Vec gv(8);
  gv << 1, -2, 3, 0.5, -0.5, -3, 2, -1;
  gv = make_compatible(gv, Vec::Ones(8), Vec::Ones(8), bank.space().w);
  EXPECT_LT(rel(bank.q_pinv(0, gv), gv / 2.5), 1e-13);
}

// ---------------------------------------------------------------- cell transport

TEST(CellTransport, BorderedSolvesMatchConstrainedLeastSquares) {
  const auto& g = generic();
  const CellTransport T(g.bank, 0.1);
  const PhaseSpace& ps = T.space();
  std::mt19937_64 rng(11);
  for (int r = 0; r < 5; ++r) {
    const Vec q = make_compatible(gaussian(rng, ps.size()), T.psi_eta(), T.psi_star(), ps.mu);
    EXPECT_LT(rel(T.teta_pinv(q), constrained_lsq(T.matrix(), q, ps.mu.cwiseProduct(T.psi_star()))), 1e-10);
    const Vec qs = make_compatible(gaussian(rng, ps.size()), T.psi_star(), T.psi_eta(), ps.mu);
    EXPECT_LT(rel(T.tstar_pinv(qs), constrained_lsq(T.adjoint_matrix(), qs, ps.mu.cwiseProduct(T.psi_eta()))),
              1e-10);
  }
  EXPECT_THROW(T.teta_pinv(T.psi_star()), CompatibilityViolation);
}

TEST(CellTransport, GlobalEquilibriumIsInTheKernel) {
  const auto& g = generic();
  for (double eta : {0.2, 0.05}) {
    const CellTransport T(g.bank, eta);
    const PhaseSpace& ps = T.space();
    EXPECT_GT(T.psi_eta().minCoeff(), 0.0);
    EXPECT_NEAR(ps.inner(T.psi_eta(), T.psi_star()), 1.0, 1e-12);
    EXPECT_LT(T.apply(T.psi_eta()).norm(), 1e-11 * T.matrix().norm());
    EXPECT_LT(T.apply_adjoint(T.psi_star()).norm(), 1e-11 * T.matrix().norm());
  }
}

TEST(CellTransport, AdjointIsTheWeightedTranspose) {
  const auto& g = generic();
  const CellTransport T(g.bank, 0.1);
  const PhaseSpace& ps = T.space();
  std::mt19937_64 rng(3);
  for (int r = 0; r < 5; ++r) {
    const Vec f = gaussian(rng, ps.size()), h = gaussian(rng, ps.size());
    const double a = ps.inner(T.apply(f), h), b = ps.inner(f, T.apply_adjoint(h));
    EXPECT_NEAR(a, b, 1e-11 * std::abs(a) + 1e-11);
  }
}

TEST(CellTransport, IsotropicCorrectorIsVOverSigma) {
  ExperimentConfig c = isotropic_config(16);
  c.kernel.scale = 2.0;
  auto bank = std::make_shared<const CollisionBank>(kernel_from_config(c));
  const CellTransport T(bank, 0.1);
  const PhaseSpace& ps = T.space();
  EXPECT_LT((T.psi_eta().array() - 1).abs().maxCoeff(), 1e-12);
  const Vec chi = T.chi().col(0);
  EXPECT_LT((chi - ps.vel.col(0) / 2.0).cwiseAbs().maxCoeff(), 1e-12);
  const double D = ps.w.dot(bank->kernel().vg.nodes.col(0).cwiseAbs2()) / 2.0;
  EXPECT_NEAR(T.D_eta(T.chi_star())(0, 0), D, 1e-12);
}

// ---------------------------------------------------------------- effective

TEST(Effective, EllipticPseudoInversesMatchConstrainedLeastSquares) {
  const auto& g = generic();
  const EffectiveOperator E(g.bank);
  const int nc = E.space().n_cells;
  const Vec ones = Vec::Ones(nc);
  std::mt19937_64 rng(5);
  for (int r = 0; r < 5; ++r) {
    const Vec f = make_compatible(gaussian(rng, nc), E.rho0(), ones, ones);
    EXPECT_LT(rel(E.l_pinv(f), constrained_lsq(E.L(), f, ones)), 1e-10);
    const Vec fs = make_compatible(gaussian(rng, nc), ones, E.rho0(), ones);
    EXPECT_LT(rel(E.lstar_pinv(fs), constrained_lsq(E.Lstar(), fs, ones)), 1e-10);
  }
  EXPECT_THROW(E.l_pinv(ones), RangeViolation);
}

TEST(Effective, Rho0IsAPositiveEvenUnitMassNullVector) {
  const auto& g = generic();
  const EffectiveOperator E(g.bank);
  const Vec& r = E.rho0();
  EXPECT_GT(r.minCoeff(), 0.0);
  EXPECT_NEAR(r.mean(), 1.0, 1e-13);
  EXPECT_LT((E.L() * r).norm(), 1e-11 * E.L().norm());
  EXPECT_LT(cell_parity_residual(r, E.space().y_flip, 1.0), 1e-11);
  EXPECT_GT(r.maxCoeff() - r.minCoeff(), 0.05);
}

TEST(Effective, ExpansionTermsSatisfyTheirCellEquations) {
  const auto& g = generic();
  const EffectiveOperator E(g.bank);
  const ExpansionBundle b = build_bundle(E);
  const Mat& A = E.streaming();
  const PhaseSpace& ps = E.space();
  const CellField pst = g.bank->psi_star_field();
  // Q psi1 = -v.grad psi0, with <psi1, psi*>_v = 0 at every y
  EXPECT_LT((g.bank->apply_Q(b.psi1) + A * b.psi0).norm(), 1e-10 * (A * b.psi0).norm());
  EXPECT_LT(ps.vmoment(b.psi1, pst).cwiseAbs().maxCoeff(), 1e-12);
  // Q* chi*^{-1} = 0 and mean-free thetas
  EXPECT_LT(g.bank->apply_Qstar(b.chi_s_m1.col(0)).norm(), 1e-11 * b.chi_s_m1.norm() + 1e-14);
  EXPECT_LT(std::abs(b.theta_m1.col(0).mean()), 1e-12);
  EXPECT_LT((b.Dtensor - b.Dtensor_theorem).norm(), 1e-11);
  EXPECT_GT(b.Dtensor(0, 0), 0.0);
}

TEST(Effective, IsotropicTensorIsSecondMomentOverSigma) {
  ExperimentConfig c = isotropic_config(16);
  c.kernel.scale = 3.0;
  auto bank = std::make_shared<const CollisionBank>(kernel_from_config(c));
  const EffectiveOperator E(bank);
  const ExpansionBundle b = build_bundle(E);
  const auto& vg = bank->kernel().vg;
  const double D = vg.weights.dot(vg.nodes.col(0).cwiseAbs2()) / 3.0;
  EXPECT_NEAR(b.Dtensor(0, 0), D, 1e-13);
  EXPECT_NEAR(b.D1tensor(0, 0), 0.0, 1e-13);
  EXPECT_LT((E.rho0().array() - 1).abs().maxCoeff(), 1e-13);
}

TEST(Effective, DriftKernelFailsTheNoDriftCondition) {
  const ExperimentConfig c = load_config(KINHOM_SOURCE_DIR "/configs/drift.toml");
  auto bank = std::make_shared<const CollisionBank>(kernel_from_config(c));
  EXPECT_THROW(EffectiveOperator E(bank), CompatibilityViolation);
}

// ---------------------------------------------------------------- checks

TEST(Checks, GenericBatteryPasses) {
  const CheckReport r = run_property_checks(generic_config(32));
  for (const auto& x : r.results) EXPECT_TRUE(x.pass) << x.name << " " << x.value << " " << x.note;
}

TEST(Checks, DriftBatteryNamesTheMoment) {
  const CheckReport r = run_property_checks(load_config(KINHOM_SOURCE_DIR "/configs/drift.toml"));
  EXPECT_FALSE(r.pass());
  bool named = false;
  for (const auto& x : r.results)
    if (!x.pass && x.note.find("int v psi psi* dnu") != std::string::npos) named = true;
  EXPECT_TRUE(named);
}
