#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "kinhom/collision.hpp"
#include "kinhom/errors.hpp"
#include "kinhom/fit.hpp"

namespace kinhom {

/// Streaming operator sum_a v_a d/dy_a on the phase space (dense, spectral).
inline Mat streaming_matrix(const ScatteringKernel& K) {
  const PhaseSpace ps(K);
  const int nc = ps.n_cells, nv = ps.n_v;
  Mat A = Mat::Zero(ps.size(), ps.size());
  for (int a = 0; a < K.cg.dim; ++a) {
    const Mat D = cell_diff_matrix(K.cg, a);
    for (int j = 0; j < nc; ++j)
      for (int l = 0; l < nc; ++l) {
        if (D(j, l) == 0.0) continue;
        for (int k = 0; k < nv; ++k) A(j * nv + k, l * nv + k) += D(j, l) * K.vg.nodes(k, a);
      }
  }
  return A;
}

/// Phase-space version of the Nyquist filter (velocity index untouched).
inline Mat phase_nyquist_filter(const ScatteringKernel& K) {
  const Mat Pc = nyquist_filter(K.cg);
  const int nc = K.n_cells(), nv = K.n_v();
  Mat P = Mat::Zero(nc * nv, nc * nv);
  for (int j = 0; j < nc; ++j)
    for (int l = 0; l < nc; ++l)
      if (Pc(j, l) != 0.0)
        for (int k = 0; k < nv; ++k) P(j * nv + k, l * nv + k) = Pc(j, l);
  return P;
}

/// T^eta = eta v.grad_y + Q on Y x V and its adjoint -eta v.grad_y + Q*.
///
/// The operators act on fields without Nyquist content in y: with an even
/// grid the spectral derivative cannot see that mode, so it is split off
/// as P Q P + (I - P) s, s > 0.
///
/// All inverses are bordered dense solves:
///   psi^eta:  [T  psi*; (mu psi*)'  0] [psi; l] = [0; 1]
///   T^{-1}:   [T  psi^eta; (mu psi*)'  0],  gauge <R, psi*> = 0
///   T*^{-1}:  [T* psi*; (mu psi^eta)' 0],   gauge <R, psi^eta> = 0
class CellTransport {
 public:
  CellTransport(std::shared_ptr<const CollisionBank> bank, double eta, double solve_tol = 1e-10)
      : bank_(std::move(bank)), eta_(eta), solve_tol_(solve_tol) {
    if (!(eta > 0)) throw ConfigError("eta must be positive");
    const auto& K = bank_->kernel();
    const PhaseSpace& ps = bank_->space();
    const int n = ps.size();
    A_ = streaming_matrix(K);
    const Mat P = phase_nyquist_filter(K);
    const double s = K.sigma_total.mean();
    const Mat Pn = s * (Mat::Identity(n, n) - P);
    T_ = eta_ * A_ + P * bank_->block_Q() * P + Pn;
    Ts_ = -eta_ * A_ + P * bank_->block_Qstar() * P + Pn;
    psi_star_ = bank_->psi_star_field();

    Mat B = Mat::Zero(n + 1, n + 1);
    B.topLeftCorner(n, n) = T_;
    B.block(0, n, n, 1) = psi_star_;
    B.block(n, 0, 1, n) = ps.mu.cwiseProduct(psi_star_).transpose();
    Eigen::PartialPivLU<Mat> lu(B);
    rcond_ = lu.rcond();
    if (!(rcond_ > 1e-15)) throw KernelNotSimple("global transport kernel is not one-dimensional");
    Vec rhs = Vec::Zero(n + 1);
    rhs(n) = 1.0;
    psi_eta_ = lu.solve(rhs).head(n);
    if (n <= 2048) {
      Eigen::BDCSVD<Mat> svd(T_);
      const Vec& s = svd.singularValues();
      if (n > 1 && s(n - 2) < 1e-8 * s(0))
        throw KernelNotSimple("second smallest singular value of T^eta is " + std::to_string(s(n - 2)));
    }
    if (psi_eta_.mean() < 0) psi_eta_ = -psi_eta_;
    if (!(psi_eta_.minCoeff() > 0)) throw NonPositive("global equilibrium psi^eta changes sign");

    Mat Bt = Mat::Zero(n + 1, n + 1);
    Bt.topLeftCorner(n, n) = T_;
    Bt.block(0, n, n, 1) = psi_eta_;
    Bt.block(n, 0, 1, n) = ps.mu.cwiseProduct(psi_star_).transpose();
    lu_t_.compute(Bt);

    Mat Bs = Mat::Zero(n + 1, n + 1);
    Bs.topLeftCorner(n, n) = Ts_;
    Bs.block(0, n, n, 1) = psi_star_;
    Bs.block(n, 0, 1, n) = ps.mu.cwiseProduct(psi_eta_).transpose();
    lu_s_.compute(Bs);
  }

  double eta() const { return eta_; }
  const CollisionBank& bank() const { return *bank_; }
  std::shared_ptr<const CollisionBank> bank_ptr() const { return bank_; }
  const PhaseSpace& space() const { return bank_->space(); }
  const Mat& matrix() const { return T_; }
  const Mat& adjoint_matrix() const { return Ts_; }
  const Mat& streaming() const { return A_; }
  double rcond() const { return rcond_; }

  const CellField& psi_eta() const { return psi_eta_; }
  const CellField& psi_star() const { return psi_star_; }

  CellField apply(const CellField& f) const { return T_ * f; }
  CellField apply_adjoint(const CellField& f) const { return Ts_ * f; }

  /// Solve T^eta R = g with <R, psi*> = 0.
  CellField teta_pinv(const CellField& g, const std::string& what = "int int g psi* dnu dy") const {
    check(g, psi_star_, what);
    return bordered(lu_t_, T_, psi_eta_, g, "T^eta");
  }

  /// Solve T^{eta*} R = g with <R, psi^eta> = 0.
  CellField tstar_pinv(const CellField& g, const std::string& what = "int int g psi^eta dnu dy") const {
    check(g, psi_eta_, what);
    return bordered(lu_s_, Ts_, psi_star_, g, "T^eta*");
  }

  /// Bordered solve without the compatibility check: the result solves
  /// T R = g - psi^eta <g, psi*>.
  CellField teta_pinv_projected(const CellField& g) const { return bordered(lu_t_, T_, psi_eta_, g, "T^eta"); }

  /// chi^eta = T^{-1}(v psi^eta), one column per component.
  VectorCellField chi() const {
    const PhaseSpace& ps = space();
    VectorCellField X(ps.size(), ps.dim);
    for (int a = 0; a < ps.dim; ++a) X.col(a) = teta_pinv(ps.times_v(psi_eta_, a), "int int v psi^eta psi* dnu dy");
    return X;
  }

  /// chi^{eta*} = T*^{-1}(v psi*).
  VectorCellField chi_star() const {
    const PhaseSpace& ps = space();
    VectorCellField X(ps.size(), ps.dim);
    for (int a = 0; a < ps.dim; ++a)
      X.col(a) = tstar_pinv(ps.times_v(psi_star_, a), "int int v psi* psi^eta dnu dy");
    return X;
  }

  /// D^eta_ab = <chi*_a, v_b psi^eta>.
  Mat D_eta(const VectorCellField& chi_s) const {
    const PhaseSpace& ps = space();
    Mat D(ps.dim, ps.dim);
    for (int a = 0; a < ps.dim; ++a)
      for (int b = 0; b < ps.dim; ++b) D(a, b) = ps.inner(chi_s.col(a), ps.times_v(psi_eta_, b));
    return D;
  }

 private:
  void check(const CellField& g, const CellField& kernel_field, const std::string& what) const {
    const PhaseSpace& ps = space();
    const double d = ps.inner(g, kernel_field);
    if (std::abs(d) > bank_->tol_compat() * ps.norm(g)) throw CompatibilityViolation(what, d);
  }

  CellField bordered(const Eigen::PartialPivLU<Mat>& lu, const Mat& op, const CellField& border, const CellField& g,
                     const char* name) const {
    const int n = static_cast<int>(g.size());
    Vec rhs(n + 1);
    rhs.head(n) = g;
    rhs(n) = 0.0;
    Vec x = lu.solve(rhs);
    CellField u = x.head(n);
    const double gn = g.norm();
    if (gn > 0) {
      const double res = (op * u + x(n) * border - g).norm() / gn;
      if (res > solve_tol_) throw SolverStall(std::string(name) + " bordered solve missed its residual target", res);
    }
    return u;
  }

  std::shared_ptr<const CollisionBank> bank_;
  double eta_;
  double solve_tol_;
  double rcond_ = 0;
  Mat A_, T_, Ts_;
  CellField psi_eta_, psi_star_;
  Eigen::PartialPivLU<Mat> lu_t_, lu_s_;
};

struct EstimateRow {
  double eta = 0;
  double norm = 0;
};

struct EstimateProbe {
  std::vector<EstimateRow> rows;
  SlopeFit fit;
};

/// ||T^{eta,-1} g|| along an eta sequence and the fitted growth exponent.
/// `g_of` builds the right-hand side for each operator.
inline EstimateProbe probe_estimates(std::shared_ptr<const CollisionBank> bank,
                                     const std::function<CellField(const CellTransport&)>& g_of,
                                     const std::vector<double>& etas) {
  EstimateProbe p;
  std::vector<double> xs, ys;
  for (double eta : etas) {
    CellTransport T(bank, eta);
    const CellField R = T.teta_pinv(g_of(T));
    const double nr = T.space().norm(R);
    p.rows.push_back({eta, nr});
    xs.push_back(eta);
    ys.push_back(nr);
  }
  p.fit = fit_loglog(xs, ys);
  return p;
}

}  // namespace kinhom
