#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "kinhom/cell_transport.hpp"
#include "kinhom/collision.hpp"
#include "kinhom/errors.hpp"

namespace kinhom {

/// Cell drift-diffusion operator L(rho) = -<v.grad_y Q^{-1}(v.grad_y(psi rho)), psi*>
/// and its adjoint.
///
/// L is assembled from the same spectral derivative and collision blocks as
/// T^eta, so every solvability condition of the eta-cascade holds exactly at
/// the discrete level and L* is the plain transpose. The divergence form
/// -div(D grad rho) + div(U rho) built from the tabulated D(y), U(y) is kept
/// as a cross-check. The Nyquist mode of the cell grid is split off as in
/// CellTransport.
class EffectiveOperator {
 public:
  explicit EffectiveOperator(std::shared_ptr<const CollisionBank> bank, double range_tol = 1e-11)
      : bank_(std::move(bank)), range_tol_(range_tol) {
    const auto& K = bank_->kernel();
    const PhaseSpace& ps = bank_->space();
    const int nc = ps.n_cells, nv = ps.n_v, d = ps.dim, n = ps.size();
    A_ = streaming_matrix(K);
    a_norm_ = A_.cwiseAbs().rowwise().sum().maxCoeff();
    for (int a = 0; a < d; ++a) Dc_.push_back(cell_diff_matrix(K.cg, a));

    // M_psi: cell function -> rho psi ; Pi_star: phase field -> <g, psi*>_v
    Mat Mpsi = Mat::Zero(n, nc), Pis = Mat::Zero(nc, n), Pi = Mat::Zero(nc, n);
    const Vec psi = bank_->psi();
    for (int j = 0; j < nc; ++j)
      for (int k = 0; k < nv; ++k) {
        Mpsi(j * nv + k, j) = psi(j * nv + k);
        Pis(j, j * nv + k) = ps.w(k) * K.psi_star(k);
        Pi(j, j * nv + k) = ps.w(k) * psi(j * nv + k);
      }
    // local no-drift: <v.grad(rho psi), psi*>_v must vanish for every rho
    const Mat drift = Pis * A_ * Mpsi;
    const double dscale = (A_ * Mpsi).cwiseAbs().maxCoeff();
    if (drift.cwiseAbs().maxCoeff() > range_tol_ * std::max(1.0, dscale)) {
      Eigen::Index r, c;
      drift.cwiseAbs().maxCoeff(&r, &c);
      throw CompatibilityViolation("int v psi psi* dnu", drift(r, c));
    }
    const Mat AM = A_ * Mpsi;
    const Mat Pc = nyquist_filter(K.cg);
    L_ = -(Pis * A_) * (bank_->block_G() * AM);
    L_ = L_ * Pc + L_.diagonal().cwiseAbs().mean() * (Mat::Identity(nc, nc) - Pc);

    // coefficient fields
    D_field_.assign(nc, Mat::Zero(d, d));
    U_field_ = Mat::Zero(nc, d);
    Mat dpsi = Mat::Zero(n, d);
    for (int a = 0; a < d; ++a)
      for (int k = 0; k < nv; ++k) {
        Vec col(nc);
        for (int j = 0; j < nc; ++j) col(j) = psi(j * nv + k);
        const Vec dc = Dc_[a] * col;
        for (int j = 0; j < nc; ++j) dpsi(j * nv + k, a) = dc(j);
      }
    for (int j = 0; j < nc; ++j) {
      const Mat& Gj = bank_->G(j);
      const Vec pj = psi.segment(j * nv, nv);
      Vec vgrad = Vec::Zero(nv);
      for (int a = 0; a < d; ++a) vgrad += K.vg.nodes.col(a).cwiseProduct(dpsi.col(a).segment(j * nv, nv));
      const Vec gu = Gj * vgrad;
      for (int a = 0; a < d; ++a) {
        const Vec wa = ps.w.cwiseProduct(K.psi_star).cwiseProduct(K.vg.nodes.col(a));
        for (int b = 0; b < d; ++b) D_field_[j](a, b) = wa.dot(Gj * K.vg.nodes.col(b).cwiseProduct(pj));
        U_field_(j, a) = -wa.dot(gu);
      }
      const Mat Ds = 0.5 * (D_field_[j] + D_field_[j].transpose());
      Eigen::SelfAdjointEigenSolver<Mat> es(Ds);
      if (!(es.eigenvalues().minCoeff() > 0))
        throw EllipticityFailure("D(y) is not positive definite at cell point " + std::to_string(j));
    }
    Ldiv_ = Mat::Zero(nc, nc);
    for (int a = 0; a < d; ++a) {
      for (int b = 0; b < d; ++b) {
        Vec dab(nc);
        for (int j = 0; j < nc; ++j) dab(j) = D_field_[j](a, b);
        Ldiv_ -= Dc_[a] * dab.asDiagonal() * Dc_[b];
      }
      Ldiv_ += Dc_[a] * U_field_.col(a).asDiagonal();
    }

    // rho0: [L 1; 1'/n 0] [rho; l] = [0; 1]
    Mat B = Mat::Zero(nc + 1, nc + 1);
    B.topLeftCorner(nc, nc) = L_;
    B.block(0, nc, nc, 1).setOnes();
    B.block(nc, 0, 1, nc).setConstant(1.0 / nc);
    {
      Eigen::JacobiSVD<Mat> svd(L_);
      const Vec& s = svd.singularValues();
      if (nc > 1 && s(nc - 2) < 1e-8 * s(0)) throw KernelNotSimple("kernel of L is not one-dimensional");
    }
    Eigen::PartialPivLU<Mat> lu(B);
    Vec rhs = Vec::Zero(nc + 1);
    rhs(nc) = 1.0;
    rho0_ = lu.solve(rhs).head(nc);
    if (!(rho0_.minCoeff() > 0)) throw NonPositive("rho0 changes sign");

    Mat Bl = Mat::Zero(nc + 1, nc + 1);
    Bl.topLeftCorner(nc, nc) = L_;
    Bl.block(0, nc, nc, 1) = rho0_;
    Bl.block(nc, 0, 1, nc).setConstant(1.0 / nc);
    lu_l_.compute(Bl);
    Mat Bs = Mat::Zero(nc + 1, nc + 1);
    Bs.topLeftCorner(nc, nc) = L_.transpose();
    Bs.block(0, nc, nc, 1).setOnes();
    Bs.block(nc, 0, 1, nc).setConstant(1.0 / nc);
    lu_s_.compute(Bs);
  }

  const CollisionBank& bank() const { return *bank_; }
  std::shared_ptr<const CollisionBank> bank_ptr() const { return bank_; }
  const PhaseSpace& space() const { return bank_->space(); }
  const Mat& streaming() const { return A_; }
  const Mat& cell_diff(int a) const { return Dc_[a]; }

  const Mat& L() const { return L_; }
  Mat Lstar() const { return L_.transpose(); }
  const Mat& L_divergence() const { return Ldiv_; }
  const std::vector<Mat>& D_field() const { return D_field_; }
  const Mat& U_field() const { return U_field_; }
  const Vec& rho0() const { return rho0_; }

  /// Bound on |A f| from |f|, the reference size for compatibility defects.
  double stream_scale(const CellField& f) const { return a_norm_ * f.cwiseAbs().maxCoeff(); }

  Vec apply_L(const Vec& rho) const { return L_ * rho; }
  Vec apply_Lstar(const Vec& rho) const { return L_.transpose() * rho; }

  /// Solve L u = f with mean-zero gauge; needs int f dy = 0.
  Vec l_pinv(const Vec& f, const std::string& what = "int f dy", double scale = 0) const {
    const double d = f.mean();
    if (std::abs(d) > range_tol_ * std::max(rms(f), scale)) throw RangeViolation(what, d);
    return solve(lu_l_, L_, rho0_, f);
  }

  /// Solve L* u = f with mean-zero gauge; needs int f rho0 dy = 0.
  Vec lstar_pinv(const Vec& f, const std::string& what = "int f rho0 dy", double scale = 0) const {
    const double d = f.dot(rho0_) / f.size();
    if (std::abs(d) > range_tol_ * std::max(rms(f), scale)) throw RangeViolation(what, d);
    return solve(lu_s_, L_.transpose(), Vec::Ones(f.size()), f);
  }

 private:
  static double rms(const Vec& f) { return f.size() ? f.norm() / std::sqrt(double(f.size())) : 0.0; }

  static Vec solve(const Eigen::PartialPivLU<Mat>& lu, const Mat& op, const Vec& border, const Vec& f) {
    const int n = static_cast<int>(f.size());
    Vec rhs(n + 1);
    rhs.head(n) = f;
    rhs(n) = 0;
    const Vec x = lu.solve(rhs);
    const Vec u = x.head(n);
    const double fn = f.norm();
    if (fn > 0) {
      const double res = (op * u + x(n) * border - f).norm() / fn;
      if (res > 1e-11) throw SolverStall("cell elliptic solve missed its residual target", res);
    }
    return u;
  }

  std::shared_ptr<const CollisionBank> bank_;
  double range_tol_;
  Mat A_;
  double a_norm_ = 0;
  std::vector<Mat> Dc_;
  Mat L_, Ldiv_;
  std::vector<Mat> D_field_;
  Mat U_field_;
  Vec rho0_;
  Eigen::PartialPivLU<Mat> lu_l_, lu_s_;
};

/// Every term of the small-eta expansions of psi^eta, chi^eta, chi^{eta*},
/// and the effective tensors. Vector quantities carry one column per
/// velocity component.
struct ExpansionBundle {
  int dim = 1;
  int n_cells = 0;
  int n_v = 0;
  Mat v_nodes;
  Vec v_weights;
  Vec psi_star;
  CellField psi;

  Vec rho0, rho2;
  CellField psi0, psi1, psi2;
  Mat theta_m1, theta_0;                     // cell x component
  VectorCellField chi_m1, chi0;
  Mat theta_s_m1, theta_s_0, theta_s_1;      // cell x component
  VectorCellField chi_s_m1, chi_s0_bar, chi_s0, chi_s1;
  Mat Dtensor, D1tensor, Dtensor_theorem;

  std::vector<Mat> D_field;
  Mat U_field;
  std::map<std::string, std::string> meta;

  PhaseSpace space() const {
    PhaseSpace ps;
    ps.n_v = n_v;
    ps.n_cells = n_cells;
    ps.dim = dim;
    ps.w = v_weights;
    ps.mu.resize(n_cells * n_v);
    ps.vel.resize(n_cells * n_v, dim);
    for (int j = 0; j < n_cells; ++j)
      for (int k = 0; k < n_v; ++k) {
        ps.mu(j * n_v + k) = v_weights(k) / n_cells;
        ps.vel.row(j * n_v + k) = v_nodes.row(k);
      }
    return ps;
  }
};

namespace detail {
inline Vec pi_star(const EffectiveOperator& E, const CellField& g) {
  return E.space().vmoment(g, E.bank().psi_star_field());
}
inline Vec pi_psi(const EffectiveOperator& E, const CellField& g) { return E.space().vmoment(g, E.bank().psi()); }
}  // namespace detail

/// psi^0 = rho0 psi, psi^1 = Q^{-1}(-v.grad psi^0), psi^2 = Q^{-1}(-v.grad psi^1) + rho2 psi.
inline void expand_psi(const EffectiveOperator& E, ExpansionBundle& b) {
  const PhaseSpace& ps = E.space();
  const CollisionBank& Q = E.bank();
  const Mat& A = E.streaming();
  b.rho0 = E.rho0();
  b.psi0 = ps.scale_cells(b.rho0, Q.psi());
  // defects are judged against the leading-order size, not against terms
  // that vanish identically in one dimension
  const double ref = E.stream_scale(b.psi0);
  auto sc = [&](const CellField& f) { return std::max(ref, E.stream_scale(f)); };
  b.psi1 = Q.apply_G(-(A * b.psi0), "int v.grad_y(psi0) psi* dnu", sc(b.psi0));
  const CellField h = Q.apply_G(-(A * b.psi1), "int v.grad_y(psi1) psi* dnu", sc(b.psi1));
  const CellField h2 = Q.apply_G(-(A * h), "int v.grad_y Q^{-1}(v.grad_y psi1) psi* dnu", sc(h));
  b.rho2 = E.l_pinv(-detail::pi_star(E, A * h2), "rho2 source mean", sc(h2));
  b.psi2 = h + ps.scale_cells(b.rho2, Q.psi());
}

/// theta^{-1}, chi^{-1} = theta^{-1} psi, theta^0 and chi^0.
inline void expand_chi(const EffectiveOperator& E, ExpansionBundle& b) {
  const PhaseSpace& ps = E.space();
  const CollisionBank& Q = E.bank();
  const Mat& A = E.streaming();
  const int d = ps.dim, n = ps.size(), nc = ps.n_cells;
  b.theta_m1.resize(nc, d);
  b.theta_0.resize(nc, d);
  b.chi_m1.resize(n, d);
  b.chi0.resize(n, d);
  const double ref = E.stream_scale(b.psi0);
  auto sc = [&](const CellField& f) { return std::max(ref, E.stream_scale(f)); };
  for (int c = 0; c < d; ++c) {
    const CellField vpsi0 = ps.times_v(b.psi0, c);
    const CellField g0 = Q.apply_G(vpsi0, "int v psi psi* dnu");
    const Vec th = E.l_pinv(detail::pi_star(E, ps.times_v(b.psi1, c) - A * g0), "theta^{-1} source mean",
                               sc(g0) + b.psi1.cwiseAbs().maxCoeff());
    b.theta_m1.col(c) = th;
    b.chi_m1.col(c) = ps.scale_cells(th, Q.psi());
    const CellField chat0 = Q.apply_G(vpsi0 - A * b.chi_m1.col(c), "chi^0 source moment",
                                          sc(b.chi_m1.col(c)) + b.psi0.cwiseAbs().maxCoeff());
    const CellField chat1 =
        Q.apply_G(ps.times_v(b.psi1, c) - A * chat0, "theta^{-1} compatibility (order eta)",
                  sc(chat0) + b.psi1.cwiseAbs().maxCoeff());
    const Vec th0 = E.l_pinv(detail::pi_star(E, ps.times_v(b.psi2, c) - A * chat1), "theta^0 source mean",
                                sc(chat1) + b.psi2.cwiseAbs().maxCoeff());
    b.theta_0.col(c) = th0;
    b.chi0.col(c) = chat0 + ps.scale_cells(th0, Q.psi());
  }
}

/// theta^{*-1}, chi^{*0} (with its theta-free part), theta^{*0}, chi^{*1}, theta^{*1}.
inline void expand_chi_star(const EffectiveOperator& E, ExpansionBundle& b) {
  const PhaseSpace& ps = E.space();
  const CollisionBank& Q = E.bank();
  const Mat& A = E.streaming();
  const int d = ps.dim, n = ps.size(), nc = ps.n_cells;
  const CellField pst = Q.psi_star_field();
  b.theta_s_m1.resize(nc, d);
  b.theta_s_0.resize(nc, d);
  b.theta_s_1.resize(nc, d);
  b.chi_s_m1.resize(n, d);
  b.chi_s0_bar.resize(n, d);
  b.chi_s0.resize(n, d);
  b.chi_s1.resize(n, d);
  const double ref = E.stream_scale(pst);
  auto sc = [&](const CellField& f) { return std::max(ref, E.stream_scale(f)); };
  for (int c = 0; c < d; ++c) {
    const CellField vps = ps.times_v(pst, c);
    const CellField g0 = Q.apply_Gstar(vps, "int v psi* psi dnu");
    const Vec tm1 = E.lstar_pinv(detail::pi_psi(E, A * g0), "theta^{*-1} source moment", sc(g0));
    b.theta_s_m1.col(c) = tm1;
    b.chi_s_m1.col(c) = ps.scale_cells(tm1, pst);
    const CellField bar0 = Q.apply_Gstar(vps + A * b.chi_s_m1.col(c), "chi^{*0} source moment",
                                           sc(b.chi_s_m1.col(c)) + vps.cwiseAbs().maxCoeff());
    b.chi_s0_bar.col(c) = bar0;
    const CellField g1 = Q.apply_Gstar(A * bar0, "theta^{*-1} compatibility (order eta)", sc(bar0));
    const Vec t0 = E.lstar_pinv(detail::pi_psi(E, A * g1), "theta^{*0} source moment", sc(g1));
    b.theta_s_0.col(c) = t0;
    b.chi_s0.col(c) = bar0 + ps.scale_cells(t0, pst);
    const CellField chat1 = Q.apply_Gstar(A * b.chi_s0.col(c), "theta^{*-1} compatibility (order eta)",
                                              sc(b.chi_s0.col(c)));
    const CellField g2 = Q.apply_Gstar(A * chat1, "theta^{*0} compatibility (order eta^2)", sc(chat1));
    const Vec t1 = E.lstar_pinv(detail::pi_psi(E, A * g2), "theta^{*1} source moment", sc(g2));
    b.theta_s_1.col(c) = t1;
    b.chi_s1.col(c) = chat1 + ps.scale_cells(t1, pst);
  }
}

/// D = <chi*0, v psi0> + <chi*-1, v psi1>;
/// D1 = <chi*-1, v psi2> + <chi*0, v psi1> + <chi*1, v psi0>.
inline void effective_tensors(ExpansionBundle& b) {
  const PhaseSpace ps = b.space();
  const int d = b.dim;
  b.Dtensor.resize(d, d);
  b.D1tensor.resize(d, d);
  b.Dtensor_theorem.resize(d, d);
  const CellField pst = ps.tile(b.psi_star);
  const CellField rpsi = ps.scale_cells(b.rho0, b.psi);
  for (int a = 0; a < d; ++a)
    for (int c = 0; c < d; ++c) {
      b.Dtensor(a, c) = ps.inner(b.chi_s0.col(a), ps.times_v(b.psi0, c)) +
                        ps.inner(b.chi_s_m1.col(a), ps.times_v(b.psi1, c));
      b.Dtensor_theorem(a, c) = ps.inner(b.chi_s0_bar.col(a), ps.times_v(rpsi, c)) +
                                ps.inner(ps.scale_cells(b.theta_s_m1.col(a), pst), ps.times_v(b.psi1, c));
      b.D1tensor(a, c) = ps.inner(b.chi_s_m1.col(a), ps.times_v(b.psi2, c)) +
                         ps.inner(b.chi_s0.col(a), ps.times_v(b.psi1, c)) +
                         ps.inner(b.chi_s1.col(a), ps.times_v(b.psi0, c));
    }
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (b.Dtensor + b.Dtensor.transpose()));
  if (!(es.eigenvalues().minCoeff() > 0)) throw IndefiniteTensor("effective diffusion tensor is not positive definite");
}

/// Full expansion bundle for one kernel.
inline ExpansionBundle build_bundle(const EffectiveOperator& E) {
  ExpansionBundle b;
  const PhaseSpace& ps = E.space();
  const auto& K = E.bank().kernel();
  b.dim = ps.dim;
  b.n_cells = ps.n_cells;
  b.n_v = ps.n_v;
  b.v_nodes = K.vg.nodes;
  b.v_weights = K.vg.weights;
  b.psi_star = K.psi_star;
  b.psi = E.bank().psi();
  b.D_field = E.D_field();
  b.U_field = E.U_field();
  expand_psi(E, b);
  expand_chi(E, b);
  expand_chi_star(E, b);
  effective_tensors(b);
  return b;
}

}  // namespace kinhom
