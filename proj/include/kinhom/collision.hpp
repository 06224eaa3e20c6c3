#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include "kinhom/errors.hpp"
#include "kinhom/grids.hpp"
#include "kinhom/kernel.hpp"

namespace kinhom {

/// A scalar field sampled on Y x V, stored with velocity fastest:
/// index = j * n_v + k. Vector-valued fields are matrices with one column
/// per component.
using CellField = Vec;
using VectorCellField = Mat;

/// Layout and quadrature of Y x V.
struct PhaseSpace {
  int n_v = 0;
  int n_cells = 0;
  int dim = 1;
  Vec w;      // velocity weights
  Vec mu;     // phase weights w_k / n_cells
  Mat vel;    // (phase point, component)
  std::vector<int> v_flip, y_flip;

  PhaseSpace() = default;
  explicit PhaseSpace(const ScatteringKernel& K)
      : n_v(K.n_v()), n_cells(K.n_cells()), dim(K.vg.dim), w(K.vg.weights), v_flip(K.maps.v_flip),
        y_flip(K.maps.y_flip) {
    mu.resize(size());
    vel.resize(size(), dim);
    for (int j = 0; j < n_cells; ++j)
      for (int k = 0; k < n_v; ++k) {
        mu(idx(j, k)) = w(k) / n_cells;
        vel.row(idx(j, k)) = K.vg.nodes.row(k);
      }
  }

  int size() const { return n_cells * n_v; }
  int idx(int j, int k) const { return j * n_v + k; }

  double inner(const Vec& f, const Vec& g) const { return mu.cwiseProduct(f).dot(g); }
  double norm(const Vec& f) const { return std::sqrt(inner(f, f)); }

  /// Per cell point: sum_k w_k f(j,k) g(j,k).
  Vec vmoment(const Vec& f, const Vec& g) const {
    Vec m(n_cells);
    for (int j = 0; j < n_cells; ++j)
      m(j) = (w.cwiseProduct(f.segment(j * n_v, n_v))).dot(g.segment(j * n_v, n_v));
    return m;
  }

  /// Same velocity function at every cell point.
  Vec tile(const Vec& vfun) const {
    Vec f(size());
    for (int j = 0; j < n_cells; ++j) f.segment(j * n_v, n_v) = vfun;
    return f;
  }

  /// rho(y) f(y,v).
  Vec scale_cells(const Vec& rho, const Vec& f) const {
    Vec r(size());
    for (int j = 0; j < n_cells; ++j) r.segment(j * n_v, n_v) = rho(j) * f.segment(j * n_v, n_v);
    return r;
  }

  /// v_a f(y,v).
  Vec times_v(const Vec& f, int a) const { return vel.col(a).cwiseProduct(f); }

  /// Phase field composed with the chosen reflections.
  Vec flipped(const Vec& f, bool flip_y, bool flip_v) const {
    Vec r(size());
    for (int j = 0; j < n_cells; ++j)
      for (int k = 0; k < n_v; ++k)
        r(idx(j, k)) = f(idx(flip_y ? y_flip[j] : j, flip_v ? v_flip[k] : k));
    return r;
  }

  /// max |f(flip) - sign f|.
  double parity_residual(const Vec& f, bool flip_y, bool flip_v, double sign) const {
    return (flipped(f, flip_y, flip_v) - sign * f).cwiseAbs().maxCoeff();
  }

  double cell_mean(const Vec& c) const { return c.mean(); }
};

/// max |c(-y) - sign c(y)| for cell functions.
inline double cell_parity_residual(const Vec& c, const std::vector<int>& y_flip, double sign) {
  double r = 0;
  for (int j = 0; j < c.size(); ++j) r = std::max(r, std::abs(c(y_flip[j]) - sign * c(j)));
  return r;
}

/// Per-cell collision operators, local equilibria and pseudo-inverses.
///
/// The pseudo-inverses are bordered solves
///   [Q   psi] [u]   [g]        [Q*  psi*] [u]   [g]
///   [p*' 0  ] [l] = [0]   and  [p'  0   ] [l] = [0]
/// with p*' = (w psi*)' and p' = (w psi)'. The multiplier equals the
/// compatibility moment, so applied to any g they return Q^{-1} of the
/// projected right-hand side.
class CollisionBank {
 public:
  explicit CollisionBank(const ScatteringKernel& K, double tol_compat = 1e-11)
      : K_(K), ps_(K), tol_compat_(tol_compat) {
    const int nc = K.n_cells(), nv = K.n_v();
    const Vec& w = K.vg.weights;
    Q_.resize(nc);
    Qs_.resize(nc);
    G_.resize(nc);
    Gs_.resize(nc);
    psi_.resize(ps_.size());
    for (int j = 0; j < nc; ++j) {
      Q_[j] = Mat(K.sigma_total.row(j).asDiagonal()) - K.sigma[j] * w.asDiagonal();
      Qs_[j] = Mat(K.sigma_total.row(j).asDiagonal()) - K.sigma[j].transpose() * w.asDiagonal();

      Eigen::JacobiSVD<Mat> svd(Q_[j], Eigen::ComputeFullV);
      const Vec& s = svd.singularValues();
      if (nv > 1 && s(nv - 1) > 1e-6 * s(nv - 2))
        throw KernelNotSimple("collision kernel at cell point " + std::to_string(j) + " is not one-dimensional");
      Vec p = svd.matrixV().col(nv - 1);
      if (p.sum() < 0) p = -p;
      p /= w.cwiseProduct(p).dot(K.psi_star);
      if (!(p.minCoeff() > 0)) throw NonPositive("local equilibrium changes sign at cell point " + std::to_string(j));
      psi_.segment(j * nv, nv) = p;

      Mat B = Mat::Zero(nv + 1, nv + 1);
      B.topLeftCorner(nv, nv) = Q_[j];
      B.block(0, nv, nv, 1) = p;
      B.block(nv, 0, 1, nv) = w.cwiseProduct(K.psi_star).transpose();
      Mat rhs = Mat::Zero(nv + 1, nv);
      rhs.topRows(nv).setIdentity();
      Eigen::FullPivLU<Mat> lu(B);
      if (!lu.isInvertible()) throw SingularSystem("bordered collision system is singular");
      G_[j] = lu.solve(rhs).topRows(nv);

      Mat Bs = Mat::Zero(nv + 1, nv + 1);
      Bs.topLeftCorner(nv, nv) = Qs_[j];
      Bs.block(0, nv, nv, 1) = K.psi_star;
      Bs.block(nv, 0, 1, nv) = w.cwiseProduct(p).transpose();
      Eigen::FullPivLU<Mat> lus(Bs);
      if (!lus.isInvertible()) throw SingularSystem("bordered adjoint collision system is singular");
      Gs_[j] = lus.solve(rhs).topRows(nv);
    }
  }

  const ScatteringKernel& kernel() const { return K_; }
  const PhaseSpace& space() const { return ps_; }
  double tol_compat() const { return tol_compat_; }

  /// Local equilibrium psi(y, v) as a phase field.
  const CellField& psi() const { return psi_; }
  Vec psi_at(int j) const { return psi_.segment(j * ps_.n_v, ps_.n_v); }
  CellField psi_star_field() const { return ps_.tile(K_.psi_star); }

  const Mat& Q(int j) const { return Q_[j]; }
  const Mat& Qstar(int j) const { return Qs_[j]; }
  const Mat& G(int j) const { return G_[j]; }
  const Mat& Gstar(int j) const { return Gs_[j]; }

  /// Solve Q(y_j) u = g with gauge <u, psi*> = 0.
  Vec q_pinv(int j, const Vec& g) const {
    check_local(g, K_.psi_star, "int g psi* dnu");
    return G_[j] * g;
  }

  /// Solve Q*(y_j) u = g with gauge <u, psi> = 0.
  Vec qstar_pinv(int j, const Vec& g) const {
    check_local(g, psi_at(j), "int g psi dnu");
    return Gs_[j] * g;
  }

  /// Q^{-1} applied cell by cell to a phase field, after checking every
  /// local compatibility moment. `scale` is the size of the terms that
  /// cancelled to produce g, used when g itself is at roundoff level.
  CellField apply_G(const CellField& g, const std::string& what = "int g psi* dnu", double scale = 0) const {
    check_field(g, psi_star_field(), what, scale);
    return apply_blocks(G_, g);
  }
  CellField apply_Gstar(const CellField& g, const std::string& what = "int g psi dnu", double scale = 0) const {
    check_field(g, psi_, what, scale);
    return apply_blocks(Gs_, g);
  }
  CellField apply_Q(const CellField& f) const { return apply_blocks(Q_, f); }
  CellField apply_Qstar(const CellField& f) const { return apply_blocks(Qs_, f); }

  /// Dense block-diagonal matrices over the whole phase space.
  Mat block(const std::vector<Mat>& B) const {
    const int n = ps_.size(), nv = ps_.n_v;
    Mat M = Mat::Zero(n, n);
    for (int j = 0; j < ps_.n_cells; ++j) M.block(j * nv, j * nv, nv, nv) = B[j];
    return M;
  }
  Mat block_Q() const { return block(Q_); }
  Mat block_Qstar() const { return block(Qs_); }
  Mat block_G() const { return block(G_); }
  Mat block_Gstar() const { return block(Gs_); }

  /// Smallest real part among the nonzero eigenvalues of Q(y_j).
  double spectral_gap(int j) const { return gap_of(Q_[j]); }
  double spectral_gap_star(int j) const { return gap_of(Qs_[j]); }
  double spectral_gap() const {
    double g = std::numeric_limits<double>::infinity();
    for (int j = 0; j < ps_.n_cells; ++j) g = std::min(g, spectral_gap(j));
    return g;
  }

  /// Relative compatibility check; defects below tolerance are left to the
  /// bordered solve, which removes them.
  void check_local(const Vec& g, const Vec& kernel_vec, const std::string& what) const {
    const Vec& w = K_.vg.weights;
    const double d = w.cwiseProduct(g).dot(kernel_vec);
    const double sc = std::sqrt(w.dot(g.cwiseAbs2()));
    if (std::abs(d) > tol_compat_ * sc) throw CompatibilityViolation(what, d);
  }

 private:
  static double gap_of(const Mat& Q) {
    Eigen::EigenSolver<Mat> es(Q, false);
    const auto& ev = es.eigenvalues();
    int i0 = 0;
    for (int i = 1; i < ev.size(); ++i)
      if (std::abs(ev(i)) < std::abs(ev(i0))) i0 = i;
    double g = std::numeric_limits<double>::infinity();
    for (int i = 0; i < ev.size(); ++i)
      if (i != i0) g = std::min(g, ev(i).real());
    if (!(g > 0)) throw NonPositiveGap("collision operator has no positive spectral gap");
    return g;
  }

  void check_field(const CellField& g, const CellField& kernel_field, const std::string& what,
                   double scale = 0) const {
    const Vec m = ps_.vmoment(g, kernel_field);
    const Vec n2 = ps_.vmoment(g, g);
    const double sc = std::max(std::sqrt(n2.maxCoeff()), scale);
    Eigen::Index at = 0;
    const double d = m.cwiseAbs().maxCoeff(&at);
    if (d > tol_compat_ * sc) throw CompatibilityViolation(what, m(at));
  }

  CellField apply_blocks(const std::vector<Mat>& B, const CellField& g) const {
    CellField u(g.size());
    const int nv = ps_.n_v;
    for (int j = 0; j < ps_.n_cells; ++j) u.segment(j * nv, nv) = B[j] * g.segment(j * nv, nv);
    return u;
  }

  ScatteringKernel K_;
  PhaseSpace ps_;
  double tol_compat_;
  std::vector<Mat> Q_, Qs_, G_, Gs_;
  CellField psi_;
};

}  // namespace kinhom
