#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/IterativeSolvers>

#include <cmath>
#include <map>
#include <complex>
#include <string>
#include <vector>

#include "kinhom/errors.hpp"
#include "kinhom/kernel.hpp"
#include "kinhom/macro.hpp"

namespace kinhom {

using CMat = Eigen::MatrixXcd;

struct TransportOptions {
  int min_points_per_cell = 16;
  double residual_tol = 1e-9;
  int gmres_threshold = 4096;  // blocks larger than this use GMRES
  int gmres_restart = 60;
  int gmres_max_iter = 2000;
};

/// Steady heterogeneous transport on the macro torus:
///   v d_x f + eps f + (1/eps) Q(x/alpha) f = eps S(x, x/alpha, v),
/// with alpha = eps/eta = period / cells. The kernel must be tabulated on
/// the cell grid with one point per macro point of a cell.
struct TransportProblem {
  double epsilon = 0;
  double eta = 0;
  ScatteringKernel kernel;
  MacroGrid grid;
  SourceSpec source;
  TransportOptions options;

  double alpha() const { return epsilon / eta; }

  void validate() const {
    if (!(epsilon > 0) || !(eta > 0)) throw ConfigError("epsilon and eta must be positive");
    const double a = alpha();
    if (std::abs(a * grid.cells - grid.period) > 1e-9 * grid.period)
      throw ConfigError("alpha = eps/eta is not commensurate with the torus (alpha * N != L)");
    if (!(epsilon < a && a < 1.0)) throw ConfigError("need epsilon < alpha < 1");
    if (kernel.cg.dim != 1) throw ConfigError("the direct solver is one-dimensional");
    if (grid.points_per_cell() < options.min_points_per_cell)
      throw ResolutionError("only " + std::to_string(grid.points_per_cell()) + " points per cell");
    if (grid.points_per_cell() != kernel.cg.n)
      throw ResolutionError("kernel cell grid does not match the points per cell");
  }
};

struct TransportSolution {
  Mat f;  // (x index, velocity index)
  double residual = 0;
  int classes_solved = 0;
  std::string method;
};

/// eps S_alpha(x_i, v_k) on the torus.
inline Mat source_on_torus(const SourceSpec& S, const MacroGrid& mg, const Mat& nodes) {
  const int nv = static_cast<int>(nodes.rows());
  const int ppc = mg.points_per_cell();
  Mat s = Mat::Zero(mg.n_x, nv);
  for (const auto& t : S.terms) {
    const MacroField a = source_x(t, mg);
    for (int i = 0; i < mg.n_x; ++i) {
      const double b = source_y(t, double(i % ppc) / ppc);
      for (int k = 0; k < nv; ++k) s(i, k) += a(i) * b * source_v(t, nodes, k);
    }
  }
  return s;
}

/// Block-diagonal (per Fourier mode) preconditioner for GMRES on a Bloch block.
class ModeBlockPreconditioner {
 public:
  using Scalar = std::complex<double>;
  using StorageIndex = int;
  enum { ColsAtCompileTime = Eigen::Dynamic, MaxColsAtCompileTime = Eigen::Dynamic };

  ModeBlockPreconditioner() = default;
  template <typename M>
  explicit ModeBlockPreconditioner(const M& m) {
    compute(m);
  }
  void set_block(int b) { block_ = b; }
  template <typename M>
  ModeBlockPreconditioner& analyzePattern(const M&) {
    return *this;
  }
  template <typename M>
  ModeBlockPreconditioner& factorize(const M& m) {
    return compute(m);
  }
  template <typename M>
  ModeBlockPreconditioner& compute(const M& m) {
    const int n = static_cast<int>(m.rows());
    lu_.clear();
    for (int s = 0; s < n; s += block_) lu_.emplace_back(CMat(m.block(s, s, block_, block_)));
    return *this;
  }
  template <typename R>
  CVec solve(const R& b) const {
    CVec x(b.size());
    for (size_t p = 0; p < lu_.size(); ++p) x.segment(p * block_, block_) = lu_[p].solve(b.segment(p * block_, block_));
    return x;
  }
  Eigen::ComputationInfo info() const { return Eigen::Success; }

 private:
  int block_ = 1;
  std::vector<Eigen::PartialPivLU<CMat>> lu_;
};

/// Local equilibria of the tabulated kernel at each cell point, normalized
/// by sum_k w_k psi_k psi*_k = 1, and Q psi as computed in floating point.
struct LocalEquilibria {
  Mat psi;     // (cell point, velocity)
  Mat q_psi;   // (cell point, velocity)
};

inline LocalEquilibria local_equilibria(const ScatteringKernel& K) {
  const int nc = K.n_cells(), nv = K.n_v();
  const Vec& w = K.vg.weights;
  LocalEquilibria le{Mat(nc, nv), Mat(nc, nv)};
  for (int j = 0; j < nc; ++j) {
    const Mat Q = Mat(K.sigma_total.row(j).asDiagonal()) - K.sigma[j] * w.asDiagonal();
    Eigen::JacobiSVD<Mat> svd(Q, Eigen::ComputeFullV);
    Vec p = svd.matrixV().col(nv - 1);
    p /= w.cwiseProduct(p).dot(K.psi_star);
    le.psi.row(j) = p.transpose();
    le.q_psi.row(j) = (Q * p).transpose();
  }
  return le;
}

/// Phase-space residual of eps v f_x + eps^2 f + Q f - eps^2 S (the equation
/// times eps). Q f is evaluated as Q (f - rho psi) + rho Q psi with
/// rho = <f, psi*>: near equilibrium the direct product loses about
/// |Q| |f| * 1e-16 to cancellation, which at small eps exceeds eps^2 |S|.
inline Mat transport_residual(const TransportProblem& p, const Mat& f, const Mat& S, const LocalEquilibria& le) {
  const auto& K = p.kernel;
  const int nv = K.n_v(), ppc = p.grid.points_per_cell();
  const double e = p.epsilon;
  Mat r(p.grid.n_x, nv);
  for (int k = 0; k < nv; ++k)
    r.col(k) = e * K.vg.nodes(k, 0) * spectral_derivative(f.col(k), p.grid.period, 1, 0.0);
  r += e * e * f - e * e * S;
  const Vec& w = K.vg.weights;
  const Vec wps = w.cwiseProduct(K.psi_star);
  for (int i = 0; i < p.grid.n_x; ++i) {
    const int j = i % ppc;
    const Vec fi = f.row(i).transpose();
    const double rho = wps.dot(fi);
    const Vec gi = fi - rho * le.psi.row(j).transpose();
    r.row(i) += (K.sigma_total.row(j).transpose().cwiseProduct(gi) - K.sigma[j] * w.cwiseProduct(gi)).transpose() +
                rho * le.q_psi.row(j);
  }
  return r;
}

inline Mat transport_residual(const TransportProblem& p, const Mat& f, const Mat& S) {
  return transport_residual(p, f, S, local_equilibria(p.kernel));
}

/// Direct solve by Fourier-Bloch decomposition. Wavenumbers j = b + N m
/// couple only within their class b mod N because the medium has period
/// L/N, so each class is an independent (ppc * n_v) system.
inline TransportSolution solve_transport(const TransportProblem& p) {
  p.validate();
  const auto& K = p.kernel;
  const MacroGrid& mg = p.grid;
  const int nv = K.n_v(), ppc = mg.points_per_cell(), N = mg.cells, nx = mg.n_x;
  const double e = p.epsilon;
  const Vec& w = K.vg.weights;

  const Mat S = source_on_torus(p.source, mg, K.vg.nodes);
  TransportSolution sol;
  sol.f = Mat::Zero(nx, nv);
  if (S.cwiseAbs().maxCoeff() == 0.0) {
    sol.method = "trivial";
    return sol;
  }

  CMat R(nx, nv);
  for (int k = 0; k < nv; ++k) R.col(k) = dft(Vec(e * e * S.col(k)));

  // cell DFT of the collision coefficients, normalized by 1/ppc
  std::vector<CVec> Sh(ppc, CVec::Zero(nv));
  std::vector<CMat> sh(ppc, CMat::Zero(nv, nv));
  {
    const std::complex<double> I(0, 1);
    for (int m = 0; m < ppc; ++m)
      for (int r = 0; r < ppc; ++r) {
        const std::complex<double> ph = std::exp(-I * (2.0 * std::numbers::pi * m * r / ppc)) / double(ppc);
        Sh[m] += ph * K.sigma_total.row(r).transpose().cast<std::complex<double>>();
        sh[m] += ph * K.sigma[r].cast<std::complex<double>>();
      }
  }

  const double rmax = R.cwiseAbs().maxCoeff();
  const int nb = ppc * nv;
  auto block_matrix = [&](int b) {
    CMat M(nb, nb);
    for (int q = 0; q < ppc; ++q) {
      const double kap = wavenumber(b + N * q, nx, mg.period);
      for (int q2 = 0; q2 < ppc; ++q2) {
        const int m = ((q - q2) % ppc + ppc) % ppc;
        auto blk = M.block(q * nv, q2 * nv, nv, nv);
        blk = -sh[m] * w.cast<std::complex<double>>().asDiagonal();
        blk.diagonal() += Sh[m];
        if (q == q2)
          for (int k = 0; k < nv; ++k) blk(k, k) += std::complex<double>(e * e, e * K.vg.nodes(k, 0) * kap);
      }
    }
    return M;
  };

  // factorizations are kept for the refinement sweeps
  std::map<int, Eigen::PartialPivLU<CMat>> lus;
  int gmres_classes = 0;
  auto solve_classes = [&](const CMat& Rh, double floor) {
    CMat X = CMat::Zero(nx, nv);
    for (int b = 0; b < N; ++b) {
      double cmax = 0;
      for (int q = 0; q < ppc; ++q) cmax = std::max(cmax, Rh.row(b + N * q).cwiseAbs().maxCoeff());
      if (cmax <= floor) continue;
      CVec rhs(nb);
      for (int q = 0; q < ppc; ++q) rhs.segment(q * nv, nv) = Rh.row(b + N * q).transpose();
      CVec x;
      if (nb > p.options.gmres_threshold) {
        const CMat M = block_matrix(b);
        ++gmres_classes;
        Eigen::GMRES<CMat, ModeBlockPreconditioner> gm;
        gm.preconditioner().set_block(nv);
        gm.set_restart(p.options.gmres_restart);
        gm.setMaxIterations(p.options.gmres_max_iter);
        gm.setTolerance(1e-13);
        gm.compute(M);
        x = gm.solve(rhs);
        sol.method = "bloch-gmres";
      } else {
        auto it = lus.find(b);
        if (it == lus.end()) it = lus.emplace(b, block_matrix(b).partialPivLu()).first;
        x = it->second.solve(rhs);
        if (sol.method.empty()) sol.method = "bloch-direct";
      }
      for (int q = 0; q < ppc; ++q) X.row(b + N * q) = x.segment(q * nv, nv).transpose();
    }
    return X;
  };
  auto to_physical = [&](const CMat& X) {
    Mat out(nx, nv);
    Eigen::FFT<double> fft;
    for (int k = 0; k < nv; ++k) {
      CVec o;
      CVec col = X.col(k);
      fft.inv(o, col);
      out.col(k) = o.real();
    }
    return out;
  };

  const LocalEquilibria le = local_equilibria(K);
  sol.f = to_physical(solve_classes(R, 1e-15 * rmax));
  sol.classes_solved = static_cast<int>(lus.size()) + gmres_classes;
  const double bnorm = e * e * S.norm();
  Mat r = transport_residual(p, sol.f, S, le);
  sol.residual = r.norm() / bnorm;
  for (int it = 0; it < 3 && !(sol.residual <= 0.1 * p.options.residual_tol); ++it) {
    CMat Rr(nx, nv);
    for (int k = 0; k < nv; ++k) Rr.col(k) = dft(Vec(-r.col(k)));
    sol.f += to_physical(solve_classes(Rr, 1e-4 * Rr.cwiseAbs().maxCoeff()));
    r = transport_residual(p, sol.f, S, le);
    sol.residual = r.norm() / bnorm;
  }
  if (!(sol.residual <= p.options.residual_tol))
    throw SolverStall("transport solve missed its residual target", sol.residual);
  return sol;
}

/// L^2(x, v) norm of an (n_x, n_v) field on the torus.
inline double torus_norm(const Mat& f, const Vec& w, double L) {
  double s = 0;
  for (int i = 0; i < f.rows(); ++i) s += w.dot(f.row(i).transpose().cwiseAbs2());
  return std::sqrt(s * L / f.rows());
}

/// Sum-of-squares dissipation
/// (1/eps) int sigma(y, v', v) psi^eta(y, v') psi*(v) |h(v) - h(v')|^2 / 2.
inline double qform(const TransportProblem& p, const CellField& psi_eta, const Mat& h) {
  const auto& K = p.kernel;
  const int nv = K.n_v(), ppc = p.grid.points_per_cell();
  const Vec& w = K.vg.weights;
  double s = 0;
  for (int i = 0; i < p.grid.n_x; ++i) {
    const int j = i % ppc;
    for (int k = 0; k < nv; ++k)
      for (int kp = 0; kp < nv; ++kp) {
        const double d = h(i, k) - h(i, kp);
        s += w(k) * w(kp) * K.sigma[j](k, kp) * psi_eta(j * nv + kp) * K.psi_star(k) * 0.5 * d * d;
      }
  }
  return s * p.grid.dx() / p.epsilon;
}

struct AprioriReport {
  double lhs = 0;
  double rhs = 0;
  double ratio = 0;
  double q_s = 0;            // dissipation of s = u - mean_v u
  double coercivity = 0;     // q_s / ((1/eps) ||s||^2)
};

/// Both sides of the a priori bound for a computed solution. `psi_eta` is
/// the cell equilibrium at the problem's eta on the kernel's cell grid.
inline AprioriReport apriori_check(const TransportProblem& p, const Mat& f, const CellField& psi_eta) {
  const auto& K = p.kernel;
  const MacroGrid& mg = p.grid;
  const int nv = K.n_v(), ppc = mg.points_per_cell();
  const Vec& w = K.vg.weights;
  const double e = p.epsilon, L = mg.period;
  const Mat S = source_on_torus(p.source, mg, K.vg.nodes);

  Mat pe(mg.n_x, nv), u(mg.n_x, nv), dev(mg.n_x, nv), s(mg.n_x, nv);
  Vec sbar(mg.n_x);
  for (int i = 0; i < mg.n_x; ++i) {
    const int j = i % ppc;
    pe.row(i) = psi_eta.segment(j * nv, nv).transpose();
    u.row(i) = f.row(i).cwiseQuotient(pe.row(i));
    const double ubar = w.dot(u.row(i).transpose());
    dev.row(i) = f.row(i) - pe.row(i) * ubar;
    s.row(i) = u.row(i).array() - ubar;
    sbar(i) = w.dot(S.row(i).transpose().cwiseProduct(K.psi_star));
  }
  AprioriReport r;
  r.lhs = torus_norm(f, w, L) + torus_norm(dev, w, L) / e;
  r.rhs = torus_norm(e * S, w, L) + std::sqrt(sbar.squaredNorm() * L / mg.n_x);
  r.ratio = r.lhs / r.rhs;
  r.q_s = qform(p, psi_eta, s);
  const double sn = torus_norm(s, w, L);
  r.coercivity = sn > 0 ? r.q_s / (sn * sn / e) : 0.0;
  return r;
}

}  // namespace kinhom
