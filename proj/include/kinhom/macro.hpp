#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "kinhom/cell_transport.hpp"
#include "kinhom/effective.hpp"
#include "kinhom/errors.hpp"
#include "kinhom/grids.hpp"

namespace kinhom {

using CVec = Eigen::VectorXcd;
using MacroField = Vec;

// ---------------------------------------------------------------- Fourier

/// Signed wavenumber of DFT index j on n points of period L; Nyquist -> 0.
inline double wavenumber(int j, int n, double L) {
  if (2 * j == n) return 0.0;
  const int s = (2 * j < n) ? j : j - n;
  return 2.0 * std::numbers::pi * s / L;
}

inline CVec dft(const Vec& f) {
  Eigen::FFT<double> fft;
  CVec out;
  fft.fwd(out, f);
  return out;
}

inline Vec idft_real(const CVec& F) {
  Eigen::FFT<double> fft;
  CVec out;
  fft.inv(out, F);
  return out.real();
}

/// Zero the Fourier coefficients at roundoff level relative to the largest
/// one. Macroscopic fields here are band-limited, and without this the
/// high-order derivatives on fine grids amplify FFT noise by |k|^order.
inline void chop(CVec& F, double rel = 1e-14) {
  if (F.size() == 0) return;
  const double cut = rel * F.cwiseAbs().maxCoeff();
  for (Eigen::Index j = 0; j < F.size(); ++j)
    if (std::abs(F(j)) <= cut) F(j) = 0.0;
}

/// Spectral derivative of order `order` on the torus; `chop_rel` = 0 keeps
/// every coefficient.
inline MacroField spectral_derivative(const MacroField& f, double L, int order = 1, double chop_rel = 1e-14) {
  const int n = static_cast<int>(f.size());
  CVec F = dft(f);
  if (chop_rel > 0) chop(F, chop_rel);
  const std::complex<double> I(0, 1);
  for (int j = 0; j < n; ++j) {
    const std::complex<double> ik = I * wavenumber(j, n, L);
    for (int o = 0; o < order; ++o) F(j) *= ik;
  }
  return idft_real(F);
}

/// Discrete H^k norm via Fourier multipliers (1 + kappa^2)^k; k = 0 is L^2.
inline double hk_norm(const MacroField& f, double L, int k = 0) {
  const int n = static_cast<int>(f.size());
  const CVec F = dft(f);
  double s = 0;
  for (int j = 0; j < n; ++j) {
    const double kap = wavenumber(j, n, L);
    s += std::pow(1.0 + kap * kap, k) * std::norm(F(j));
  }
  return std::sqrt(s * L) / n;
}

/// Solve n - D n'' = s on the torus by exact Fourier inversion.
inline MacroField solve_macro_diffusion(const Mat& D, const MacroGrid& mg, const MacroField& source) {
  if (D.rows() != 1 || D.cols() != 1) throw ConfigError("macroscopic solves are one-dimensional");
  if (!(D(0, 0) > 0)) throw IndefiniteTensor("diffusion coefficient is not positive");
  if (source.size() != mg.n_x) throw Error("source size does not match the macro grid");
  CVec F = dft(source);
  chop(F);
  for (int j = 0; j < mg.n_x; ++j) {
    const double k = wavenumber(j, mg.n_x, mg.period);
    F(j) /= 1.0 + D(0, 0) * k * k;
  }
  return idft_real(F);
}
inline MacroField solve_macro_diffusion(double D, const MacroGrid& mg, const MacroField& source) {
  return solve_macro_diffusion(Mat::Constant(1, 1, D), mg, source);
}

// ---------------------------------------------------------------- sources

/// One separable term amplitude * a(x) b(y) c(v).
struct SourceTerm {
  double amplitude = 1.0;
  std::string x_profile = "cos";  // const | cos | sin
  int x_mode = 1;
  std::string y_profile = "const";  // const | cos | sin
  int y_mode = 1;
  std::string v_profile = "one";  // one | v | v2 | abs_v
};

struct SourceSpec {
  std::vector<SourceTerm> terms;
};

namespace detail {
inline double trig_profile(const std::string& kind, int mode, double t) {
  const double a = 2.0 * std::numbers::pi * mode * t;
  if (kind == "const") return 1.0;
  if (kind == "cos") return std::cos(a);
  if (kind == "sin") return std::sin(a);
  throw ConfigError("unknown source profile '" + kind + "'");
}
}  // namespace detail

inline MacroField source_x(const SourceTerm& t, const MacroGrid& mg) {
  MacroField a(mg.n_x);
  for (int i = 0; i < mg.n_x; ++i) a(i) = t.amplitude * detail::trig_profile(t.x_profile, t.x_mode, mg.x(i) / mg.period);
  return a;
}

inline double source_y(const SourceTerm& t, double y) { return detail::trig_profile(t.y_profile, t.y_mode, y); }

inline double source_v(const SourceTerm& t, const Mat& nodes, int k) {
  const double s = nodes.row(k).squaredNorm();
  if (t.v_profile == "one") return 1.0;
  if (t.v_profile == "v") return nodes(k, 0);
  if (t.v_profile == "v2") return s;
  if (t.v_profile == "abs_v") return std::sqrt(s);
  throw ConfigError("unknown source velocity profile '" + t.v_profile + "'");
}

/// b(y) c(v) on the one-dimensional cell grid with n_cells points.
inline CellField source_cell_field(const SourceTerm& t, int n_cells, const Mat& nodes) {
  const int nv = static_cast<int>(nodes.rows());
  CellField g(n_cells * nv);
  for (int j = 0; j < n_cells; ++j)
    for (int k = 0; k < nv; ++k) g(j * nv + k) = source_y(t, double(j) / n_cells) * source_v(t, nodes, k);
  return g;
}

// ---------------------------------------------------------------- fields

/// Sum of products a_m(x) g_m(y, v).
struct SeparableField {
  struct Term {
    MacroField a;
    CellField g;
  };
  std::vector<Term> terms;

  void add(const MacroField& a, const CellField& g) { terms.push_back({a, g}); }

  /// L^2(x, y, v) norm with the phase weights of `ps`.
  double norm(const PhaseSpace& ps, double L) const {
    double s = 0;
    for (const auto& t1 : terms)
      for (const auto& t2 : terms) s += (t1.a.dot(t2.a) * L / t1.a.size()) * ps.inner(t1.g, t2.g);
    return std::sqrt(std::max(s, 0.0));
  }

  /// Composite field f(x_i, x_i/alpha mod 1, v) as an (n_x, n_v) array.
  Mat on_torus(const MacroGrid& mg, int n_cells, int n_v) const {
    if (mg.points_per_cell() != n_cells) throw ResolutionError("points per cell must equal the cell grid size");
    Mat f = Mat::Zero(mg.n_x, n_v);
    for (const auto& t : terms)
      for (int i = 0; i < mg.n_x; ++i) f.row(i) += t.a(i) * t.g.segment((i % n_cells) * n_v, n_v).transpose();
    return f;
  }
};

// ---------------------------------------------------------------- eps expansion

struct EpsilonExpansion {
  double D_eta = 0;
  MacroField n0, n1;
  SeparableField f0, f1, f2bar, f2, f3;
};

/// Terms of the expansion in epsilon at fixed eta (one space dimension).
inline EpsilonExpansion epsilon_expansion_terms(const CellTransport& T, const SourceSpec& S, const MacroGrid& mg) {
  const PhaseSpace& ps = T.space();
  if (ps.dim != 1) throw ConfigError("epsilon expansion is implemented in one dimension");
  const double L = mg.period;
  const auto& K = T.bank().kernel();
  const CellField& pe = T.psi_eta();
  const CellField& pst = T.psi_star();
  const CellField vps = ps.times_v(pst, 0);
  const CellField chi = T.chi().col(0);

  EpsilonExpansion e;
  e.D_eta = ps.inner(ps.times_v(chi, 0), pst);

  std::vector<MacroField> a;
  std::vector<CellField> g;
  MacroField s0 = MacroField::Zero(mg.n_x);
  for (const auto& t : S.terms) {
    a.push_back(source_x(t, mg));
    g.push_back(source_cell_field(t, ps.n_cells, K.vg.nodes));
    s0 += a.back() * ps.inner(g.back(), pst);
  }
  e.n0 = solve_macro_diffusion(e.D_eta, mg, s0);

  // combined solvability of T f2 = v chi n0'' - n0 psi^eta + S
  {
    const MacroField n0xx = spectral_derivative(e.n0, L, 2);
    MacroField def = n0xx * ps.inner(ps.times_v(chi, 0), pst) - e.n0 * ps.inner(pe, pst);
    double sc = n0xx.cwiseAbs().maxCoeff() * ps.norm(ps.times_v(chi, 0)) + e.n0.cwiseAbs().maxCoeff() * ps.norm(pe);
    for (size_t m = 0; m < a.size(); ++m) {
      def += a[m] * ps.inner(g[m], pst);
      sc += a[m].cwiseAbs().maxCoeff() * ps.norm(g[m]);
    }
    const double d = def.cwiseAbs().maxCoeff();
    if (d > 1e-10 * std::max(sc, 1e-300)) throw CompatibilityViolation("n^{0,eta} diffusion equation", d);
  }
  const CellField R_chi = T.teta_pinv_projected(ps.times_v(chi, 0));
  const CellField R_psi = T.teta_pinv_projected(pe);
  std::vector<CellField> R_g;
  for (const auto& gm : g) R_g.push_back(T.teta_pinv_projected(gm));

  const MacroField n0x = spectral_derivative(e.n0, L, 1);
  const MacroField n0xx = spectral_derivative(e.n0, L, 2);
  const MacroField n0xxx = spectral_derivative(e.n0, L, 3);
  MacroField rhs1 = -(n0xxx * ps.inner(R_chi, vps) - n0x * ps.inner(R_psi, vps));
  for (size_t m = 0; m < a.size(); ++m) rhs1 -= spectral_derivative(a[m], L, 1) * ps.inner(R_g[m], vps);
  e.n1 = solve_macro_diffusion(e.D_eta, mg, rhs1);

  e.f0.add(e.n0, pe);
  e.f1.add(-n0x, chi);
  e.f1.add(e.n1, pe);
  e.f2bar.add(n0xx, R_chi);
  e.f2bar.add(-e.n0, R_psi);
  for (size_t m = 0; m < a.size(); ++m) e.f2bar.add(a[m], R_g[m]);
  e.f2.add(-spectral_derivative(e.n1, L, 1), chi);
  for (const auto& t : e.f2bar.terms) e.f2.terms.push_back(t);

  // f3 = T^{-1}(-v d_x f2 - f1); the projections of the pieces cancel in sum
  {
    MacroField def = MacroField::Zero(mg.n_x);
    double sc = 0;
    for (const auto& t : e.f2.terms) {
      const MacroField ax = -spectral_derivative(t.a, L, 1);
      const CellField vg = ps.times_v(t.g, 0);
      def += ax * ps.inner(vg, pst);
      sc += ax.cwiseAbs().maxCoeff() * ps.norm(vg);
      e.f3.add(ax, T.teta_pinv_projected(vg));
    }
    for (const auto& t : e.f1.terms) {
      def -= t.a * ps.inner(t.g, pst);
      sc += t.a.cwiseAbs().maxCoeff() * ps.norm(t.g);
      e.f3.add(-t.a, T.teta_pinv_projected(t.g));
    }
    const double d = def.cwiseAbs().maxCoeff();
    if (d > 1e-10 * std::max(sc, 1e-300)) throw CompatibilityViolation("n^{1,eta} diffusion equation", d);
  }
  return e;
}

// ---------------------------------------------------------------- limits

struct LimitDensities {
  MacroField n00, n01, n1m1, S1m1;
};

/// n^{0,0}, n^{0,1}, S^{1,-1} and n^{1,-1} from the expansion bundle.
inline LimitDensities limit_densities(const ExpansionBundle& b, const SourceSpec& S, const MacroGrid& mg) {
  if (b.dim != 1) throw ConfigError("limit densities are implemented in one dimension");
  const PhaseSpace ps = b.space();
  const double L = mg.period;
  const CellField pst = ps.tile(b.psi_star);
  LimitDensities r;
  MacroField s0 = MacroField::Zero(mg.n_x);
  MacroField flux = MacroField::Zero(mg.n_x);  // bracket whose x-derivative gives -S^{1,-1}
  const CellField cs_m1 = b.chi_s_m1.col(0);
  for (const auto& t : S.terms) {
    const MacroField a = source_x(t, mg);
    const CellField g = source_cell_field(t, b.n_cells, b.v_nodes);
    s0 += a * ps.inner(g, pst);
    flux += a * ps.inner(g, cs_m1);
  }
  r.n00 = solve_macro_diffusion(b.Dtensor, mg, s0);
  const MacroField n00xx = spectral_derivative(r.n00, L, 2);
  r.n01 = solve_macro_diffusion(b.Dtensor, mg, b.D1tensor(0, 0) * n00xx);
  flux += -r.n00 * ps.inner(b.psi0, cs_m1);
  flux += n00xx * (ps.inner(ps.times_v(b.chi0.col(0), 0), cs_m1) +
                   ps.inner(ps.times_v(b.chi_m1.col(0), 0), b.chi_s0.col(0)));
  r.S1m1 = -spectral_derivative(flux, L, 1);
  r.n1m1 = solve_macro_diffusion(b.Dtensor, mg, r.S1m1);
  return r;
}

}  // namespace kinhom
