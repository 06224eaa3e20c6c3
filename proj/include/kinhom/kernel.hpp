#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "kinhom/errors.hpp"
#include "kinhom/grids.hpp"

namespace kinhom {

/// Scattering kernel family description.
///
/// sigma(y, v' -> v) = scale * (1 + amplitude p(y)) * (1 + beta c(y) g(v) h(v'))
/// for the "isotropic" (beta ignored) and "separable" families, where
/// h = g_in (defaults to g). With g != h the kernel is
/// not symmetric under v <-> v' and psi depends on y. The "drift"
/// family multiplies by (1 + drift v/v_max) in the outgoing velocity, which
/// breaks the v-parity on purpose. "tabulated" reads `table` laid out as
/// [j][k_out][k_in] on the cell grid.
struct KernelSpec {
  std::string family = "isotropic";
  double scale = 1.0;
  double amplitude = 0.0;
  std::string y_profile = "cos";
  double beta = 0.0;
  std::string coupling_profile = "const";
  std::string g = "one";
  std::string g_in;  // empty: same as g
  double drift = 0.0;
  std::vector<double> table;
  bool allow_asymmetric = false;
};

/// Reference equilibrium psi*(v). kinds: one | quadratic (1 + c|v|^2) |
/// gaussian exp(-|v|^2 / (2c)) | tabulated.
struct PsiStarSpec {
  std::string kind = "one";
  double c = 0.0;
  std::vector<double> table;
};

struct ScatteringKernel {
  VelocityGrid vg;
  CellGrid cg;
  ParityMaps maps;
  std::vector<Mat> sigma;  // sigma[j](k_out, k_in)
  Mat sigma_total;         // (cell, velocity)
  Vec psi_star;
  bool symmetric = true;

  int n_v() const { return vg.size(); }
  int n_cells() const { return cg.size(); }
};

namespace detail {

inline double y_profile(const std::string& name, const CellGrid& cg, int j) {
  const double tp = 2.0 * std::numbers::pi;
  if (name == "const") return 1.0;
  if (name == "cos") {
    if (cg.dim == 1) return std::cos(tp * cg.y(j));
    return 0.5 * (std::cos(tp * cg.y(j, 0)) + std::cos(tp * cg.y(j, 1)));
  }
  if (name == "cos2") {
    if (cg.dim == 1) return std::cos(2.0 * tp * cg.y(j));
    return 0.5 * (std::cos(2.0 * tp * cg.y(j, 0)) + std::cos(2.0 * tp * cg.y(j, 1)));
  }
  if (name == "sin") return std::sin(tp * cg.y(j, 0));
  throw ConfigError("unknown y profile '" + name + "'");
}

inline double v_profile(const std::string& name, const VelocityGrid& vg, int k) {
  const double s = vg.nodes.row(k).squaredNorm();
  if (name == "one") return 1.0;
  if (name == "v") return vg.nodes(k, 0);
  if (name == "v2") return s;
  if (name == "abs_v") return std::sqrt(s);
  throw ConfigError("unknown velocity profile '" + name + "'");
}

}  // namespace detail

/// Sigma(y,v) = sum_k' w_k' sigma(y, v -> v') psi*(v') / psi*(v), so that Q* psi* = 0.
inline Mat derive_sigma_total(const std::vector<Mat>& sigma, const Vec& w, const Vec& psi_star) {
  const int nc = static_cast<int>(sigma.size());
  const int nv = static_cast<int>(w.size());
  Mat S(nc, nv);
  const Vec wp = w.cwiseProduct(psi_star);
  for (int j = 0; j < nc; ++j) {
    // sigma[j](k_out, k_in): column k holds the rates out of v_k
    S.row(j) = (sigma[j].transpose() * wp).cwiseQuotient(psi_star).transpose();
  }
  return S;
}

inline Vec build_psi_star(const PsiStarSpec& spec, const VelocityGrid& vg) {
  const int nv = vg.size();
  Vec p(nv);
  for (int k = 0; k < nv; ++k) {
    const double s = vg.nodes.row(k).squaredNorm();
    if (spec.kind == "one") {
      p(k) = 1.0;
    } else if (spec.kind == "quadratic") {
      p(k) = 1.0 + spec.c * s;
    } else if (spec.kind == "gaussian") {
      if (!(spec.c > 0)) throw ConfigError("gaussian psi* needs c > 0");
      p(k) = std::exp(-s / (2.0 * spec.c));
    } else if (spec.kind == "tabulated") {
      if (static_cast<int>(spec.table.size()) != nv) throw ConfigError("psi* table has wrong length");
      p(k) = spec.table[k];
    } else {
      throw ConfigError("unknown psi* kind '" + spec.kind + "'");
    }
  }
  return p;
}

namespace detail {

inline double max_abs(const Mat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

/// Largest deviation of sigma under y -> -y and under (v', v) -> (-v', -v).
inline std::pair<double, double> sigma_asymmetry(const std::vector<Mat>& sigma, const ParityMaps& m) {
  double ey = 0, ev = 0;
  const int nv = static_cast<int>(m.v_flip.size());
  for (size_t j = 0; j < sigma.size(); ++j) {
    ey = std::max(ey, max_abs(sigma[j] - sigma[m.y_flip[j]]));
    for (int a = 0; a < nv; ++a)
      for (int b = 0; b < nv; ++b)
        ev = std::max(ev, std::abs(sigma[j](a, b) - sigma[j](m.v_flip[a], m.v_flip[b])));
  }
  return {ey, ev};
}

}  // namespace detail

/// Tabulate sigma from a spec, symmetrize over the parity group, normalize
/// psi* and derive Sigma.
inline ScatteringKernel build_kernel(const KernelSpec& ks, const PsiStarSpec& ps, const VelocityGrid& vg,
                                     const CellGrid& cg) {
  if (vg.dim != cg.dim) throw ConfigError("velocity and cell grid dimensions differ");
  ScatteringKernel K;
  K.vg = vg;
  K.cg = cg;
  K.maps = parity_maps(vg, cg);
  const int nc = cg.size();
  const int nv = vg.size();
  const bool drift = ks.family == "drift";
  const bool asym = ks.allow_asymmetric || drift;

  if (!(ks.scale > 0)) throw KernelRejected("kernel scale must be positive");
  K.sigma.assign(nc, Mat(nv, nv));
  const double vmax = vg.nodes.cwiseAbs().maxCoeff();
  for (int j = 0; j < nc; ++j) {
    if (ks.family == "tabulated") {
      if (static_cast<int>(ks.table.size()) != nc * nv * nv) throw ConfigError("sigma table has wrong length");
      for (int a = 0; a < nv; ++a)
        for (int b = 0; b < nv; ++b) K.sigma[j](a, b) = ks.table[(static_cast<size_t>(j) * nv + a) * nv + b];
      continue;
    }
    const double base = ks.scale * (1.0 + ks.amplitude * detail::y_profile(ks.y_profile, cg, j));
    for (int a = 0; a < nv; ++a)
      for (int b = 0; b < nv; ++b) {
        double s = base;
        if (ks.family == "separable") {
          s *= 1.0 + ks.beta * detail::y_profile(ks.coupling_profile, cg, j) * detail::v_profile(ks.g, vg, a) *
                         detail::v_profile(ks.g_in.empty() ? ks.g : ks.g_in, vg, b);
        } else if (drift) {
          s *= 1.0 + ks.drift * vg.nodes(a, 0) / vmax;
        } else if (ks.family != "isotropic") {
          throw ConfigError("unknown kernel family '" + ks.family + "'");
        }
        K.sigma[j](a, b) = s;
      }
  }

  double smin = 1e300;
  for (const auto& s : K.sigma) smin = std::min(smin, s.minCoeff());
  if (!(smin > 0)) throw KernelRejected("scattering kernel is not positive (min " + std::to_string(smin) + ")");

  Vec p = build_psi_star(ps, vg);
  if (!(p.minCoeff() > 0)) throw KernelRejected("psi* is not positive");

  if (!asym) {
    double smax = 0;
    for (const auto& s : K.sigma) smax = std::max(smax, s.maxCoeff());
    auto [ey, ev] = detail::sigma_asymmetry(K.sigma, K.maps);
    if (std::max(ey, ev) > 1e-12 * smax)
      throw KernelRejected("scattering kernel violates the parity symmetries (" + std::to_string(std::max(ey, ev)) +
                           ")");
    double ep = 0;
    for (int k = 0; k < nv; ++k) ep = std::max(ep, std::abs(p(k) - p(K.maps.v_flip[k])));
    if (ep > 1e-12 * p.maxCoeff()) throw KernelRejected("psi* is not even in v");
    // exact group average
    std::vector<Mat> sym(nc, Mat(nv, nv));
    for (int j = 0; j < nc; ++j)
      for (int a = 0; a < nv; ++a)
        for (int b = 0; b < nv; ++b) {
          const int jf = K.maps.y_flip[j], af = K.maps.v_flip[a], bf = K.maps.v_flip[b];
          sym[j](a, b) = 0.25 * (K.sigma[j](a, b) + K.sigma[j](af, bf) + K.sigma[jf](a, b) + K.sigma[jf](af, bf));
        }
    K.sigma = std::move(sym);
    Vec pe(nv);
    for (int k = 0; k < nv; ++k) pe(k) = 0.5 * (p(k) + p(K.maps.v_flip[k]));
    p = pe;
  }
  K.symmetric = !asym;
  p /= std::sqrt(vg.weights.dot(p.cwiseAbs2()));
  K.psi_star = p;
  K.sigma_total = derive_sigma_total(K.sigma, vg.weights, p);
  return K;
}

struct AssumptionReport {
  double sigma_min = 0, sigma_max = 0;
  double sigma_y_asym = 0, sigma_v_asym = 0;
  double Sigma_y_asym = 0, Sigma_v_asym = 0;
  double psi_star_odd = 0, psi_star_norm_defect = 0;
  double qstar_residual = 0;
  bool pass = false;
  std::vector<std::string> failures;
};

/// Q* psi* at cell point j.
inline Vec qstar_apply_psi_star(const ScatteringKernel& K, int j) {
  const Vec& p = K.psi_star;
  return K.sigma_total.row(j).transpose().cwiseProduct(p) -
         K.sigma[j].transpose() * K.vg.weights.cwiseProduct(p);
}

inline AssumptionReport check_assumptions(const ScatteringKernel& K, double tol = 1e-12) {
  AssumptionReport r;
  r.sigma_min = 1e300;
  r.sigma_max = 0;
  for (const auto& s : K.sigma) {
    r.sigma_min = std::min(r.sigma_min, s.minCoeff());
    r.sigma_max = std::max(r.sigma_max, s.maxCoeff());
  }
  std::tie(r.sigma_y_asym, r.sigma_v_asym) = detail::sigma_asymmetry(K.sigma, K.maps);
  const int nc = K.n_cells(), nv = K.n_v();
  for (int j = 0; j < nc; ++j)
    for (int k = 0; k < nv; ++k) {
      r.Sigma_y_asym = std::max(r.Sigma_y_asym, std::abs(K.sigma_total(j, k) - K.sigma_total(K.maps.y_flip[j], k)));
      r.Sigma_v_asym = std::max(r.Sigma_v_asym, std::abs(K.sigma_total(j, k) - K.sigma_total(j, K.maps.v_flip[k])));
    }
  for (int k = 0; k < nv; ++k)
    r.psi_star_odd = std::max(r.psi_star_odd, std::abs(K.psi_star(k) - K.psi_star(K.maps.v_flip[k])));
  r.psi_star_norm_defect = std::abs(K.vg.weights.dot(K.psi_star.cwiseAbs2()) - 1.0);
  for (int j = 0; j < nc; ++j)
    r.qstar_residual = std::max(r.qstar_residual, qstar_apply_psi_star(K, j).cwiseAbs().maxCoeff());

  const double sc = std::max(1.0, r.sigma_max);
  if (!(r.sigma_min > 0)) r.failures.push_back("positivity");
  if (r.sigma_y_asym > tol * sc) r.failures.push_back("sigma(-y) symmetry");
  if (r.sigma_v_asym > tol * sc) r.failures.push_back("sigma(-v',-v) symmetry");
  if (r.Sigma_y_asym > tol * sc) r.failures.push_back("Sigma(-y) symmetry");
  if (r.Sigma_v_asym > tol * sc) r.failures.push_back("Sigma(-v) symmetry");
  if (r.psi_star_odd > tol) r.failures.push_back("psi* evenness");
  if (r.psi_star_norm_defect > tol) r.failures.push_back("psi* normalization");
  if (r.qstar_residual > tol * sc) r.failures.push_back("Q* psi* residual");
  r.pass = r.failures.empty();
  return r;
}

}  // namespace kinhom
