#pragma once

#include <Eigen/Dense>

#include <random>

#include "kinhom/kinhom.hpp"

namespace kinhom::testing {

/// argmin |A u - g| over {u : c'u = 0}, via an orthonormal basis of c-perp
/// and a complete orthogonal decomposition. No bordering, no pivoted LU.
inline Vec constrained_lsq(const Mat& A, const Vec& g, const Vec& c) {
  const int n = static_cast<int>(c.size());
  Eigen::HouseholderQR<Mat> qr(c);
  const Mat Qfull = qr.householderQ() * Mat::Identity(n, n);
  const Mat N = Qfull.rightCols(n - 1);
  const Vec z = (A * N).completeOrthogonalDecomposition().solve(g);
  return N * z;
}

/// Remove the component of g along `along` measured against `against`
/// in the weighted inner product with weights `m`.
inline Vec make_compatible(const Vec& g, const Vec& along, const Vec& against, const Vec& m) {
  return g - along * (m.cwiseProduct(g).dot(against) / m.cwiseProduct(along).dot(against));
}

inline Vec gaussian(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> nd;
  Vec f(n);
  for (int i = 0; i < n; ++i) f(i) = nd(rng);
  return f;
}

inline double rel(const Vec& a, const Vec& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

/// Kernel whose local equilibrium and rho0 both depend on y.
inline ExperimentConfig generic_config(int n_y = 64) {
  ExperimentConfig c;
  c.name = "generic";
  c.velocity.count = 8;
  c.n_y = n_y;
  c.kernel.family = "separable";
  c.kernel.scale = 8.0;
  c.kernel.amplitude = 0.3;
  c.kernel.y_profile = "cos";
  c.kernel.beta = 0.5;
  c.kernel.coupling_profile = "cos";
  c.kernel.g = "one";
  c.kernel.g_in = "v2";
  c.psi_star.kind = "quadratic";
  c.psi_star.c = 0.5;
  SourceTerm t1;
  SourceTerm t2;
  t2.amplitude = 0.5;
  t2.y_profile = "sin";
  c.source.terms = {t1, t2};
  return c;
}

inline ExperimentConfig isotropic_config(int n_y = 64) {
  ExperimentConfig c;
  c.name = "isotropic";
  c.velocity.count = 8;
  c.n_y = n_y;
  c.kernel.family = "isotropic";
  c.source.terms = {SourceTerm{}};
  return c;
}

}  // namespace kinhom::testing
