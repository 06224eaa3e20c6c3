#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "kinhom/errors.hpp"

namespace kinhom {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct VelocitySpec {
  int dim = 1;
  std::string family = "gauss";  // gauss | uniform
  int count = 8;                  // nodes per axis
  double v_min = 0.2;
  double v_max = 1.0;
};

/// Gauss-Legendre nodes and weights on [a, b] (Golub-Welsch).
inline void gauss_legendre(int n, double a, double b, Vec& x, Vec& w) {
  x.resize(n);
  w.resize(n);
  if (n == 1) {
    x(0) = 0.5 * (a + b);
    w(0) = b - a;
    return;
  }
  Mat J = Mat::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double k = i;
    const double beta = k / std::sqrt(4.0 * k * k - 1.0);
    J(i, i - 1) = beta;
    J(i - 1, i) = beta;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(J);
  for (int i = 0; i < n; ++i) {
    const double t = es.eigenvalues()(i);
    const double v0 = es.eigenvectors()(0, i);
    x(i) = 0.5 * (a + b) + 0.5 * (b - a) * t;
    w(i) = (b - a) * v0 * v0;  // 2 v0^2 scaled by (b-a)/2
  }
}

/// Symmetric discrete velocity set with probability weights.
/// Row i of `nodes` is the velocity v_i.
struct VelocityGrid {
  int dim = 1;
  Mat nodes;
  Vec weights;

  int size() const { return static_cast<int>(weights.size()); }
  double v(int i, int a = 0) const { return nodes(i, a); }
  /// Component a of all velocities as a column.
  Vec component(int a) const { return nodes.col(a); }
};

namespace detail {

inline void symmetric_axis(const VelocitySpec& s, Vec& x, Vec& w) {
  const int half = s.count / 2;
  Vec hx, hw;
  if (s.v_max == s.v_min) {
    hx = Vec::Constant(half, s.v_min);
    hw = Vec::Constant(half, 1.0);
  } else if (s.family == "gauss") {
    gauss_legendre(half, s.v_min, s.v_max, hx, hw);
  } else if (s.family == "uniform") {
    hx.resize(half);
    hw = Vec::Constant(half, 1.0);
    const double h = (s.v_max - s.v_min) / half;
    for (int i = 0; i < half; ++i) hx(i) = s.v_min + (i + 0.5) * h;
  } else {
    throw ConfigError("unknown velocity family '" + s.family + "'");
  }
  // negative half first, mirrored, so that v_flip(i) = count-1-i
  x.resize(s.count);
  w.resize(s.count);
  for (int i = 0; i < half; ++i) {
    x(half - 1 - i) = -hx(i);
    w(half - 1 - i) = hw(i);
    x(half + i) = hx(i);
    w(half + i) = hw(i);
  }
  w /= w.sum();
}

}  // namespace detail

inline VelocityGrid build_velocity_grid(const VelocitySpec& s) {
  if (s.dim < 1 || s.dim > 2) throw ConfigError("velocity grid dim must be 1 or 2");
  if (s.count <= 0 || s.count % 2 != 0) throw ConfigError("odd node count");
  if (!(s.v_min > 0.0)) throw ConfigError("v_min must be positive");
  if (s.v_max < s.v_min) throw ConfigError("v_max must not be below v_min");
  if (s.v_max == s.v_min && s.count != 2 && s.family == "gauss")
    throw ConfigError("degenerate interval needs count = 2");

  Vec x, w;
  detail::symmetric_axis(s, x, w);
  VelocityGrid g;
  g.dim = s.dim;
  if (s.dim == 1) {
    g.nodes = x;
    g.weights = w;
  } else {
    const int n = s.count;
    g.nodes.resize(n * n, 2);
    g.weights.resize(n * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        g.nodes(i * n + j, 0) = x(i);
        g.nodes(i * n + j, 1) = x(j);
        g.weights(i * n + j) = w(i) * w(j);
      }
    g.weights /= g.weights.sum();
    // no direction xi may annihilate every node
    Eigen::FullPivLU<Mat> lu(g.nodes);
    if (lu.rank() < s.dim) throw ConfigError("velocity nodes do not span all directions");
  }
  return g;
}

/// Periodic uniform grid on [0,1)^d.
struct CellGrid {
  int n = 64;  // points per dimension
  int dim = 1;

  CellGrid() = default;
  CellGrid(int n_, int dim_ = 1) : n(n_), dim(dim_) {
    if (n <= 0 || n % 2 != 0) throw ConfigError("cell grid needs an even, positive point count");
    if (dim < 1 || dim > 2) throw ConfigError("cell grid dim must be 1 or 2");
  }
  double spacing() const { return 1.0 / n; }
  int size() const { return dim == 1 ? n : n * n; }
  /// Coordinate a of cell point j.
  double y(int j, int a = 0) const {
    if (dim == 1) return j * spacing();
    return (a == 0 ? j / n : j % n) * spacing();
  }
};

/// Periodic macroscopic torus [0, period) with `cells` heterogeneity periods.
struct MacroGrid {
  double period = 1.0;
  int n_x = 64;
  int cells = 1;

  MacroGrid() = default;
  MacroGrid(double L, int nx, int N) : period(L), n_x(nx), cells(N) {
    if (!(L > 0)) throw ConfigError("torus length must be positive");
    if (nx <= 0 || nx % 2 != 0) throw ConfigError("n_x must be even and positive");
    if (N <= 0) throw ConfigError("cells_per_period must be positive");
    if (nx % N != 0) throw ConfigError("n_x must be a multiple of cells_per_period");
  }
  double alpha() const { return period / cells; }
  double dx() const { return period / n_x; }
  int points_per_cell() const { return n_x / cells; }
  double x(int i) const { return i * dx(); }
};

struct ParityMaps {
  std::vector<int> v_flip;
  std::vector<int> y_flip;
};

inline ParityMaps parity_maps(const VelocityGrid& vg, const CellGrid& cg) {
  ParityMaps m;
  const int nv = vg.size();
  m.v_flip.assign(nv, -1);
  for (int i = 0; i < nv; ++i) {
    for (int j = 0; j < nv; ++j) {
      if ((vg.nodes.row(i) + vg.nodes.row(j)).cwiseAbs().maxCoeff() <= 1e-14 * (1.0 + vg.nodes.row(i).norm()) &&
          vg.weights(i) == vg.weights(j)) {
        m.v_flip[i] = j;
        break;
      }
    }
    if (m.v_flip[i] < 0) throw Error("velocity grid is not symmetric");
  }
  const int n = cg.n;
  m.y_flip.resize(cg.size());
  if (cg.dim == 1) {
    for (int j = 0; j < n; ++j) m.y_flip[j] = (n - j) % n;
  } else {
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) m.y_flip[a * n + b] = ((n - a) % n) * n + (n - b) % n;
  }
  return m;
}

/// Fourier differentiation matrix on n periodic points of a period L.
/// Antisymmetric, zero diagonal, annihilates the Nyquist mode.
inline Mat spectral_diff_matrix(int n, double L = 1.0) {
  Mat D = Mat::Zero(n, n);
  const double pi = std::numbers::pi;
  for (int j = 0; j < n; ++j)
    for (int l = 0; l < n; ++l) {
      if (j == l) continue;
      const int d = j - l;
      const double sgn = (d % 2 == 0) ? 1.0 : -1.0;
      D(j, l) = (2.0 * pi / L) * 0.5 * sgn / std::tan(pi * d / n);
    }
  return D;
}

/// Derivative along axis a of the cell grid, acting on cell-indexed vectors.
inline Mat cell_diff_matrix(const CellGrid& cg, int a) {
  const Mat D1 = spectral_diff_matrix(cg.n);
  if (cg.dim == 1) return D1;
  const Mat I = Mat::Identity(cg.n, cg.n);
  Mat D(cg.size(), cg.size());
  // index j = j0*n + j1
  if (a == 0) {
    for (int i = 0; i < cg.n; ++i)
      for (int k = 0; k < cg.n; ++k) D.block(i * cg.n, k * cg.n, cg.n, cg.n) = D1(i, k) * I;
  } else {
    D.setZero();
    for (int i = 0; i < cg.n; ++i) D.block(i * cg.n, i * cg.n, cg.n, cg.n) = D1;
  }
  return D;
}

/// Projector removing the Nyquist modes of a cell function (the modes the
/// spectral derivative annihilates besides constants).
inline Mat nyquist_filter(const CellGrid& cg) {
  const int n = cg.n;
  Mat P1 = Mat::Identity(n, n);
  for (int j = 0; j < n; ++j)
    for (int l = 0; l < n; ++l) P1(j, l) -= (((j + l) % 2 == 0) ? 1.0 : -1.0) / n;
  if (cg.dim == 1) return P1;
  Mat P(cg.size(), cg.size());
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) P.block(a * n, b * n, n, n) = P1(a, b) * P1;
  return P;
}

}  // namespace kinhom
