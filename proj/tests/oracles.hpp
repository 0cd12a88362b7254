#pragma once

// Independent reference computations for the tests. Nothing here calls the
// code under test for the quantity being checked.

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "fsel/core/matrix.hpp"
#include "fsel/core/rng.hpp"

namespace oracle {

using fsel::DenseMatrix;
using fsel::RealVector;

inline Eigen::MatrixXd to_eigen(const DenseMatrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

inline DenseMatrix from_eigen(const Eigen::MatrixXd& e) {
  DenseMatrix m(e.rows(), e.cols());
  for (Eigen::Index i = 0; i < e.rows(); ++i)
    for (Eigen::Index j = 0; j < e.cols(); ++j) m(i, j) = e(i, j);
  return m;
}

inline DenseMatrix random_matrix(fsel::RngStream& rng, std::size_t r, std::size_t c) {
  DenseMatrix m(r, c);
  for (auto& v : m.entries()) v = rng.normal();
  return m;
}

inline RealVector random_vector(fsel::RngStream& rng, std::size_t n, double scale = 1.0) {
  RealVector v(n);
  for (auto& e : v) e = scale * rng.normal();
  return v;
}

// Largest singular value from a bidiagonalizing SVD.
inline double top_singular_value(const DenseMatrix& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(m));
  return svd.singularValues()(0);
}

// argmin |X b - y| through the normal equations, LDLT.
inline RealVector least_squares(const DenseMatrix& x, const RealVector& y) {
  const Eigen::MatrixXd e = to_eigen(x);
  const Eigen::VectorXd ey = Eigen::Map<const Eigen::VectorXd>(y.data(), y.size());
  const Eigen::VectorXd b = (e.transpose() * e).ldlt().solve(e.transpose() * ey);
  return RealVector(b.data(), b.data() + b.size());
}

// Projection onto the l1 ball by locating the soft threshold theta with a
// uniform grid over [0, max|v|] followed by bisection on the bracketing cell;
// phi(theta) = sum max(|v_i| - theta, 0) - r is decreasing.
inline RealVector l1_projection_by_threshold_search(const RealVector& v, double r) {
  double l1 = 0.0, mx = 0.0;
  for (double e : v) {
    l1 += std::abs(e);
    mx = std::max(mx, std::abs(e));
  }
  if (l1 <= r) return v;
  auto phi = [&](double t) {
    double s = 0.0;
    for (double e : v) s += std::max(std::abs(e) - t, 0.0);
    return s - r;
  };
  const int grid = 4096;
  double lo = 0.0, hi = mx;
  for (int g = 1; g <= grid; ++g) {
    const double t = mx * g / grid;
    if (phi(t) <= 0.0) {
      lo = mx * (g - 1) / grid;
      hi = t;
      break;
    }
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (phi(mid) > 0.0 ? lo : hi) = mid;
  }
  const double theta = 0.5 * (lo + hi);
  RealVector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double m = std::max(std::abs(v[i]) - theta, 0.0);
    out[i] = v[i] < 0 ? -m : m;
  }
  return out;
}

// Two-variable representation oracle: minimize |N (b, 1 - b)|^2 over a fine
// grid of b followed by golden-section refinement.
inline std::pair<double, double> two_variable_representation(const DenseMatrix& n) {
  auto cost = [&](double b) {
    double s = 0.0;
    for (std::size_t r = 0; r < n.rows(); ++r) {
      const double v = n(r, 0) * b + n(r, 1) * (1.0 - b);
      s += v * v;
    }
    return s;
  };
  double best = -5.0, best_c = cost(best);
  for (int g = 0; g <= 100000; ++g) {
    const double b = -5.0 + 10.0 * g / 100000.0;
    const double c = cost(b);
    if (c < best_c) { best = b; best_c = c; }
  }
  double lo = best - 1e-4, hi = best + 1e-4;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 200; ++it) {
    const double a = hi - gr * (hi - lo), b = lo + gr * (hi - lo);
    (cost(a) < cost(b) ? hi : lo) = (cost(a) < cost(b) ? b : a);
  }
  const double b = 0.5 * (lo + hi);
  return {b, cost(b)};
}

}  // namespace oracle
