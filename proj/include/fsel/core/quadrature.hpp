#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "fsel/core/rng.hpp"
#include "fsel/error.hpp"

namespace fsel {

// Nodes and probability weights approximating a one-dimensional law; for
// the Gaussian rules sum(weights) = 1 and E[h(g)] ~ sum w_i h(x_i).
struct QuadratureRule {
  RealVector nodes;
  RealVector weights;

  template <typename Fn>
  double expect(Fn&& h) const {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * h(nodes[i]);
    return s;
  }
};

// Eigenvalues of the symmetric tridiagonal matrix with zero diagonal and
// off-diagonal e[0..n-2] (implicit QL with Wilkinson shifts), ascending.
inline RealVector tridiagonal_eigenvalues(RealVector e, std::size_t n) {
  RealVector d(n, 0.0);
  e.resize(n, 0.0);
  for (std::size_t l = 0; l < n; ++l) {
    int iter = 0;
    std::size_t m;
    do {
      for (m = l; m + 1 < n; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= 1e-16 * dd) break;
      }
      if (m != l) {
        if (++iter > 60) throw NumericalError("tridiagonal_eigenvalues: no convergence");
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + (g >= 0 ? r : -r));
        double s = 1.0, c = 1.0, p = 0.0;
        std::size_t i = m;
        bool underflow = false;
        while (i-- > l) {
          double f = s * e[i];
          const double b = c * e[i];
          r = std::hypot(f, g);
          e[i + 1] = r;
          if (r == 0.0) {
            d[i + 1] -= p;
            e[m] = 0.0;
            underflow = true;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          p = s * r;
          d[i + 1] = g + p;
          g = c * r - b;
        }
        if (underflow) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }
  std::sort(d.begin(), d.end());
  return d;
}

// Gauss-Hermite rule for N(0,1). Nodes come from the Jacobi matrix of the
// physicists' Hermite family, then one Newton polish on the orthonormal
// recurrence, which also gives the weights.
inline QuadratureRule gauss_hermite_rule(std::size_t n) {
  if (n == 0) throw EmptyDimensionError("gauss_hermite_rule: n must be >= 1");
  const double pim4 = 1.0 / std::pow(std::numbers::pi, 0.25);
  const double nd = static_cast<double>(n);
  RealVector off(n > 1 ? n - 1 : 0);
  for (std::size_t k = 0; k + 1 < n; ++k) off[k] = std::sqrt(0.5 * static_cast<double>(k + 1));
  RealVector x = tridiagonal_eigenvalues(off, n);
  RealVector w(n);
  for (std::size_t i = 0; i < n; ++i) {
    double z = x[i], pp = 0.0;
    for (int it = 0; it < 3; ++it) {
      double p1 = pim4, p2 = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        const double jd = static_cast<double>(j);
        p1 = z * std::sqrt(2.0 / (jd + 1.0)) * p2 - std::sqrt(jd / (jd + 1.0)) * p3;
      }
      pp = std::sqrt(2.0 * nd) * p2;
      const double step = p1 / pp;
      z -= step;
      if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    x[i] = z;
    w[i] = 2.0 / (pp * pp);
  }
  // Symmetrize against rounding.
  for (std::size_t i = 0; i < n / 2; ++i) {
    const double a = 0.5 * (x[n - 1 - i] - x[i]);
    x[i] = -a;
    x[n - 1 - i] = a;
    const double b = 0.5 * (w[i] + w[n - 1 - i]);
    w[i] = w[n - 1 - i] = b;
  }
  if (n % 2 == 1) x[n / 2] = 0.0;
  // Physicists' weight e^{-x^2} -> standard normal: x -> sqrt(2) x, w -> w / sqrt(pi).
  QuadratureRule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    r.nodes[i] = std::sqrt(2.0) * x[i];
    r.weights[i] = w[i] / std::sqrt(std::numbers::pi);
  }
  return r;
}

// Gauss-Legendre nodes/weights on [a, b] (unnormalized, weights sum to b - a).
inline QuadratureRule gauss_legendre_rule(std::size_t n, double a, double b) {
  if (n == 0) throw EmptyDimensionError("gauss_legendre_rule: n must be >= 1");
  QuadratureRule r{RealVector(n), RealVector(n)};
  const double xm = 0.5 * (b + a), xl = 0.5 * (b - a);
  const double nd = static_cast<double>(n);
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (nd + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = 1.0, p2 = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        const double jd = static_cast<double>(j);
        p1 = ((2.0 * jd + 1.0) * z * p2 - jd * p3) / (jd + 1.0);
      }
      pp = nd * (z * p1 - p2) / (z * z - 1.0);
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 3e-15) break;
    }
    r.nodes[i] = xm - xl * z;
    r.nodes[n - 1 - i] = xm + xl * z;
    r.weights[i] = 2.0 * xl / ((1.0 - z * z) * pp * pp);
    r.weights[n - 1 - i] = r.weights[i];
  }
  return r;
}

inline double std_normal_pdf(double t) noexcept {
  return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi);
}

// N(0,1) rule assembled from composite Gauss-Legendre panels on [-L, 0] and
// [0, L]. Integrands with a jump at 0 are smooth on each half, so this rule
// keeps spectral accuracy where Gauss-Hermite would not.
inline QuadratureRule split_gaussian_rule(std::size_t panels = 48, std::size_t per_panel = 16,
                                          double half_width = 12.0) {
  QuadratureRule r;
  const double h = half_width / static_cast<double>(panels);
  for (int side : {-1, 1}) {
    for (std::size_t k = 0; k < panels; ++k) {
      const double a = h * static_cast<double>(k);
      const QuadratureRule gl = gauss_legendre_rule(per_panel, a, a + h);
      for (std::size_t i = 0; i < per_panel; ++i) {
        const double t = side * gl.nodes[i];
        r.nodes.push_back(t);
        r.weights.push_back(gl.weights[i] * std_normal_pdf(t));
      }
    }
  }
  return r;
}

// Composite Simpson on [-L, 0] and [0, L]; an independent cross-check rule.
inline QuadratureRule simpson_gaussian_rule(std::size_t intervals_per_side = 4000,
                                            double half_width = 12.0) {
  if (intervals_per_side % 2 != 0) ++intervals_per_side;
  QuadratureRule r;
  const double h = half_width / static_cast<double>(intervals_per_side);
  for (int side : {-1, 1}) {
    for (std::size_t k = 0; k <= intervals_per_side; ++k) {
      const double c = (k == 0 || k == intervals_per_side) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
      // Nodes sit just inside each half so that sign(node) matches the side.
      const double t = side * std::max(h * static_cast<double>(k), 1e-300);
      r.nodes.push_back(t);
      r.weights.push_back(c * h / 3.0 * std_normal_pdf(t));
    }
  }
  return r;
}

}  // namespace fsel
