#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>

#include "fsel/core/matrix.hpp"
#include "fsel/error.hpp"

namespace fsel {

struct SymmetricEigen {
  RealVector values;     // ascending
  DenseMatrix vectors;   // column k is the eigenvector of values[k]
};

inline double max_asymmetry(const DenseMatrix& m) {
  double a = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i + 1; j < m.cols(); ++j) a = std::max(a, std::abs(m(i, j) - m(j, i)));
  return a;
}

// Cyclic Jacobi eigenvalue iteration for a symmetric matrix. Only the upper
// triangle is read. Converges quadratically; intended for p up to a few
// hundred.
inline SymmetricEigen jacobi_eigen(const DenseMatrix& sym, std::size_t max_sweeps = 100) {
  if (sym.rows() != sym.cols()) throw ShapeError("jacobi_eigen: matrix is not square");
  const std::size_t n = sym.rows();
  DenseMatrix a = sym;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) a(i, j) = a(j, i);
  DenseMatrix v = DenseMatrix::identity(n);

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };
  double scale = 0.0;
  for (double e : a.entries()) scale = std::max(scale, std::abs(e));

  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    if (off_norm() <= 1e-15 * std::max(scale, 1e-300)) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });
  SymmetricEigen out{RealVector(n), DenseMatrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
  }
  return out;
}

// V diag(h(lambda)) V^T
template <typename Fn>
DenseMatrix spectral_apply(const SymmetricEigen& eig, Fn&& h) {
  const std::size_t n = eig.values.size();
  DenseMatrix out(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const double hk = h(eig.values[k]);
    if (hk == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const double vik = eig.vectors(i, k) * hk;
      if (vik == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out(i, j) += vik * eig.vectors(j, k);
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double s = 0.5 * (out(i, j) + out(j, i));
      out(i, j) = s;
      out(j, i) = s;
    }
  return out;
}

namespace detail {

inline SymmetricEigen checked_psd_eigen(const DenseMatrix& sigma, std::optional<double> tol,
                                        double* resolved_tol) {
  if (sigma.rows() != sigma.cols()) throw ShapeError("sym_sqrt: matrix is not square");
  if (!sigma.all_finite()) throw NumericalError("sym_sqrt: non-finite entry");
  SymmetricEigen eig = jacobi_eigen(sigma);
  double largest = 0.0;
  for (double l : eig.values) largest = std::max(largest, std::abs(l));
  const double t = tol.value_or(1e-10 * largest);
  const double sym_tol = tol.value_or(1e-10 * std::max(largest, 1.0));
  if (max_asymmetry(sigma) > sym_tol) {
    throw ShapeError("sym_sqrt: matrix is not symmetric within " + std::to_string(sym_tol));
  }
  if (!eig.values.empty() && eig.values.front() < -t) {
    throw NotPositiveSemidefiniteError("sym_sqrt: eigenvalue " + std::to_string(eig.values.front()) +
                                       " below -" + std::to_string(t));
  }
  if (resolved_tol) *resolved_tol = t;
  return eig;
}

}  // namespace detail

// Unique symmetric positive semidefinite square root. Eigenvalues in
// [-tol, 0) are clamped to zero; tol defaults to 1e-10 * largest |eigenvalue|.
inline DenseMatrix sym_sqrt(const DenseMatrix& sigma, std::optional<double> tol = std::nullopt) {
  const SymmetricEigen eig = detail::checked_psd_eigen(sigma, tol, nullptr);
  return spectral_apply(eig, [](double l) { return l > 0.0 ? std::sqrt(l) : 0.0; });
}

// || sqrt(Sigma)^{-1} ||_op = 1 / sqrt(lambda_min(Sigma)).
inline double inverse_sqrt_norm(const DenseMatrix& sigma) {
  const SymmetricEigen eig = detail::checked_psd_eigen(sigma, std::nullopt, nullptr);
  if (eig.values.empty() || eig.values.front() <= 0.0) {
    throw NotPositiveSemidefiniteError("inverse_sqrt_norm: matrix is singular");
  }
  return 1.0 / std::sqrt(eig.values.front());
}

// In-place Cholesky factor (lower triangle) of an SPD matrix.
class Cholesky {
 public:
  explicit Cholesky(const DenseMatrix& spd) : l_(spd) {
    if (spd.rows() != spd.cols()) throw ShapeError("Cholesky: matrix is not square");
    const std::size_t n = l_.rows();
    for (std::size_t j = 0; j < n; ++j) {
      double d = l_(j, j);
      for (std::size_t k = 0; k < j; ++k) d -= l_(j, k) * l_(j, k);
      if (!(d > 0.0)) {
        throw NotPositiveSemidefiniteError("Cholesky: pivot " + std::to_string(j) +
                                           " is not positive");
      }
      const double ljj = std::sqrt(d);
      l_(j, j) = ljj;
      for (std::size_t i = j + 1; i < n; ++i) {
        double s = l_(i, j);
        const auto li = l_.row(i);
        const auto lj = l_.row(j);
        for (std::size_t k = 0; k < j; ++k) s -= li[k] * lj[k];
        l_(i, j) = s / ljj;
      }
      for (std::size_t i = 0; i < j; ++i) l_(i, j) = 0.0;
    }
  }

  RealVector solve(std::span<const double> b) const {
    const std::size_t n = l_.rows();
    if (b.size() != n) throw ShapeError("Cholesky::solve: length mismatch");
    RealVector y(b.begin(), b.end());
    for (std::size_t i = 0; i < n; ++i) {
      double s = y[i];
      const auto li = l_.row(i);
      for (std::size_t k = 0; k < i; ++k) s -= li[k] * y[k];
      y[i] = s / l_(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = y[ii];
      for (std::size_t k = ii + 1; k < n; ++k) s -= l_(k, ii) * y[k];
      y[ii] = s / l_(ii, ii);
    }
    return y;
  }

  const DenseMatrix& factor() const noexcept { return l_; }

 private:
  DenseMatrix l_;
};

}  // namespace fsel
