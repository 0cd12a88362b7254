#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fsel/core/rng.hpp"
#include "fsel/error.hpp"

namespace fsel {

// Dense row-major real matrix.
class DenseMatrix {
 public:
  DenseMatrix() = default;

  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
      : rows_(rows), cols_(cols), data_(std::move(entries)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("DenseMatrix: entry count " + std::to_string(data_.size()) +
                       " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ShapeError("DenseMatrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static DenseMatrix diagonal(std::span<const double> diag) {
    DenseMatrix m(diag.size(), diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  RealVector column(std::size_t j) const {
    RealVector c(rows_);
    for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
    return c;
  }

  std::span<double> entries() noexcept { return data_; }
  std::span<const double> entries() const noexcept { return data_; }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Vector helpers

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double norm1(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += std::abs(v);
  return s;
}

inline double norm_inf(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s = std::max(s, std::abs(v));
  return s;
}

inline RealVector subtract(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("subtract: length mismatch");
  RealVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline RealVector scaled(std::span<const double> a, double c) {
  RealVector out(a.begin(), a.end());
  for (auto& v : out) v *= c;
  return out;
}

inline double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t k = 0; k < a.entries().size(); ++k) {
    m = std::max(m, std::abs(a.entries()[k] - b.entries()[k]));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Matrix products

// y = M x
inline RealVector matvec(const DenseMatrix& m, std::span<const double> x) {
  if (m.cols() != x.size()) {
    throw ShapeError("matvec: matrix has " + std::to_string(m.cols()) + " columns, vector has " +
                     std::to_string(x.size()) + " entries");
  }
  RealVector y(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j) s += r[j] * x[j];
    y[i] = s;
  }
  return y;
}

// y = M^T x
inline RealVector tmatvec(const DenseMatrix& m, std::span<const double> x) {
  if (m.rows() != x.size()) {
    throw ShapeError("tmatvec: matrix has " + std::to_string(m.rows()) + " rows, vector has " +
                     std::to_string(x.size()) + " entries");
  }
  RealVector y(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const auto r = m.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) y[j] += xi * r[j];
  }
  return y;
}

inline DenseMatrix transpose(const DenseMatrix& m) {
  DenseMatrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                     std::to_string(b.rows()) + " differ");
  }
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ci = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const auto bk = b.row(k);
      for (std::size_t j = 0; j < bk.size(); ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

// X^T X / scale, exploiting symmetry.
inline DenseMatrix gram(const DenseMatrix& x, double scale = 1.0) {
  const std::size_t n = x.cols();
  DenseMatrix g(n, n);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto r = x.row(i);
    for (std::size_t a = 0; a < n; ++a) {
      const double ra = r[a];
      if (ra == 0.0) continue;
      auto ga = g.row(a);
      for (std::size_t b = a; b < n; ++b) ga[b] += ra * r[b];
    }
  }
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a; b < n; ++b) {
      g(a, b) /= scale;
      g(b, a) = g(a, b);
    }
  }
  return g;
}

// Largest singular value by power iteration on M^T M. The start vector is
// deterministic (1 + j/n, normalized), so the result is reproducible.
inline double operator_norm(const DenseMatrix& m, double rel_tol = 1e-9,
                            std::size_t max_iters = 20000) {
  if (m.rows() == 0 || m.cols() == 0) return 0.0;
  const std::size_t n = m.cols();
  RealVector v(n);
  for (std::size_t j = 0; j < n; ++j) v[j] = 1.0 + static_cast<double>(j) / static_cast<double>(n);
  double nv = norm2(v);
  for (auto& e : v) e /= nv;

  double sigma = 0.0;
  for (std::size_t it = 0; it < max_iters; ++it) {
    RealVector w = tmatvec(m, matvec(m, v));
    const double nw = norm2(w);
    if (nw == 0.0) {
      // Start vector in the null space; fall back to a coordinate sweep.
      double best = 0.0;
      for (std::size_t j = 0; j < n; ++j) best = std::max(best, norm2(m.column(j)));
      if (best == 0.0) return 0.0;
      v.assign(n, 0.0);
      for (std::size_t j = 0; j < n; ++j)
        if (norm2(m.column(j)) == best) { v[j] = 1.0; break; }
      continue;
    }
    const double next = std::sqrt(nw);  // ||M^T M v|| -> sigma^2 for unit v
    for (std::size_t j = 0; j < n; ++j) v[j] = w[j] / nw;
    if (it > 0 && std::abs(next - sigma) <= rel_tol * next) {
      sigma = next;
      break;
    }
    sigma = next;
  }
  // Rayleigh quotient of the final iterate is the sharper estimate.
  return std::max(sigma, norm2(matvec(m, v)));
}

}  // namespace fsel
