#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fsel/core/linalg.hpp"
#include "fsel/core/matrix.hpp"
#include "fsel/error.hpp"
#include "fsel/estimator.hpp"
#include "fsel/geometry.hpp"
#include "fsel/model.hpp"

namespace fsel {

struct Representation {
  RealVector beta_star;
  double sigma_star_sq = 0.0;   // |N beta*|^2
  double snr = 0.0;             // signal norm^2 / sigma*^2, +inf when sigma* = 0
  double tau_star = 1.0;        // sqrt(signal norm^2 + sigma*^2)
  double lambda_star = 0.0;     // mu / tau*
  double feasibility_residual = 0.0;  // |D beta* - z*|
  double constraint_residual = 0.0;   // excess of mu beta* over K
  std::string method;           // "kkt" or "admm"
  std::size_t iterations = 0;

  double sigma_star() const { return std::sqrt(sigma_star_sq); }
};

struct RepresentationConfig {
  double ridge = 1e-10;          // relative to mean diag of 2 N^T N (plus an absolute 1e-12)
  std::size_t max_iters = 20000; // ADMM cap
  double tol = 1e-11;            // ADMM primal/dual residual, relative
  double feasibility_tol = 1e-4; // failure threshold, relative to |z*|
};

namespace detail {

// Solver for min 1/2 b^T Q b - c^T b  s.t.  D b = z, with Q SPD.
// Q is first augmented by rho D^T D (and c by rho D^T z), which leaves the
// minimizer on the affine set unchanged but repairs a near-singular Q.
// Eliminates b = Q^{-1}(c + D^T nu) through the Schur complement D Q^{-1} D^T.
class EqualityQp {
 public:
  EqualityQp(const DenseMatrix& q, const DenseMatrix& d) : chol_(augmented(q, d, rho_)), d_(d) {
    const std::size_t p = d.rows(), n = d.cols();
    qinv_dt_ = DenseMatrix(n, p);
    for (std::size_t k = 0; k < p; ++k) {
      const RealVector col = chol_.solve(d.row(k));
      for (std::size_t j = 0; j < n; ++j) qinv_dt_(j, k) = col[j];
    }
    DenseMatrix schur = matmul(d, qinv_dt_);
    for (std::size_t a = 0; a < p; ++a)
      for (std::size_t b = a + 1; b < p; ++b) {
        const double s = 0.5 * (schur(a, b) + schur(b, a));
        schur(a, b) = schur(b, a) = s;
      }
    double tr = 0.0;
    for (std::size_t a = 0; a < p; ++a) tr += schur(a, a);
    for (std::size_t a = 0; a < p; ++a) schur(a, a) += 1e-14 * tr / static_cast<double>(std::max<std::size_t>(p, 1));
    try {
      schur_.emplace(schur);
    } catch (const NotPositiveSemidefiniteError&) {
      throw InfeasibleRepresentationError("optimal_representation: feature dictionary D is rank deficient");
    }
  }

  RealVector solve(std::span<const double> c, std::span<const double> z) const {
    RealVector ca(c.begin(), c.end());
    const RealVector dtz = tmatvec(d_, z);
    for (std::size_t j = 0; j < ca.size(); ++j) ca[j] += rho_ * dtz[j];
    const RealVector qc = chol_.solve(ca);
    RealVector r = matvec(d_, qc);
    for (std::size_t k = 0; k < r.size(); ++k) r[k] = z[k] - r[k];
    const RealVector nu = schur_->solve(r);
    RealVector b = matvec(qinv_dt_, nu);
    for (std::size_t j = 0; j < b.size(); ++j) b[j] += qc[j];
    return b;
  }

 private:
  static DenseMatrix augmented(const DenseMatrix& q, const DenseMatrix& d, double& rho) {
    const DenseMatrix dtd = gram(d);
    double tq = 0.0, td = 0.0;
    for (std::size_t j = 0; j < q.rows(); ++j) {
      tq += q(j, j);
      td += dtd(j, j);
    }
    rho = td > 0.0 ? std::max(tq, 1.0) / td : 0.0;
    DenseMatrix out = q;
    for (std::size_t i = 0; i < q.rows(); ++i)
      for (std::size_t j = 0; j < q.cols(); ++j) out(i, j) += rho * dtd(i, j);
    return out;
  }

  double rho_ = 0.0;
  Cholesky chol_;
  const DenseMatrix& d_;
  DenseMatrix qinv_dt_;
  std::optional<Cholesky> schur_;
};

// {beta : mu beta in K}; nullopt when mu = 0 (the whole space).
inline std::optional<ConstraintSet> preimage_set(const ConstraintSet& k, double mu) {
  if (mu == 0.0) return std::nullopt;
  if (k.kind() == ConstraintSet::Kind::Polytope) {
    std::vector<RealVector> v = k.vertices();
    for (auto& vert : v)
      for (auto& e : vert) e /= mu;
    return ConstraintSet::polytope(std::move(v));
  }
  return k.scaled_by(1.0 / std::abs(mu));  // balls are symmetric
}

}  // namespace detail

// beta* minimizes |N beta|^2 subject to D beta = z* and mu beta in K.
//
// The equality-constrained QP is solved directly first; if its solution
// already satisfies mu beta in K it is returned. Otherwise ADMM splits the
// problem into the equality-constrained quadratic (exact solve, factored once)
// and the projection onto K. sqrt_sigma, when given, sets the signal norm used
// in tau* to |sqrt(Sigma) z*|.
inline Representation optimal_representation(const DenseMatrix& d, const DenseMatrix& n,
                                             std::span<const double> z_star, const ConstraintSet& k,
                                             double mu, const RepresentationConfig& cfg = {},
                                             const DenseMatrix* sqrt_sigma = nullptr) {
  const std::size_t p = d.rows(), dim = d.cols();
  if (p == 0 || dim == 0) throw EmptyDimensionError("optimal_representation: empty dictionary");
  if (n.rows() > 0 && n.cols() != dim) throw ShapeError("optimal_representation: N must have d columns");
  if (z_star.size() != p) throw ShapeError("optimal_representation: z_star must have p entries");
  if (k.dim() != dim) throw ShapeError("optimal_representation: constraint set dimension != d");

  DenseMatrix q = n.rows() > 0 ? gram(n, 0.5) : DenseMatrix(dim, dim);  // 2 N^T N
  double mean_diag = 0.0;
  for (std::size_t j = 0; j < dim; ++j) mean_diag += q(j, j);
  mean_diag /= static_cast<double>(dim);
  const double ridge = cfg.ridge * mean_diag + 1e-12;
  for (std::size_t j = 0; j < dim; ++j) q(j, j) += ridge;

  const auto kp = detail::preimage_set(k, mu);
  const double z_norm = norm2(z_star);
  const RealVector zero(dim, 0.0);
  RealVector beta = detail::EqualityQp(q, d).solve(zero, z_star);
  std::string method = "kkt";
  std::size_t iters = 0;

  const double scale = std::max(1.0, norm2(beta));
  if (kp && infeasibility(*kp, beta) > 1e-12 * scale) {
    method = "admm";
    double rho = std::max(mean_diag, 1e-6);
    auto factor = [&](double r) {
      DenseMatrix qr = q;
      for (std::size_t j = 0; j < dim; ++j) qr(j, j) += r;
      return std::make_unique<detail::EqualityQp>(qr, d);
    };
    auto sub = factor(rho);
    RealVector gamma = project(*kp, beta), u(dim, 0.0), c(dim);
    for (iters = 1; iters <= cfg.max_iters; ++iters) {
      for (std::size_t j = 0; j < dim; ++j) c[j] = rho * (gamma[j] - u[j]);
      beta = sub->solve(c, z_star);
      RealVector w(dim);
      for (std::size_t j = 0; j < dim; ++j) w[j] = beta[j] + u[j];
      const RealVector g_old = gamma;
      gamma = project(*kp, w);
      double prim = 0.0, dual = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        u[j] += beta[j] - gamma[j];
        prim += (beta[j] - gamma[j]) * (beta[j] - gamma[j]);
        dual += (gamma[j] - g_old[j]) * (gamma[j] - g_old[j]);
      }
      prim = std::sqrt(prim);
      dual = rho * std::sqrt(dual);
      const double sc = std::max(1.0, norm2(gamma));
      if (prim <= cfg.tol * sc && dual <= cfg.tol * sc * std::max(1.0, rho)) break;
      // Residual balancing; u is the scaled dual, so it rescales with rho.
      if (iters % 25 == 0 && (prim > 10.0 * dual || dual > 10.0 * prim)) {
        const double f = prim > dual ? 2.0 : 0.5;
        rho *= f;
        for (auto& e : u) e /= f;
        sub = factor(rho);
      }
    }
    beta = gamma;  // exactly feasible for K; the equality holds to the residual below
  }

  Representation rep;
  rep.method = method;
  rep.iterations = iters;
  const RealVector nb = n.rows() > 0 ? matvec(n, beta) : RealVector{};
  rep.sigma_star_sq = dot(nb, nb);
  rep.feasibility_residual = norm2(subtract(matvec(d, beta), z_star));
  rep.constraint_residual = mu == 0.0 ? 0.0 : infeasibility(k, scaled(beta, mu));
  if (rep.feasibility_residual > cfg.feasibility_tol * std::max(z_norm, 1e-300)) {
    throw InfeasibleRepresentationError(
        "optimal_representation: |D beta - z*| = " + std::to_string(rep.feasibility_residual) +
        " exceeds " + std::to_string(cfg.feasibility_tol) + " |z*|; K is too small or D does not reach z*");
  }
  const double signal_sq = sqrt_sigma ? dot(matvec(*sqrt_sigma, z_star), matvec(*sqrt_sigma, z_star))
                                      : z_norm * z_norm;
  rep.snr = rep.sigma_star_sq > 0.0 ? signal_sq / rep.sigma_star_sq : std::numeric_limits<double>::infinity();
  rep.tau_star = std::sqrt(signal_sq + rep.sigma_star_sq);
  rep.lambda_star = mu / rep.tau_star;
  rep.beta_star = std::move(beta);
  return rep;
}

// y''_i = f(<x_i, beta*> / tau*), reusing the nuisance draw of observation i.
inline RealVector rescaled_outputs(const SampleSet& ss, std::span<const double> beta_star,
                                   const Nonlinearity& f, double tau_star) {
  if (beta_star.size() != ss.x.cols()) throw ShapeError("rescaled_outputs: beta length != d");
  if (!(tau_star > 0.0)) throw PreconditionError("rescaled_outputs: tau* must be positive");
  const RealVector v = matvec(ss.x, beta_star);
  RealVector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = f.apply(v[i] / tau_star, ss.nuisance[i]);
  return out;
}

// sqrt(mean |a - b|^2)
inline double noise_parameter(std::span<const double> y_ref, std::span<const double> y_dd) {
  if (y_ref.size() != y_dd.size()) throw ShapeError("noise_parameter: length mismatch");
  if (y_ref.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < y_ref.size(); ++i) s += (y_ref[i] - y_dd[i]) * (y_ref[i] - y_dd[i]);
  return std::sqrt(s / static_cast<double>(y_ref.size()));
}

// Probability that sign(s) != sign(s + n) for s ~ N(0,1), n ~ N(0, sigma*^2).
inline double bitflip_probability(double sigma_star) {
  if (!(sigma_star >= 0.0)) throw PreconditionError("bitflip_probability: sigma* must be >= 0");
  if (sigma_star == 0.0) return 0.0;
  const double p = 0.5 - std::atan(1.0 / sigma_star) / std::numbers::pi;
  return std::clamp(p, 0.0, 0.5);
}

// sqrt(2 - 2 / sqrt(1 + sigma*^2))
inline double linear_mismatch_std(double sigma_star) {
  if (!(sigma_star >= 0.0)) throw PreconditionError("linear_mismatch_std: sigma* must be >= 0");
  return std::sqrt(std::max(0.0, 2.0 - 2.0 / std::sqrt(1.0 + sigma_star * sigma_star)));
}

// |sqrt(Sigma) (z_hat - lambda* z*)|
inline double selection_error(std::span<const double> z_hat, std::span<const double> z_star,
                              double lambda_star, const DenseMatrix* sqrt_sigma = nullptr) {
  if (z_hat.size() != z_star.size()) throw ShapeError("selection_error: length mismatch");
  RealVector r(z_hat.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = z_hat[i] - lambda_star * z_star[i];
  return sqrt_sigma ? norm2(matvec(*sqrt_sigma, r)) : norm2(r);
}

}  // namespace fsel
