#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fsel/core/matrix.hpp"
#include "fsel/error.hpp"
#include "fsel/geometry.hpp"
#include "fsel/loss.hpp"

namespace fsel {

struct SolverConfig {
  std::size_t max_iters = 5000;
  double grad_tol = 1e-7;        // on the gradient-mapping norm
  double init_step = 1.0;
  double shrink = 0.5;
  double sufficient_decrease = 1e-4;
  double objective_tol = 1e-12;  // relative decrease floor
  std::size_t stall_window = 20; // consecutive sub-floor decreases before stopping
  bool accelerate = true;        // Nesterov momentum with restart; false = plain PGD
  bool record_trace = true;
};

enum class StopReason { GradientMapping, ObjectiveStall, LineSearchExhausted, IterationCap };

inline std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::GradientMapping: return "gradient_mapping";
    case StopReason::ObjectiveStall: return "objective_stall";
    case StopReason::LineSearchExhausted: return "line_search_exhausted";
    case StopReason::IterationCap: return "iteration_cap";
  }
  return "?";
}

struct FitResult {
  RealVector beta_hat;
  std::optional<RealVector> z_hat;
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  StopReason stop = StopReason::IterationCap;
  double grad_mapping = 0.0;
  double max_infeasibility = 0.0;  // over all iterates
  RealVector objective_trace;      // objective at iterate 0, 1, ...
};

// Process-wide counters so test suites can assert properties of every fit.
struct FitDiagnostics {
  std::atomic<std::uint64_t> fits{0};
  std::atomic<std::uint64_t> trace_violations{0};
  std::atomic<std::uint64_t> feasibility_violations{0};
};

inline FitDiagnostics& fit_diagnostics() {
  static FitDiagnostics d;
  return d;
}

// Cheap exact excess for balls; distance for polytopes.
inline double infeasibility(const ConstraintSet& k, std::span<const double> beta) {
  switch (k.kind()) {
    case ConstraintSet::Kind::L1Ball: return std::max(0.0, norm1(beta) - k.radius());
    case ConstraintSet::Kind::L2Ball: return std::max(0.0, norm2(beta) - k.radius());
    case ConstraintSet::Kind::Polytope: return distance_to(k, beta);
  }
  return 0.0;
}

namespace detail {

inline std::string dump_iterate(std::span<const double> beta, std::size_t it) {
  std::ostringstream os;
  os.precision(17);
  os << "iteration " << it << ", beta[0.." << std::min<std::size_t>(beta.size(), 8) << ") = (";
  for (std::size_t i = 0; i < std::min<std::size_t>(beta.size(), 8); ++i) os << (i ? ", " : "") << beta[i];
  os << (beta.size() > 8 ? ", ...)" : ")");
  return os.str();
}

// Objective and gradient of the empirical loss. Square loss with m >= d is
// evaluated through the Gram matrix X^T X / m.
class EmpiricalLoss {
 public:
  EmpiricalLoss(const DenseMatrix& x, std::span<const double> y, const LossFunction& loss)
      : x_(x), y_(y.begin(), y.end()), loss_(loss), m_(static_cast<double>(x.rows())) {
    if (loss.kind() == LossFunction::Kind::Square && x.rows() >= x.cols()) {
      gram_ = gram(x, m_);
      b_ = tmatvec(x, y_);
      for (auto& v : *b_) v /= m_;
      c_ = 0.5 * dot(y_, y_) / m_;
    }
  }

  std::size_t dim() const { return x_.cols(); }

  // Returns f(beta); fills grad when non-null.
  double eval(std::span<const double> beta, RealVector* grad) const {
    if (gram_) {
      const RealVector gb = matvec(*gram_, beta);
      const double f = 0.5 * dot(beta, gb) - dot(*b_, beta) + c_;
      if (grad) {
        grad->resize(gb.size());
        for (std::size_t j = 0; j < gb.size(); ++j) (*grad)[j] = gb[j] - (*b_)[j];
      }
      return f;
    }
    const RealVector v = matvec(x_, beta);
    double f = 0.0;
    RealVector w(grad ? v.size() : 0);
    for (std::size_t i = 0; i < v.size(); ++i) {
      f += loss_.value(v[i], y_[i]);
      if (grad) w[i] = loss_.d1(v[i], y_[i]) / m_;
    }
    if (grad) *grad = tmatvec(x_, w);
    return f / m_;
  }

 private:
  const DenseMatrix& x_;
  RealVector y_;
  const LossFunction& loss_;
  double m_;
  std::optional<DenseMatrix> gram_;
  std::optional<RealVector> b_;
  double c_ = 0.0;
};

inline bool all_finite(std::span<const double> v) {
  for (double e : v)
    if (!std::isfinite(e)) return false;
  return true;
}

}  // namespace detail

// Projected gradient descent from beta = 0. The first trial step is
// cfg.init_step; afterwards each search starts from twice the last accepted
// step. The objective trace is monotone by construction.
//
// Plain mode (cfg.accelerate = false) backtracks with the Armijo rule along
// the projection arc. Accelerated mode is monotone FISTA: the gradient step
// is taken from an extrapolated point with descent-lemma backtracking, the
// iterate only moves when the objective does not increase, and momentum is
// restarted when the step points against the last move. In both modes the
// gradient-mapping stop is only taken on a step from the iterate itself.
inline FitResult fit(const DenseMatrix& x, std::span<const double> y, const LossFunction& loss,
                     const ConstraintSet& k, const SolverConfig& cfg = {}) {
  const std::size_t m = x.rows(), d = x.cols();
  if (m == 0) throw EmptyDimensionError("fit: need at least one sample");
  if (y.size() != m) throw ShapeError("fit: y has " + std::to_string(y.size()) + " entries, X has " + std::to_string(m) + " rows");
  if (k.dim() != d) throw ShapeError("fit: constraint set dimension " + std::to_string(k.dim()) + " != d = " + std::to_string(d));
  if (!(cfg.grad_tol > 0.0 && cfg.init_step > 0.0 && cfg.shrink > 0.0 && cfg.shrink < 1.0 &&
        cfg.sufficient_decrease > 0.0 && cfg.max_iters > 0)) {
    throw PreconditionError("fit: solver configuration values must be positive (shrink in (0,1))");
  }

  const detail::EmpiricalLoss obj(x, y, loss);
  FitResult res;
  RealVector beta(d, 0.0), grad;
  double f = obj.eval(beta, &grad);
  if (!std::isfinite(f) || !detail::all_finite(grad)) {
    throw NumericalError("fit: non-finite loss or gradient at " + detail::dump_iterate(beta, 0));
  }
  if (cfg.record_trace) res.objective_trace.push_back(f);
  res.max_infeasibility = infeasibility(k, beta);

  // Search point: beta itself or, with momentum, an extrapolation.
  RealVector ypt = beta, gy = grad;
  double fy = f, t = 1.0;
  bool at_iterate = true;

  double step = cfg.init_step;
  std::size_t stalled = 0;
  RealVector trial(d), next, moved(d);
  res.stop = StopReason::IterationCap;
  std::size_t it = 0;
  for (; it < cfg.max_iters; ++it) {
    bool accepted = false;
    double f_next = fy, gm = 0.0;
    for (int ls = 0; ls < 200; ++ls) {
      for (std::size_t j = 0; j < d; ++j) trial[j] = ypt[j] - step * gy[j];
      next = project(k, trial);
      double gd = 0.0, dist_sq = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double dj = next[j] - ypt[j];
        gd += gy[j] * dj;
        dist_sq += dj * dj;
      }
      gm = std::sqrt(dist_sq) / step;
      f_next = obj.eval(next, nullptr);
      const bool ok = cfg.accelerate ? f_next <= fy + gd + 0.5 * dist_sq / step
                                     : f_next <= fy + cfg.sufficient_decrease * gd && f_next <= fy;
      if (std::isfinite(f_next) && ok) {
        accepted = true;
        break;
      }
      step *= cfg.shrink;
      if (step < 1e-20) {
        if (!std::isfinite(f_next)) {
          throw NumericalError("fit: non-finite loss at every trial step, " + detail::dump_iterate(next, it + 1));
        }
        break;
      }
    }
    if (!accepted && !at_iterate) {
      // Retry from the iterate without momentum.
      f = obj.eval(beta, &grad);
      ypt = beta;
      gy = grad;
      fy = f;
      t = 1.0;
      at_iterate = true;
      step = cfg.init_step;
      continue;
    }
    res.grad_mapping = gm;
    if (!accepted) {
      res.stop = StopReason::LineSearchExhausted;
      break;
    }
    step *= 2.0;

    // Monotone update: keep beta when the new point is worse.
    const bool improves = f_next <= f;
    const double decrease = improves ? f - f_next : 0.0;
    for (std::size_t j = 0; j < d; ++j) moved[j] = next[j] - beta[j];
    double restart = 0.0;
    for (std::size_t j = 0; j < d; ++j) restart += (ypt[j] - next[j]) * moved[j];
    const RealVector beta_old = beta;
    if (improves) {
      beta = next;
      f = f_next;
      res.max_infeasibility = std::max(res.max_infeasibility, infeasibility(k, beta));
    }
    if (cfg.record_trace) res.objective_trace.push_back(f);

    // The mapping is measured at an accepted step, never at an oversized
    // trial where it would be artificially small.
    if (at_iterate && gm <= cfg.grad_tol) {
      res.stop = StopReason::GradientMapping;
      ++it;
      break;
    }
    stalled = decrease <= cfg.objective_tol * std::max(1.0, std::abs(f)) ? stalled + 1 : 0;
    if (stalled >= cfg.stall_window) {
      res.stop = StopReason::ObjectiveStall;
      ++it;
      break;
    }

    const bool momentum = cfg.accelerate && improves && restart <= 0.0 && gm > cfg.grad_tol;
    if (momentum) {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      for (std::size_t j = 0; j < d; ++j)
        ypt[j] = beta[j] + (t / t_next) * (next[j] - beta[j]) + ((t - 1.0) / t_next) * (beta[j] - beta_old[j]);
      t = t_next;
      fy = obj.eval(ypt, &gy);
      at_iterate = false;
      if (std::isfinite(fy) && detail::all_finite(gy)) continue;
    }
    grad.clear();
    f = obj.eval(beta, &grad);
    if (!std::isfinite(f) || !detail::all_finite(grad)) {
      throw NumericalError("fit: non-finite loss or gradient at " + detail::dump_iterate(beta, it + 1));
    }
    ypt = beta;
    gy = grad;
    fy = f;
    t = 1.0;
    at_iterate = true;
  }
  res.iterations = it;
  res.converged = res.stop != StopReason::IterationCap;
  res.objective = f;
  res.beta_hat = std::move(beta);

  auto& diag = fit_diagnostics();
  diag.fits.fetch_add(1, std::memory_order_relaxed);
  for (std::size_t t = 1; t < res.objective_trace.size(); ++t) {
    if (res.objective_trace[t] > res.objective_trace[t - 1] + 1e-12) {
      diag.trace_violations.fetch_add(1, std::memory_order_relaxed);
      break;
    }
  }
  if (res.max_infeasibility > 1e-9) diag.feasibility_violations.fetch_add(1, std::memory_order_relaxed);
  return res;
}

// z = D beta
inline RealVector to_signal_domain(std::span<const double> beta, const DenseMatrix& d) {
  return matvec(d, beta);
}

// Square loss over the l1 ball of radius r.
inline FitResult lasso(const DenseMatrix& x, std::span<const double> y, double r, const SolverConfig& cfg = {}) {
  return fit(x, y, LossFunction::square(), ConstraintSet::l1_ball(r, x.cols()), cfg);
}

}  // namespace fsel
