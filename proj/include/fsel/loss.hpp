#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fsel/core/quadrature.hpp"
#include "fsel/core/rng.hpp"
#include "fsel/error.hpp"
#include "fsel/model.hpp"

namespace fsel {

namespace detail {
// 1 / (1 + e^{-t}) without overflow.
inline double logistic_sigmoid(double t) noexcept {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}
// log(1 + e^t) without overflow.
inline double softplus(double t) noexcept {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}
}  // namespace detail

// L(v, y) with its first two v-derivatives. Custom losses exist for testing the
// condition checker; the estimator dispatches the built-in kinds directly.
class LossFunction {
 public:
  enum class Kind { Square, Logistic, Custom };
  using Fn = std::function<double(double, double)>;

  static LossFunction square() { return LossFunction(Kind::Square, 1.0); }

  // -y v + log(1 + exp(-y v)), the form stated for the logistic loss. Note
  // this is unbounded below in y v; on y in {-1, +1} its d1 is 1.5-Lipschitz
  // in y.
  static LossFunction logistic() { return LossFunction(Kind::Logistic, 1.5); }

  static LossFunction custom(Fn value, Fn d1, Fn d2, double lipschitz_d1,
                             std::function<double(double)> floor) {
    LossFunction l(Kind::Custom, lipschitz_d1);
    l.value_ = std::move(value);
    l.d1_ = std::move(d1);
    l.d2_ = std::move(d2);
    l.floor_ = std::move(floor);
    return l;
  }

  Kind kind() const noexcept { return kind_; }
  double lipschitz_d1() const noexcept { return lipschitz_; }

  std::string name() const {
    switch (kind_) {
      case Kind::Square: return "square";
      case Kind::Logistic: return "logistic";
      case Kind::Custom: return "custom";
    }
    return "?";
  }

  double value(double v, double y) const {
    switch (kind_) {
      case Kind::Square: return 0.5 * (v - y) * (v - y);
      case Kind::Logistic: return -y * v + detail::softplus(-y * v);
      case Kind::Custom: return value_(v, y);
    }
    return 0.0;
  }

  double d1(double v, double y) const {
    switch (kind_) {
      case Kind::Square: return v - y;
      case Kind::Logistic: return -y * (1.0 + detail::logistic_sigmoid(-y * v));
      case Kind::Custom: return d1_(v, y);
    }
    return 0.0;
  }

  double d2(double v, double y) const {
    switch (kind_) {
      case Kind::Square: return 1.0;
      case Kind::Logistic: {
        const double s = detail::logistic_sigmoid(-y * v);
        return y * y * s * (1.0 - s);
      }
      case Kind::Custom: return d2_(v, y);
    }
    return 0.0;
  }

  // Lower bound F(v) on d2(v, .) over the observation domain {-1, +1} (logistic)
  // or R (square).
  double convexity_floor(double v) const {
    switch (kind_) {
      case Kind::Square: return 1.0;
      case Kind::Logistic: {
        const double e = std::exp(-std::abs(v));  // e^{|v|}/(1+e^{|v|})^2 = e^{-|v|}/(1+e^{-|v|})^2
        return e / ((1.0 + e) * (1.0 + e));
      }
      case Kind::Custom: return floor_(v);
    }
    return 0.0;
  }

 private:
  LossFunction(Kind k, double lip) : kind_(k), lipschitz_(lip) {}

  Kind kind_;
  double lipschitz_;
  Fn value_, d1_, d2_;
  std::function<double(double)> floor_;
};

// ---------------------------------------------------------------------------
// Loss condition checks on a grid

struct LossConditionReport {
  bool passed = true;
  double min_d2 = INFINITY;
  double max_lipschitz_ratio = 0.0;
  double max_fd_error = 0.0;
  std::vector<std::string> violations;  // "what at (v, y)"
};

inline LossConditionReport verify_loss_conditions(const LossFunction& loss,
                                                  const RealVector& v_grid,
                                                  const RealVector& y_grid) {
  LossConditionReport rep;
  auto flag = [&](const std::string& what, double v, double y) {
    rep.passed = false;
    if (rep.violations.size() < 32) {
      rep.violations.push_back(what + " at (v=" + std::to_string(v) + ", y=" + std::to_string(y) + ")");
    }
  };
  for (double v : v_grid) {
    const double floor = loss.convexity_floor(v);
    if (!(floor > 0.0)) flag("convexity floor not positive", v, 0.0);
    for (double y : y_grid) {
      const double d2 = loss.d2(v, y);
      rep.min_d2 = std::min(rep.min_d2, d2);
      if (!(d2 > 0.0)) flag("d2 not positive", v, y);
      if (d2 < floor * (1.0 - 1e-12)) flag("d2 below convexity floor", v, y);

      const double h = 1e-5 * std::max(1.0, std::abs(v));
      const double fd = (loss.value(v + h, y) - loss.value(v - h, y)) / (2.0 * h);
      const double d1 = loss.d1(v, y);
      const double err = std::abs(d1 - fd) / std::max(1.0, std::abs(d1));
      rep.max_fd_error = std::max(rep.max_fd_error, err);
      if (err > 1e-5) flag("d1 disagrees with finite difference", v, y);

      for (double y2 : y_grid) {
        if (y2 == y) continue;
        const double ratio = std::abs(d1 - loss.d1(v, y2)) / std::abs(y - y2);
        rep.max_lipschitz_ratio = std::max(rep.max_lipschitz_ratio, ratio);
        if (ratio > loss.lipschitz_d1() * (1.0 + 1e-12)) flag("d1 Lipschitz bound exceeded", v, y);
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Model parameters mu, rho, eta

enum class ParamMethod { ClosedForm, Quadrature, MonteCarlo };

inline std::string to_string(ParamMethod m) {
  switch (m) {
    case ParamMethod::ClosedForm: return "closed_form";
    case ParamMethod::Quadrature: return "quadrature";
    case ParamMethod::MonteCarlo: return "monte_carlo";
  }
  return "?";
}

struct ModelParams {
  double mu = 0.0;
  double rho = 0.0;
  double eta = 0.0;
  ParamMethod method = ParamMethod::ClosedForm;
  // Monte Carlo only; separate standard errors for mu, rho^2, eta^2.
  std::optional<double> stderr_mu;
  std::optional<double> stderr_rho_sq;
  std::optional<double> stderr_eta_sq;

  double rho_sq() const noexcept { return rho * rho; }
  double eta_sq() const noexcept { return eta * eta; }
  // mu = 0: g and f(g) are uncorrelated and nothing can be recovered.
  bool recovery_impossible() const noexcept { return std::abs(mu) < 1e-12; }
};

namespace detail {

// Weighted nuisance values of a random output rule.
inline QuadratureRule nuisance_rule(const Nonlinearity& f) {
  switch (f.kind()) {
    case Nonlinearity::Kind::BitFlip:
      return {{1.0, -1.0}, {f.keep_prob(), 1.0 - f.keep_prob()}};
    case Nonlinearity::Kind::LinearNoise:
      return f.noise_std() > 0.0 ? gauss_hermite_rule(32) : QuadratureRule{{0.0}, {1.0}};
    default:
      return {{0.0}, {1.0}};
  }
}

// E[h(g, f(g))] by product quadrature over (g, nuisance).
template <typename Fn>
double expect_pair(const Nonlinearity& f, const QuadratureRule& g_rule,
                   const QuadratureRule& nu_rule, Fn&& h) {
  double s = 0.0;
  for (std::size_t k = 0; k < nu_rule.nodes.size(); ++k) {
    const double xi = nu_rule.nodes[k];
    s += nu_rule.weights[k] * g_rule.expect([&](double g) { return h(g, f.apply(g, xi)); });
  }
  return s;
}

inline const QuadratureRule& hermite200() {
  static const QuadratureRule r = gauss_hermite_rule(200);
  return r;
}
inline const QuadratureRule& split_rule() {
  static const QuadratureRule r = split_gaussian_rule();
  return r;
}

inline double bisect_root(const std::function<double(double)>& h, double lo, double hi,
                          const std::string& what) {
  double flo = h(lo), fhi = h(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo < 0.0) == (fhi < 0.0)) {
    throw IncompatibleModelError(what + ": E[L'(mu g, f(g)) g] has no sign change on [" +
                                 std::to_string(lo) + ", " + std::to_string(hi) + "] (h(lo)=" +
                                 std::to_string(flo) + ", h(hi)=" + std::to_string(fhi) + ")");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = h(mid);
    if (std::abs(fm) <= 1e-8 || hi - lo <= 1e-15) return mid;
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

inline ModelParams closed_form_square(const Nonlinearity& f) {
  const double c = std::sqrt(2.0 / std::numbers::pi);
  ModelParams mp;
  mp.method = ParamMethod::ClosedForm;
  switch (f.kind()) {
    case Nonlinearity::Kind::Sign:
      mp.mu = c;
      mp.rho = mp.eta = std::sqrt(1.0 - 2.0 / std::numbers::pi);
      break;
    case Nonlinearity::Kind::BitFlip: {
      mp.mu = (2.0 * f.keep_prob() - 1.0) * c;
      const double r2 = 1.0 - (2.0 / std::numbers::pi) * (1.0 - 2.0 * f.keep_prob()) * (1.0 - 2.0 * f.keep_prob());
      mp.rho = mp.eta = std::sqrt(std::max(0.0, r2));
      break;
    }
    case Nonlinearity::Kind::LinearNoise:
      mp.mu = f.scale();
      mp.rho = mp.eta = f.noise_std();
      break;
    case Nonlinearity::Kind::Identity:
      mp.mu = 1.0;
      mp.rho = mp.eta = 0.0;
      break;
  }
  return mp;
}

}  // namespace detail

// mu solves E[L'(mu g, f(g)) g] = 0, rho^2 = E[L'(mu g, f(g))^2],
// eta^2 = E[L'(mu g, f(g))^2 g^2], g ~ N(0,1).
//
// ClosedForm exists for the square loss only. Quadrature uses 200-node
// Gauss-Hermite in g when f is continuous and split Gauss-Legendre panels when
// f jumps at 0; the nuisance of a random f is integrated by its own rule.
// MonteCarlo uses n_draws joint draws of (g, nuisance) from rng.
inline ModelParams model_params(const LossFunction& loss, const Nonlinearity& f, ParamMethod method,
                                std::size_t n_draws = 1000000, RngStream* rng = nullptr) {
  if (method == ParamMethod::ClosedForm) {
    if (loss.kind() != LossFunction::Kind::Square) {
      throw PreconditionError("model_params: closed form only available for the square loss");
    }
    return detail::closed_form_square(f);
  }

  if (method == ParamMethod::Quadrature) {
    const QuadratureRule& g_rule = f.has_jump() ? detail::split_rule() : detail::hermite200();
    const QuadratureRule nu_rule = detail::nuisance_rule(f);
    auto E = [&](auto&& h) { return detail::expect_pair(f, g_rule, nu_rule, h); };
    ModelParams mp;
    mp.method = method;
    if (loss.kind() == LossFunction::Kind::Square) {
      mp.mu = E([](double g, double y) { return y * g; });
    } else {
      mp.mu = detail::bisect_root(
          [&](double mu) { return E([&](double g, double y) { return loss.d1(mu * g, y) * g; }); },
          -10.0, 10.0, "model_params(" + loss.name() + ", " + f.name() + ")");
    }
    const double mu = mp.mu;
    mp.rho = std::sqrt(std::max(0.0, E([&](double g, double y) {
                                   const double l = loss.d1(mu * g, y);
                                   return l * l;
                                 })));
    mp.eta = std::sqrt(std::max(0.0, E([&](double g, double y) {
                                   const double l = loss.d1(mu * g, y);
                                   return l * l * g * g;
                                 })));
    return mp;
  }

  // Monte Carlo
  if (rng == nullptr) throw PreconditionError("model_params: Monte Carlo needs an RngStream");
  if (n_draws < 2) throw InsufficientSamplesError("model_params: need at least 2 draws");
  const std::size_t n = n_draws;
  const double nd = static_cast<double>(n);
  RealVector g(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = rng->normal();
    y[i] = f.apply(g[i], f.draw_nuisance(*rng));
  }
  auto mean_of = [&](auto&& h) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += h(i);
    return s / nd;
  };

  ModelParams mp;
  mp.method = method;
  // u_i = L'(mu g_i, y_i) g_i; the estimating equation is mean(u) = 0.
  if (loss.kind() == LossFunction::Kind::Square) {
    mp.mu = mean_of([&](std::size_t i) { return y[i] * g[i]; });
  } else {
    mp.mu = detail::bisect_root(
        [&](double mu) { return mean_of([&](std::size_t i) { return loss.d1(mu * g[i], y[i]) * g[i]; }); },
        -10.0, 10.0, "model_params(" + loss.name() + ", " + f.name() + ")");
  }
  const double mu = mp.mu;

  // Influence functions (M-estimator sandwich):
  //   mu:     psi_i = -u_i / J,        J = mean(d2 g^2)
  //   theta:  a_i - theta + c * psi_i, c = d theta / d mu = mean(2 L' d2 g^{1 or 3})
  const double jac = mean_of([&](std::size_t i) { return loss.d2(mu * g[i], y[i]) * g[i] * g[i]; });
  RealVector psi(n), a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double l = loss.d1(mu * g[i], y[i]);
    // The square-loss mu is mean(y g) rather than the root, so its influence is y g - mu.
    psi[i] = loss.kind() == LossFunction::Kind::Square ? y[i] * g[i] - mu : -l * g[i] / jac;
    a[i] = l * l;
    b[i] = l * l * g[i] * g[i];
  }
  const double rho_sq = mean_of([&](std::size_t i) { return a[i]; });
  const double eta_sq = mean_of([&](std::size_t i) { return b[i]; });
  const double c_rho = mean_of([&](std::size_t i) {
    return 2.0 * loss.d1(mu * g[i], y[i]) * loss.d2(mu * g[i], y[i]) * g[i];
  });
  const double c_eta = mean_of([&](std::size_t i) {
    return 2.0 * loss.d1(mu * g[i], y[i]) * loss.d2(mu * g[i], y[i]) * g[i] * g[i] * g[i];
  });
  auto se_of = [&](auto&& infl) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = infl(i);
      s += v * v;
    }
    return std::sqrt(s / (nd - 1.0) / nd);
  };
  mp.rho = std::sqrt(std::max(0.0, rho_sq));
  mp.eta = std::sqrt(std::max(0.0, eta_sq));
  mp.stderr_mu = se_of([&](std::size_t i) { return psi[i]; });
  mp.stderr_rho_sq = se_of([&](std::size_t i) { return a[i] - rho_sq + c_rho * psi[i]; });
  mp.stderr_eta_sq = se_of([&](std::size_t i) { return b[i] - eta_sq + c_eta * psi[i]; });
  return mp;
}

}  // namespace fsel
