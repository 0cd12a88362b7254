#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "fsel/estimator.hpp"
#include "fsel/geometry.hpp"
#include "fsel/harness/config.hpp"
#include "fsel/loss.hpp"
#include "fsel/model.hpp"
#include "fsel/msdata.hpp"
#include "fsel/representation.hpp"

namespace fsel::harness {

inline constexpr int kCsvSchemaVersion = 1;

struct TrialRow {
  std::string experiment;
  std::string label;
  std::size_t m = 0;
  std::size_t trial = 0;
  double error = NAN;
  double epsilon = NAN;
  double epsilon_star = NAN;
  double sigma_star_sq = NAN;
  double lambda_star = NAN;
  double bound_value = NAN;
  double localization = NAN;
  bool converged = true;
  std::size_t iterations = 0;
  double runtime_ms = 0.0;
};

struct ExperimentResult {
  std::string experiment;
  std::uint64_t seed = 0;
  std::vector<TrialRow> rows;                    // trial experiments
  std::vector<std::string> report_columns;       // report experiments
  std::vector<std::vector<std::string>> report_rows;
  json summary;
};

struct RunOptions {
  std::size_t threads = 1;  // 0 = hardware concurrency
  bool timing = false;      // adds runtime_ms (not reproducible) to the CSV
};

// %.17g; NaN always prints as "nan".
inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Runs fn(0..n-1) on a pool; results must be written by index. The first
// exception in index order is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(n, 1));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::uint64_t trial_stream(std::uint64_t arm, std::size_t m_index, std::size_t trial) {
  return (arm << 48) | (static_cast<std::uint64_t>(m_index) << 32) | static_cast<std::uint64_t>(trial);
}

// ---------------------------------------------------------------------------
// Summaries

inline double trimmed_mean(RealVector v, double frac = 0.05) {
  if (v.empty()) return NAN;
  std::sort(v.begin(), v.end());
  const std::size_t cut = static_cast<std::size_t>(std::floor(frac * static_cast<double>(v.size())));
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = cut; i + cut < v.size(); ++i, ++n) s += v[i];
  return n ? s / static_cast<double>(n) : NAN;
}

// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const RealVector& x, const RealVector& y) {
  if (x.size() != y.size() || x.size() < 2) return NAN;
  double mx = 0.0, my = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = std::log(x[i]) - mx;
    sxy += a * (std::log(y[i]) - my);
    sxx += a * a;
  }
  return sxx > 0.0 ? sxy / sxx : NAN;
}

// Groups rows by (label, m) in first-appearance order; error statistics use
// converged rows only. The slope per label is fitted to the trimmed means.
inline json summarize(const std::vector<TrialRow>& rows) {
  std::vector<std::pair<std::string, std::size_t>> keys;
  std::map<std::pair<std::string, std::size_t>, std::vector<const TrialRow*>> groups;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.label, r.m);
    if (!groups.count(key)) keys.push_back(key);
    groups[key].push_back(&r);
  }
  auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  json out = json::object();
  out["groups"] = json::array();
  std::map<std::string, std::pair<RealVector, RealVector>> curves;
  std::vector<std::string> label_order;
  for (const auto& key : keys) {
    const auto& g = groups[key];
    RealVector err, eps, loc;
    std::size_t conv = 0, within = 0, bounded = 0;
    for (const TrialRow* r : g) {
      if (r->converged) {
        ++conv;
        if (!std::isnan(r->error)) err.push_back(r->error);
      }
      if (!std::isnan(r->epsilon)) eps.push_back(r->epsilon);
      if (!std::isnan(r->localization)) loc.push_back(r->localization);
      if (!std::isnan(r->bound_value) && !std::isnan(r->epsilon) && r->experiment == "noise_bounds") {
        ++bounded;
        if (r->epsilon <= r->bound_value) ++within;
      }
    }
    auto mean = [](const RealVector& v) -> double {
      if (v.empty()) return NAN;
      double s = 0.0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    auto sd = [&](const RealVector& v) -> double {
      if (v.size() < 2) return NAN;
      const double mu = mean(v);
      double s = 0.0;
      for (double x : v) s += (x - mu) * (x - mu);
      return std::sqrt(s / static_cast<double>(v.size() - 1));
    };
    json grp = {{"label", key.first},
                {"m", key.second},
                {"trials", g.size()},
                {"converged", conv},
                {"excluded_nonconverged", g.size() - conv},
                {"mean_error", num(mean(err))},
                {"sd_error", num(sd(err))},
                {"trimmed_mean_error", num(trimmed_mean(err))},
                {"mean_epsilon", num(mean(eps))},
                {"mean_localization", num(mean(loc))}};
    if (bounded) grp["fraction_within_bound"] = static_cast<double>(within) / static_cast<double>(bounded);
    out["groups"].push_back(grp);
    const double tm = trimmed_mean(err);
    if (!std::isnan(tm) && tm > 0.0) {
      if (!curves.count(key.first)) label_order.push_back(key.first);
      curves[key.first].first.push_back(static_cast<double>(key.second));
      curves[key.first].second.push_back(tm);
    }
  }
  out["slopes"] = json::object();
  for (const auto& l : label_order) {
    const double s = loglog_slope(curves[l].first, curves[l].second);
    if (!std::isnan(s)) out["slopes"][l.empty() ? "all" : l] = s;
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string to_csv(const ExperimentResult& r, const RunOptions& opt = {}) {
  std::string out = "# fsel-results schema=" + std::to_string(kCsvSchemaVersion) + " experiment=" + r.experiment +
                    " seed=" + std::to_string(r.seed) + "\n";
  if (!r.report_columns.empty()) {
    for (std::size_t c = 0; c < r.report_columns.size(); ++c) out += (c ? "," : "") + r.report_columns[c];
    out += "\n";
    for (const auto& row : r.report_rows) {
      for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + row[c];
      out += "\n";
    }
    return out;
  }
  out += "experiment,label,m,trial,error,epsilon,epsilon_star,sigma_star_sq,lambda_star,bound_value,localization,converged,iterations";
  out += opt.timing ? ",runtime_ms\n" : "\n";
  for (const auto& t : r.rows) {
    out += t.experiment + "," + t.label + "," + std::to_string(t.m) + "," + std::to_string(t.trial) + "," +
           format_real(t.error) + "," + format_real(t.epsilon) + "," + format_real(t.epsilon_star) + "," +
           format_real(t.sigma_star_sq) + "," + format_real(t.lambda_star) + "," + format_real(t.bound_value) + "," +
           format_real(t.localization) + "," + (t.converged ? "1" : "0") + "," + std::to_string(t.iterations);
    out += opt.timing ? "," + format_real(t.runtime_ms) + "\n" : "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model preparation

struct PreparedModel {
  FactorModel model;
  DenseMatrix d;       // feature dictionary, p x d
  DenseMatrix n;       // noise dictionary, q x d
  double radius = 0.0;
  double dmax = 0.0;   // max column norm of [sqrt(Sigma) D; N]
};

inline PreparedModel prepare_model(const ModelConfig& mc, const Nonlinearity& f, double corruption,
                                   std::optional<double> radius) {
  if (mc.type == ModelConfig::Type::Ms) {
    MsModelSpec spec = mc.ms;
    if (radius) spec.radius = radius;
    MsModel ms = build_ms_model(spec, f, corruption);
    PreparedModel pm{ms.model, ms.model.feature_dictionary(), ms.model.noise_dictionary(), ms.radius, 0.0};
    const DenseMatrix ext = sigma_weighted_extended_dictionary(pm.model);
    for (std::size_t j = 0; j < ext.cols(); ++j) pm.dmax = std::max(pm.dmax, norm2(ext.column(j)));
    return pm;
  }
  try {
    RealVector z = FactorModel::normalize_signal(mc.sigma, mc.z_star);
    std::size_t s = 0;
    for (double v : z) s += v != 0.0;
    FactorModel model(mc.a, mc.b, mc.sigma, std::move(z), f, corruption);
    const double r = radius ? *radius : suggested_radius(std::max<std::size_t>(s, 1), inverse_sqrt_norm(mc.sigma));
    PreparedModel pm{model, model.feature_dictionary(), model.noise_dictionary(), r, 0.0};
    const DenseMatrix ext = sigma_weighted_extended_dictionary(pm.model);
    for (std::size_t j = 0; j < ext.cols(); ++j) pm.dmax = std::max(pm.dmax, norm2(ext.column(j)));
    return pm;
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("config: field 'model': ") + e.what());
  }
}

inline ConstraintSet make_constraint(const std::string& kind, double radius, std::size_t d) {
  return kind == "l2_ball" ? ConstraintSet::l2_ball(radius, d) : ConstraintSet::l1_ball(radius, d);
}

// Fraction of the s largest |z_hat| entries (ties: lowest index) inside supp(z*).
inline double localization_score(std::span<const double> z_hat, std::span<const double> z_star) {
  std::vector<std::size_t> support;
  for (std::size_t k = 0; k < z_star.size(); ++k)
    if (z_star[k] != 0.0) support.push_back(k);
  if (support.empty()) return NAN;
  std::vector<std::size_t> order(z_hat.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(z_hat[a]) > std::abs(z_hat[b]); });
  std::size_t hits = 0;
  for (std::size_t t = 0; t < support.size() && t < order.size(); ++t)
    if (z_star[order[t]] != 0.0) ++hits;
  return static_cast<double>(hits) / static_cast<double>(support.size());
}

// One arm of a recovery experiment: fixed model, loss, K and representation.
struct RecoveryArm {
  std::string label;
  PreparedModel pm;
  ConstraintSet k;
  Representation rep;
  double bound_effdim = 0.0;  // complexity term; bound_value = (bound_effdim / m)^{1/4}
};

inline RecoveryArm make_arm(const std::string& label, const ExperimentConfig& cfg, const Nonlinearity& f) {
  PreparedModel pm = prepare_model(*cfg.model, f, cfg.corruption, cfg.radius);
  const LossFunction loss = make_loss(cfg.loss);
  const ModelParams mp = model_params(loss, f, ParamMethod::Quadrature);
  ConstraintSet k = make_constraint(cfg.constraint, pm.radius, pm.model.d());
  Representation rep = optimal_representation(pm.d, pm.n, pm.model.z_star(), k, mp.mu, {}, &pm.model.sqrt_sigma());
  const double effdim = cfg.constraint == "l2_ball"
                            ? bound_slepian(sigma_weighted_extended_dictionary(pm.model),
                                            pm.radius * pm.radius * static_cast<double>(pm.model.d()))
                            : bound_l1_image(pm.radius, pm.dmax, pm.model.d());
  return RecoveryArm{label, std::move(pm), std::move(k), std::move(rep), effdim};
}

inline TrialRow run_recovery_trial(const std::string& experiment, const RecoveryArm& arm, const ExperimentConfig& cfg,
                                   std::uint64_t arm_index, std::size_t m_index, std::size_t trial) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t m = cfg.m_grid[m_index];
  RngStream rng(cfg.master_seed, trial_stream(arm_index, m_index, trial));
  const SampleSet ss = sample(arm.pm.model, m, rng);
  const LossFunction loss = make_loss(cfg.loss);
  const FitResult fr = fit(ss.x, ss.y, loss, arm.k, cfg.solver);
  const RealVector z_hat = to_signal_domain(fr.beta_hat, arm.pm.d);
  const Nonlinearity& f = arm.pm.model.nonlinearity();

  TrialRow row;
  row.experiment = experiment;
  row.label = arm.label;
  row.m = m;
  row.trial = trial;
  row.error = selection_error(z_hat, arm.pm.model.z_star(), arm.rep.lambda_star, &arm.pm.model.sqrt_sigma());
  row.epsilon = noise_parameter(ss.y0, rescaled_outputs(ss, arm.rep.beta_star, f, arm.rep.tau_star));
  row.epsilon_star = adversarial_epsilon(ss);
  row.sigma_star_sq = arm.rep.sigma_star_sq;
  row.lambda_star = arm.rep.lambda_star;
  row.bound_value = std::pow(arm.bound_effdim / static_cast<double>(m), 0.25);
  row.localization = localization_score(z_hat, arm.pm.model.z_star());
  row.converged = fr.converged;
  row.iterations = fr.iterations;
  row.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

inline std::vector<TrialRow> run_arms(const std::string& experiment, const std::vector<RecoveryArm>& arms,
                                      const ExperimentConfig& cfg, const RunOptions& opt) {
  const std::size_t per_arm = cfg.m_grid.size() * cfg.trials;
  std::vector<TrialRow> rows(arms.size() * per_arm);
  parallel_for(rows.size(), opt.threads, [&](std::size_t idx) {
    const std::size_t a = idx / per_arm, rest = idx % per_arm;
    const std::size_t mi = rest / cfg.trials, t = rest % cfg.trials;
    rows[idx] = run_recovery_trial(experiment, arms[a], cfg, a, mi, t);
  });
  return rows;
}

// ---------------------------------------------------------------------------
// Experiments

inline ExperimentResult run_rate(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  ExperimentResult r{"rate", cfg.master_seed, {}, {}, {}, {}};
  const std::vector<RecoveryArm> arms{make_arm("", cfg, cfg.f)};
  r.rows = run_arms("rate", arms, cfg, opt);
  r.summary = summarize(r.rows);
  r.summary["lambda_star"] = arms[0].rep.lambda_star;
  r.summary["sigma_star_sq"] = arms[0].rep.sigma_star_sq;
  r.summary["radius"] = arms[0].pm.radius;
  return r;
}

inline ExperimentResult run_ms_recovery(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  ExperimentResult r{"ms_recovery", cfg.master_seed, {}, {}, {}, {}};
  std::vector<RecoveryArm> arms{make_arm("signal", cfg, cfg.f)};
  if (cfg.control) arms.push_back(make_arm("control", cfg, *cfg.control));
  r.rows = run_arms("ms_recovery", arms, cfg, opt);
  r.summary = summarize(r.rows);
  r.summary["lambda_star"] = arms[0].rep.lambda_star;
  r.summary["sigma_star_sq"] = arms[0].rep.sigma_star_sq;
  r.summary["radius"] = arms[0].pm.radius;
  std::size_t s = 0;
  for (double v : arms[0].pm.model.z_star()) s += v != 0.0;
  r.summary["chance_localization"] = static_cast<double>(s) / static_cast<double>(arms[0].pm.model.p());
  return r;
}

// Two-channel model with D = [1 1] and N = sqrt(2) sigma* I, whose optimal
// representation is (1/2, 1/2) with noise variance exactly sigma*^2.
inline FactorModel two_channel_model(double sigma_star, const Nonlinearity& f) {
  const double c = std::sqrt(2.0) * sigma_star;
  DenseMatrix b = sigma_star > 0.0 ? DenseMatrix{{c, 0.0}, {0.0, c}} : DenseMatrix(2, 0);
  return FactorModel(DenseMatrix{{1.0}, {1.0}}, std::move(b), DenseMatrix::identity(1), RealVector{1.0}, f);
}

inline ExperimentResult run_noise_bounds(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  ExperimentResult r{"noise_bounds", cfg.master_seed, {}, {}, {}, {}};
  const bool binary = cfg.f.kind() == Nonlinearity::Kind::Sign;
  struct Arm {
    std::string label;
    FactorModel model;
    Representation rep;
    double threshold;
  };
  std::vector<Arm> arms;
  for (double s : cfg.sigma_star_grid) {
    FactorModel model = two_channel_model(s, cfg.f);
    const double mu = model_params(LossFunction::square(), cfg.f, ParamMethod::Quadrature).mu;
    Representation rep = optimal_representation(model.feature_dictionary(), model.noise_dictionary(), model.z_star(),
                                                ConstraintSet::l1_ball(10.0, 2), mu);
    const double sig = rep.sigma_star();
    const double threshold = binary ? 3.0 * std::sqrt(bitflip_probability(sig))
                                    : 2.0 * std::abs(cfg.f.scale()) * linear_mismatch_std(sig);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s:sigma_star=%g", binary ? "binary" : "linear", s);
    arms.push_back(Arm{buf, std::move(model), std::move(rep), threshold});
  }
  const std::size_t per_arm = cfg.m_grid.size() * cfg.trials;
  r.rows.resize(arms.size() * per_arm);
  parallel_for(r.rows.size(), opt.threads, [&](std::size_t idx) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t a = idx / per_arm, rest = idx % per_arm;
    const std::size_t mi = rest / cfg.trials, t = rest % cfg.trials;
    const Arm& arm = arms[a];
    RngStream rng(cfg.master_seed, trial_stream(a, mi, t));
    const SampleSet ss = sample(arm.model, cfg.m_grid[mi], rng);
    TrialRow row;
    row.experiment = "noise_bounds";
    row.label = arm.label;
    row.m = cfg.m_grid[mi];
    row.trial = t;
    row.epsilon = noise_parameter(ss.y0, rescaled_outputs(ss, arm.rep.beta_star, arm.model.nonlinearity(), arm.rep.tau_star));
    row.epsilon_star = adversarial_epsilon(ss);
    row.sigma_star_sq = arm.rep.sigma_star_sq;
    row.lambda_star = arm.rep.lambda_star;
    row.bound_value = arm.threshold;
    row.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    r.rows[idx] = row;
  });
  r.summary = summarize(r.rows);
  return r;
}

namespace detail {

struct WidthCase {
  std::string name;
  SetImage img;
  std::vector<std::pair<std::string, double>> bounds;
};

inline WidthCase parse_width_case(const json& j, std::size_t index, std::uint64_t seed) {
  const std::string path = "sets[" + std::to_string(index) + "]";
  const std::string kind = fsel::harness::detail::as_string(fsel::harness::detail::require(j, path, "kind"), path + ".kind");
  namespace hd = fsel::harness::detail;
  auto count = [&](const char* key, std::size_t min) { return hd::as_count(hd::require(j, path, key), path + "." + key, min); };
  auto number = [&](const char* key) { return hd::as_number(hd::require(j, path, key), path + "." + key); };
  try {
    if (kind == "l1_ball") {
      const double r = number("radius");
      const std::size_t n = count("dim", 1);
      WidthCase c{"l1_ball", make_image(ConstraintSet::l1_ball(r, n)), {}};
      if (r * r <= static_cast<double>(n) && r * r >= 1.0) c.bounds.emplace_back("sparse", bound_sparse(r * r, static_cast<double>(n)));
      c.bounds.emplace_back("polytope", r * r * std::log(2.0 * static_cast<double>(n)));
      return c;
    }
    if (kind == "l2_ball") {
      const double r = number("radius");
      const std::size_t n = count("dim", 1);
      const std::size_t ambient = j.contains("ambient") ? hd::as_count(j.at("ambient"), path + ".ambient", n) : n;
      DenseMatrix map(ambient, n);
      for (std::size_t i = 0; i < n; ++i) map(i, i) = 1.0;
      WidthCase c{"l2_ball_subspace", make_image(ConstraintSet::l2_ball(r, n), map), {}};
      c.bounds.emplace_back("subspace", r * r * static_cast<double>(n));
      return c;
    }
    if (kind == "polytope" || kind == "random_polytope") {
      std::vector<RealVector> verts;
      if (kind == "polytope") {
        const json& vs = hd::require(j, path, "vertices");
        if (!vs.is_array()) throw ConfigError("config: field '" + path + ".vertices' must be an array");
        for (std::size_t v = 0; v < vs.size(); ++v) verts.push_back(hd::as_vector(vs[v], path + ".vertices[" + std::to_string(v) + "]"));
      } else {
        const std::size_t k = count("count", 1), n = count("dim", 1);
        RngStream rng(seed, splitmix64(0xB0F + index));
        for (std::size_t v = 0; v < k; ++v) verts.push_back(sample_std_gaussian_vector(rng, n));
        verts.push_back(RealVector(n, 0.0));
      }
      WidthCase c{kind, make_image(ConstraintSet::polytope(verts)), {}};
      c.bounds.emplace_back("polytope", bound_polytope(verts));
      return c;
    }
    if (kind == "ms_l1_image") {
      ModelConfig mc = parse_model(hd::require(j, path, "model"), path + ".model");
      MsModel ms = build_ms_model(mc.ms, Nonlinearity::sign());
      const double r = j.contains("radius") ? hd::as_number(j.at("radius"), path + ".radius") : ms.radius;
      DenseMatrix ext = sigma_weighted_extended_dictionary(ms.model);
      double dmax = 0.0;
      for (std::size_t c = 0; c < ext.cols(); ++c) dmax = std::max(dmax, norm2(ext.column(c)));
      const std::size_t d = ms.model.d();
      WidthCase c{"ms_l1_image", make_image(ConstraintSet::l1_ball(r, d), ext), {}};
      c.bounds.emplace_back("l1_image", bound_l1_image(r, dmax, d));
      c.bounds.emplace_back("slepian", bound_slepian(*c.img.map, r * r * std::log(2.0 * static_cast<double>(d))));
      return c;
    }
  } catch (const PreconditionError& e) {
    throw ConfigError("config: field '" + path + "': " + e.what());
  }
  throw ConfigError("config: field '" + path + ".kind' must be l1_ball, l2_ball, polytope, random_polytope or ms_l1_image");
}

}  // namespace detail

inline ExperimentResult run_meanwidth_report(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  ExperimentResult r{"meanwidth_report", cfg.master_seed, {}, {}, {}, {}};
  r.report_columns = {"set", "index", "dim", "image_dim", "draws", "effdim_mc", "effdim_se", "bound", "bound_value", "ratio", "within_4x"};
  std::vector<detail::WidthCase> cases;
  for (std::size_t i = 0; i < cfg.sets.size(); ++i) cases.push_back(detail::parse_width_case(cfg.sets[i], i, cfg.master_seed));
  std::vector<McEstimate> est(cases.size());
  parallel_for(cases.size(), opt.threads, [&](std::size_t i) {
    RngStream rng(cfg.master_seed, trial_stream(0, 0, i));
    est[i] = effdim_mc(cases[i].img, cfg.draws, rng);
  });
  bool all_ok = true;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    for (const auto& [name, value] : cases[i].bounds) {
      const bool ok = est[i].estimate <= 4.0 * value;
      all_ok = all_ok && ok;
      r.report_rows.push_back({cases[i].name, std::to_string(i), std::to_string(cases[i].img.base.dim()),
                               std::to_string(cases[i].img.image_dim()), std::to_string(cfg.draws),
                               format_real(est[i].estimate), format_real(est[i].se), name, format_real(value),
                               format_real(value > 0.0 ? est[i].estimate / value : NAN), ok ? "1" : "0"});
    }
  }
  r.summary = {{"all_within_4x", all_ok}, {"sets", cases.size()}};
  return r;
}

inline ExperimentResult run_model_params_report(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  ExperimentResult r{"model_params_report", cfg.master_seed, {}, {}, {}, {}};
  r.report_columns = {"loss", "nonlinearity", "param", "method", "mu", "rho_sq", "eta_sq", "se_mu", "se_rho_sq", "se_eta_sq",
                      "closed_mu", "closed_rho_sq", "closed_eta_sq", "status"};
  std::vector<std::vector<std::string>> rows(cfg.param_cases.size());
  parallel_for(cfg.param_cases.size(), opt.threads, [&](std::size_t i) {
    const ParamCase& pc = cfg.param_cases[i];
    const LossFunction loss = make_loss(pc.loss);
    const Nonlinearity& f = pc.f;
    double param = NAN;
    if (f.kind() == Nonlinearity::Kind::BitFlip) param = f.keep_prob();
    if (f.kind() == Nonlinearity::Kind::LinearNoise) param = f.noise_std();
    std::vector<std::string> row{pc.loss, f.name(), format_real(param), to_string(pc.method)};
    ModelParams closed;
    const bool has_closed = loss.kind() == LossFunction::Kind::Square;
    if (has_closed) closed = model_params(loss, f, ParamMethod::ClosedForm);
    try {
      RngStream rng(cfg.master_seed, trial_stream(0, 0, i));
      const ModelParams mp = model_params(loss, f, pc.method, cfg.draws, &rng);
      auto opt_num = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string("nan"); };
      row.insert(row.end(), {format_real(mp.mu), format_real(mp.rho_sq()), format_real(mp.eta_sq()),
                             opt_num(mp.stderr_mu), opt_num(mp.stderr_rho_sq), opt_num(mp.stderr_eta_sq)});
      row.push_back("");
    } catch (const IncompatibleModelError&) {
      row.insert(row.end(), {"nan", "nan", "nan", "nan", "nan", "nan"});
      row.push_back("incompatible");
    } catch (const PreconditionError&) {
      row.insert(row.end(), {"nan", "nan", "nan", "nan", "nan", "nan"});
      row.push_back("unavailable");
    }
    const std::string status = row.back();
    row.pop_back();
    row.insert(row.end(), {has_closed ? format_real(closed.mu) : "nan", has_closed ? format_real(closed.rho_sq()) : "nan",
                           has_closed ? format_real(closed.eta_sq()) : "nan", status.empty() ? "ok" : status});
    rows[i] = std::move(row);
  });
  r.report_rows = std::move(rows);
  r.summary = {{"cases", cfg.param_cases.size()}};
  return r;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  if (cfg.experiment == "rate") return run_rate(cfg, opt);
  if (cfg.experiment == "ms_recovery") return run_ms_recovery(cfg, opt);
  if (cfg.experiment == "noise_bounds") return run_noise_bounds(cfg, opt);
  if (cfg.experiment == "meanwidth_report") return run_meanwidth_report(cfg, opt);
  if (cfg.experiment == "model_params_report") return run_model_params_report(cfg, opt);
  throw ConfigError("config: field 'experiment' names unknown experiment '" + cfg.experiment + "'");
}

}  // namespace fsel::harness
