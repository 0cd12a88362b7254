#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fsel/error.hpp"
#include "fsel/estimator.hpp"
#include "fsel/geometry.hpp"
#include "fsel/loss.hpp"
#include "fsel/model.hpp"
#include "fsel/msdata.hpp"

namespace fsel::harness {

using json = nlohmann::json;

// Model section: either a synthetic MS spec or explicit dense matrices.
struct ModelConfig {
  enum class Type { Ms, Dense };
  Type type = Type::Ms;
  MsModelSpec ms;
  DenseMatrix a, b, sigma;
  RealVector z_star;
};

struct ParamCase {
  std::string loss;
  Nonlinearity f = Nonlinearity::sign();
  ParamMethod method = ParamMethod::Quadrature;
};

struct ExperimentConfig {
  std::string experiment;
  std::optional<ModelConfig> model;
  std::vector<std::size_t> m_grid;
  std::size_t trials = 1;
  std::string loss = "square";
  std::string constraint = "l1_ball";
  std::optional<double> radius;
  Nonlinearity f = Nonlinearity::sign();
  double corruption = 0.0;
  std::optional<Nonlinearity> control;  // ms_recovery: second arm, e.g. bitflip(0.5)
  SolverConfig solver;
  RealVector sigma_star_grid;           // noise_bounds
  std::size_t draws = 100000;           // meanwidth_report, model_params_report
  json sets = json::array();            // meanwidth_report
  std::vector<ParamCase> param_cases;   // model_params_report
  std::uint64_t master_seed = 0;
};

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"rate", "noise_bounds", "ms_recovery", "meanwidth_report",
                                              "model_params_report"};
  return names;
}

namespace detail {

inline std::string join_path(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline const json& require(const json& j, const std::string& path, const std::string& key) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError("config: missing field '" + join_path(path, key) + "'");
  return j.at(key);
}

inline double as_number(const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError("config: field '" + where + "' must be a number");
  return v.get<double>();
}

inline std::size_t as_count(const json& v, const std::string& where, std::size_t min = 0) {
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    throw ConfigError("config: field '" + where + "' must be a non-negative integer");
  }
  const auto x = v.get<std::int64_t>();
  if (x < static_cast<std::int64_t>(min)) {
    throw ConfigError("config: field '" + where + "' must be >= " + std::to_string(min));
  }
  return static_cast<std::size_t>(x);
}

inline std::string as_string(const json& v, const std::string& where) {
  if (!v.is_string()) throw ConfigError("config: field '" + where + "' must be a string");
  return v.get<std::string>();
}

inline RealVector as_vector(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError("config: field '" + where + "' must be an array of numbers");
  RealVector out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

inline DenseMatrix as_matrix(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError("config: field '" + where + "' must be an array of rows");
  if (v.empty()) return DenseMatrix();
  std::vector<double> entries;
  std::size_t cols = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const RealVector r = as_vector(v[i], where + "[" + std::to_string(i) + "]");
    if (i == 0) cols = r.size();
    if (r.size() != cols) throw ConfigError("config: field '" + where + "' has rows of different length");
    entries.insert(entries.end(), r.begin(), r.end());
  }
  return DenseMatrix(v.size(), cols, std::move(entries));
}

}  // namespace detail

inline Nonlinearity parse_nonlinearity(const json& j, const std::string& path) {
  const std::string kind = detail::as_string(detail::require(j, path, "kind"), path + ".kind");
  try {
    if (kind == "sign") return Nonlinearity::sign();
    if (kind == "identity") return Nonlinearity::identity();
    if (kind == "bitflip") {
      return Nonlinearity::bit_flip(detail::as_number(detail::require(j, path, "keep_prob"), path + ".keep_prob"));
    }
    if (kind == "linear_noise") {
      const double scale = j.contains("scale") ? detail::as_number(j.at("scale"), path + ".scale") : 1.0;
      return Nonlinearity::linear_noise(scale, detail::as_number(detail::require(j, path, "noise_std"), path + ".noise_std"));
    }
  } catch (const PreconditionError& e) {
    throw ConfigError("config: field '" + path + "': " + e.what());
  }
  throw ConfigError("config: field '" + path + ".kind' must be one of sign, identity, bitflip, linear_noise (got '" +
                    kind + "')");
}

inline ParamMethod parse_method(const json& v, const std::string& where) {
  const std::string s = detail::as_string(v, where);
  if (s == "closed_form") return ParamMethod::ClosedForm;
  if (s == "quadrature") return ParamMethod::Quadrature;
  if (s == "monte_carlo") return ParamMethod::MonteCarlo;
  throw ConfigError("config: field '" + where + "' must be closed_form, quadrature or monte_carlo");
}

inline ModelConfig parse_model(const json& j, const std::string& path) {
  ModelConfig mc;
  const std::string type = j.contains("type") ? detail::as_string(j.at("type"), path + ".type") : "ms";
  if (type == "dense") {
    mc.type = ModelConfig::Type::Dense;
    mc.a = detail::as_matrix(detail::require(j, path, "A"), path + ".A");
    mc.b = j.contains("B") ? detail::as_matrix(j.at("B"), path + ".B") : DenseMatrix(mc.a.rows(), 0);
    if (mc.b.rows() == 0) mc.b = DenseMatrix(mc.a.rows(), 0);
    mc.sigma = j.contains("sigma") ? detail::as_matrix(j.at("sigma"), path + ".sigma")
                                   : DenseMatrix::identity(mc.a.cols());
    mc.z_star = detail::as_vector(detail::require(j, path, "z_star"), path + ".z_star");
    return mc;
  }
  if (type != "ms") throw ConfigError("config: field '" + path + ".type' must be 'ms' or 'dense'");

  MsModelSpec& s = mc.ms;
  s.d = detail::as_count(detail::require(j, path, "d"), path + ".d", 1);
  const json& peaks = detail::require(j, path, "peaks");
  const std::string pp = path + ".peaks";
  if (peaks.is_array()) {
    for (std::size_t k = 0; k < peaks.size(); ++k) {
      const std::string pk = pp + "[" + std::to_string(k) + "]";
      PeakSpec spec;
      spec.intensity = detail::as_number(detail::require(peaks[k], pk, "intensity"), pk + ".intensity");
      spec.center = detail::as_number(detail::require(peaks[k], pk, "center"), pk + ".center");
      spec.width = detail::as_number(detail::require(peaks[k], pk, "width"), pk + ".width");
      s.peaks.push_back(spec);
    }
  } else if (peaks.is_object()) {
    const std::size_t count = detail::as_count(detail::require(peaks, pp, "count"), pp + ".count", 1);
    const double intensity = detail::as_number(detail::require(peaks, pp, "intensity"), pp + ".intensity");
    const double width = detail::as_number(detail::require(peaks, pp, "width"), pp + ".width");
    s.peaks = evenly_spaced_peaks(s.d, count, intensity, width);
  } else {
    throw ConfigError("config: field '" + pp + "' must be a list of peaks or {count, intensity, width}");
  }
  const json& base = detail::require(j, path, "baseline");
  if (base.is_array()) {
    s.baseline = detail::as_vector(base, path + ".baseline");
  } else {
    s.baseline.assign(s.d, detail::as_number(base, path + ".baseline"));
  }
  if (j.contains("sigma")) s.sigma = detail::as_matrix(j.at("sigma"), path + ".sigma");
  const json& sup = detail::require(j, path, "support");
  if (!sup.is_array()) throw ConfigError("config: field '" + path + ".support' must be an array of peak indices");
  for (std::size_t t = 0; t < sup.size(); ++t) s.support.push_back(detail::as_count(sup[t], path + ".support[" + std::to_string(t) + "]"));
  s.support_values = j.contains("support_values") ? detail::as_vector(j.at("support_values"), path + ".support_values")
                                                  : RealVector(s.support.size(), 1.0);
  if (j.contains("floor")) s.floor = detail::as_number(j.at("floor"), path + ".floor");
  try {
    validate(s);
  } catch (const Error& e) {
    throw ConfigError("config: field '" + path + "': " + e.what());
  }
  return mc;
}

inline SolverConfig parse_solver(const json& j, const std::string& path) {
  SolverConfig c;
  if (j.contains("max_iters")) c.max_iters = detail::as_count(j.at("max_iters"), path + ".max_iters", 1);
  if (j.contains("grad_tol")) c.grad_tol = detail::as_number(j.at("grad_tol"), path + ".grad_tol");
  if (j.contains("init_step")) c.init_step = detail::as_number(j.at("init_step"), path + ".init_step");
  if (j.contains("shrink")) c.shrink = detail::as_number(j.at("shrink"), path + ".shrink");
  if (j.contains("sufficient_decrease")) c.sufficient_decrease = detail::as_number(j.at("sufficient_decrease"), path + ".sufficient_decrease");
  if (j.contains("objective_tol")) c.objective_tol = detail::as_number(j.at("objective_tol"), path + ".objective_tol");
  if (j.contains("accelerate")) {
    if (!j.at("accelerate").is_boolean()) throw ConfigError("config: field '" + path + ".accelerate' must be true or false");
    c.accelerate = j.at("accelerate").get<bool>();
  }
  if (!(c.grad_tol > 0.0 && c.init_step > 0.0 && c.shrink > 0.0 && c.shrink < 1.0 && c.sufficient_decrease > 0.0)) {
    throw ConfigError("config: field '" + path + "' has a non-positive value (shrink must lie in (0,1))");
  }
  return c;
}

inline ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  ExperimentConfig c;
  c.experiment = detail::as_string(detail::require(j, "", "experiment"), "experiment");
  bool known = false;
  for (const auto& n : experiment_names()) known = known || n == c.experiment;
  if (!known) throw ConfigError("config: field 'experiment' names unknown experiment '" + c.experiment + "'");

  if (j.contains("model")) c.model = parse_model(j.at("model"), "model");
  if (j.contains("m_grid")) {
    const json& g = j.at("m_grid");
    if (!g.is_array() || g.empty()) throw ConfigError("config: field 'm_grid' must be a non-empty array");
    for (std::size_t i = 0; i < g.size(); ++i) {
      c.m_grid.push_back(detail::as_count(g[i], "m_grid[" + std::to_string(i) + "]", 1));
      if (i > 0 && c.m_grid[i] <= c.m_grid[i - 1]) throw ConfigError("config: field 'm_grid' must be strictly increasing");
    }
  }
  if (j.contains("trials")) c.trials = detail::as_count(j.at("trials"), "trials", 1);
  if (j.contains("loss")) {
    c.loss = detail::as_string(j.at("loss"), "loss");
    if (c.loss != "square" && c.loss != "logistic") throw ConfigError("config: field 'loss' must be square or logistic");
  }
  if (j.contains("constraint")) {
    const json& k = j.at("constraint");
    c.constraint = detail::as_string(detail::require(k, "constraint", "kind"), "constraint.kind");
    if (c.constraint != "l1_ball" && c.constraint != "l2_ball") {
      throw ConfigError("config: field 'constraint.kind' must be l1_ball or l2_ball");
    }
    if (k.contains("radius")) {
      c.radius = detail::as_number(k.at("radius"), "constraint.radius");
      if (!(*c.radius > 0.0)) throw ConfigError("config: field 'constraint.radius' must be > 0");
    }
  }
  if (j.contains("nonlinearity")) c.f = parse_nonlinearity(j.at("nonlinearity"), "nonlinearity");
  if (j.contains("corruption")) {
    c.corruption = detail::as_number(j.at("corruption"), "corruption");
    if (!(c.corruption >= 0.0 && c.corruption <= 1.0)) throw ConfigError("config: field 'corruption' must lie in [0, 1]");
  }
  if (j.contains("control")) c.control = parse_nonlinearity(j.at("control"), "control");
  if (j.contains("solver")) c.solver = parse_solver(j.at("solver"), "solver");
  if (j.contains("sigma_star_grid")) {
    c.sigma_star_grid = detail::as_vector(j.at("sigma_star_grid"), "sigma_star_grid");
    for (double s : c.sigma_star_grid)
      if (!(s >= 0.0)) throw ConfigError("config: field 'sigma_star_grid' entries must be >= 0");
  }
  if (j.contains("draws")) c.draws = detail::as_count(j.at("draws"), "draws", 2);
  if (j.contains("sets")) {
    c.sets = j.at("sets");
    if (!c.sets.is_array()) throw ConfigError("config: field 'sets' must be an array");
  }
  if (j.contains("cases")) {
    const json& cs = j.at("cases");
    if (!cs.is_array()) throw ConfigError("config: field 'cases' must be an array");
    for (std::size_t i = 0; i < cs.size(); ++i) {
      const std::string p = "cases[" + std::to_string(i) + "]";
      ParamCase pc;
      pc.loss = detail::as_string(detail::require(cs[i], p, "loss"), p + ".loss");
      if (pc.loss != "square" && pc.loss != "logistic") throw ConfigError("config: field '" + p + ".loss' must be square or logistic");
      pc.f = parse_nonlinearity(detail::require(cs[i], p, "nonlinearity"), p + ".nonlinearity");
      pc.method = parse_method(detail::require(cs[i], p, "method"), p + ".method");
      c.param_cases.push_back(pc);
    }
  }
  if (j.contains("seed")) {
    const json& s = j.at("seed");
    if (!s.is_number_unsigned() && !s.is_number_integer()) throw ConfigError("config: field 'seed' must be an unsigned integer");
    c.master_seed = s.get<std::uint64_t>();
  }

  // Per-experiment requirements.
  const bool needs_trials = c.experiment == "rate" || c.experiment == "ms_recovery" || c.experiment == "noise_bounds";
  if (needs_trials && c.m_grid.empty()) throw ConfigError("config: missing field 'm_grid'");
  if ((c.experiment == "rate" || c.experiment == "ms_recovery") && !c.model) throw ConfigError("config: missing field 'model'");
  if (c.experiment == "ms_recovery" && c.model->type != ModelConfig::Type::Ms) {
    throw ConfigError("config: field 'model.type' must be 'ms' for ms_recovery");
  }
  if (c.experiment == "noise_bounds") {
    if (c.sigma_star_grid.empty()) throw ConfigError("config: missing field 'sigma_star_grid'");
    const auto k = c.f.kind();
    if (k != Nonlinearity::Kind::Sign && k != Nonlinearity::Kind::LinearNoise) {
      throw ConfigError("config: field 'nonlinearity.kind' must be sign or linear_noise for noise_bounds");
    }
  }
  if (c.experiment == "meanwidth_report" && c.sets.empty()) throw ConfigError("config: missing field 'sets'");
  if (c.experiment == "model_params_report" && c.param_cases.empty()) throw ConfigError("config: missing field 'cases'");
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

inline LossFunction make_loss(const std::string& name) {
  return name == "logistic" ? LossFunction::logistic() : LossFunction::square();
}

}  // namespace fsel::harness
