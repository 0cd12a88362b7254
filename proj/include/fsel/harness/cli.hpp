#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fsel/error.hpp"
#include "fsel/estimator.hpp"
#include "fsel/harness/config.hpp"
#include "fsel/harness/experiments.hpp"
#include "fsel/model.hpp"

namespace fsel::harness {

enum ExitCode : int { kOk = 0, kConfigError = 1, kNumericalError = 2 };

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open output file '" + path + "'");
  out << content;
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
  }
}

// Data CSV: '#' comment lines, a header x1..xd,y, then numeric rows.
struct DataSet {
  DenseMatrix x;
  RealVector y;
};

inline std::string data_to_csv(const SampleSet& ss, std::uint64_t seed) {
  std::string out = "# fsel-data schema=" + std::to_string(kCsvSchemaVersion) + " m=" + std::to_string(ss.m()) +
                    " d=" + std::to_string(ss.x.cols()) + " seed=" + std::to_string(seed) + "\n";
  for (std::size_t j = 0; j < ss.x.cols(); ++j) out += "x" + std::to_string(j + 1) + ",";
  out += "y\n";
  for (std::size_t i = 0; i < ss.m(); ++i) {
    for (double v : ss.x.row(i)) out += format_real(v) + ",";
    out += format_real(ss.y[i]) + "\n";
  }
  return out;
}

inline DataSet read_data_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("data: cannot open '" + path + "'");
  std::string line;
  bool header = false;
  std::size_t cols = 0, lineno = 0;
  std::vector<double> xs;
  RealVector y;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
      if (cols < 2) throw ConfigError("data: header needs at least one feature column and y");
      continue;
    }
    std::stringstream ss(line);
    std::string cell;
    std::size_t c = 0;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw ConfigError("data: line " + std::to_string(lineno) + " has a non-numeric cell");
      if (c + 1 < cols) xs.push_back(v); else y.push_back(v);
      ++c;
    }
    if (c != cols) throw ConfigError("data: line " + std::to_string(lineno) + " has " + std::to_string(c) + " cells, expected " + std::to_string(cols));
  }
  if (y.empty()) throw ConfigError("data: '" + path + "' has no rows");
  return DataSet{DenseMatrix(y.size(), cols - 1, std::move(xs)), std::move(y)};
}

inline int run_guarded(const std::function<void()>& body) {
  try {
    body();
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const IncompatibleModelError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  }
}

inline int cli_main(int argc, char** argv) {
  CLI::App app{"Feature selection from factor-model data: experiments, sampling and fitting"};
  app.require_subcommand(1);

  // experiment
  auto* exp = app.add_subcommand("experiment", "Run a configured experiment and write CSV results");
  std::string exp_name, exp_config, exp_out, exp_summary;
  std::optional<std::uint64_t> exp_seed;
  std::size_t exp_threads = 0;
  std::optional<std::size_t> exp_trials;
  bool exp_timing = false;
  exp->add_option("name", exp_name, "rate | noise_bounds | ms_recovery | meanwidth_report | model_params_report")->required();
  exp->add_option("--config", exp_config, "JSON experiment config")->required();
  exp->add_option("--seed", exp_seed, "Master seed (overrides the config)");
  exp->add_option("--out", exp_out, "Output CSV path")->required();
  exp->add_option("--threads", exp_threads, "Worker threads, 0 = all cores");
  exp->add_option("--trials", exp_trials, "Override the trial count");
  exp->add_option("--summary", exp_summary, "Also write a JSON summary here");
  exp->add_flag("--timing", exp_timing, "Add a runtime_ms column (breaks byte-reproducibility)");

  // gen
  auto* gen = app.add_subcommand("gen", "Sample a model to a data CSV");
  std::string gen_config, gen_out;
  std::size_t gen_m = 0;
  std::uint64_t gen_seed = 0;
  gen->add_option("--config", gen_config, "JSON with model, nonlinearity, corruption")->required();
  gen->add_option("--m", gen_m, "Number of samples")->required();
  gen->add_option("--seed", gen_seed, "Master seed");
  gen->add_option("--out", gen_out, "Output CSV path")->required();

  // fit
  auto* fitc = app.add_subcommand("fit", "Fit the constrained estimator to a data CSV");
  std::string fit_data, fit_out, fit_loss = "square", fit_constraint = "l1_ball";
  double fit_radius = 1.0;
  fitc->add_option("--data", fit_data, "Data CSV (x1..xd,y)")->required();
  fitc->add_option("--loss", fit_loss, "square | logistic");
  fitc->add_option("--constraint", fit_constraint, "l1_ball | l2_ball");
  fitc->add_option("--radius", fit_radius, "Ball radius R");
  fitc->add_option("--out", fit_out, "Output CSV for beta (stdout summary only when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (*exp) {
    return run_guarded([&] {
      json j = read_json_file(exp_config);
      if (!j.is_object()) throw ConfigError("config: top level must be an object");
      if (!j.contains("experiment")) j["experiment"] = exp_name;
      if (j.at("experiment") != exp_name) {
        throw ConfigError("config: field 'experiment' is '" + j.at("experiment").dump() + "' but the command asks for '" + exp_name + "'");
      }
      ExperimentConfig cfg = parse_config(j);
      if (exp_seed) cfg.master_seed = *exp_seed;
      if (exp_trials) {
        if (*exp_trials == 0) throw ConfigError("--trials must be >= 1");
        cfg.trials = *exp_trials;
      }
      RunOptions opt{exp_threads, exp_timing};
      const ExperimentResult r = run_experiment(cfg, opt);
      write_file(exp_out, to_csv(r, opt));
      if (!exp_summary.empty()) {
        json s = r.summary;
        s["experiment"] = r.experiment;
        s["seed"] = r.seed;
        s["schema"] = kCsvSchemaVersion;
        write_file(exp_summary, s.dump(2) + "\n");
      }
    });
  }
  if (*gen) {
    return run_guarded([&] {
      const json j = read_json_file(gen_config);
      const ModelConfig mc = parse_model(detail::require(j, "", "model"), "model");
      const Nonlinearity f = j.contains("nonlinearity") ? parse_nonlinearity(j.at("nonlinearity"), "nonlinearity")
                                                        : Nonlinearity::sign();
      const double corruption = j.contains("corruption") ? detail::as_number(j.at("corruption"), "corruption") : 0.0;
      if (gen_m == 0) throw ConfigError("--m must be >= 1");
      const PreparedModel pm = prepare_model(mc, f, corruption, std::nullopt);
      RngStream rng(gen_seed, 0);
      write_file(gen_out, data_to_csv(sample(pm.model, gen_m, rng), gen_seed));
    });
  }
  return run_guarded([&] {
    if (fit_loss != "square" && fit_loss != "logistic") throw ConfigError("--loss must be square or logistic");
    if (fit_constraint != "l1_ball" && fit_constraint != "l2_ball") throw ConfigError("--constraint must be l1_ball or l2_ball");
    if (!(fit_radius > 0.0)) throw ConfigError("--radius must be > 0");
    const DataSet ds = read_data_csv(fit_data);
    const FitResult fr = fit(ds.x, ds.y, make_loss(fit_loss), make_constraint(fit_constraint, fit_radius, ds.x.cols()));
    std::cout << "objective=" << format_real(fr.objective) << " iterations=" << fr.iterations
              << " converged=" << (fr.converged ? 1 : 0) << " stop=" << to_string(fr.stop) << "\n";
    if (!fit_out.empty()) {
      std::string out = "# fsel-fit schema=" + std::to_string(kCsvSchemaVersion) + " loss=" + fit_loss + " constraint=" +
                        fit_constraint + " radius=" + format_real(fit_radius) + "\nindex,beta\n";
      for (std::size_t j = 0; j < fr.beta_hat.size(); ++j) out += std::to_string(j) + "," + format_real(fr.beta_hat[j]) + "\n";
      write_file(fit_out, out);
    }
  });
}

}  // namespace fsel::harness
