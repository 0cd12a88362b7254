#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "fsel/core/linalg.hpp"
#include "fsel/core/matrix.hpp"
#include "fsel/error.hpp"
#include "fsel/model.hpp"

namespace fsel {

struct PeakSpec {
  double intensity = 1.0;
  double center = 0.0;  // channel units, channels are 1..d
  double width = 1.0;
};

struct MsModelSpec {
  std::size_t d = 0;
  std::vector<PeakSpec> peaks;
  RealVector baseline;                 // per-channel noise std, length d (all zero: no noise atoms)
  std::optional<DenseMatrix> sigma;    // covariance of s; identity when absent
  std::vector<std::size_t> support;    // indices into peaks
  RealVector support_values;           // z* on the support before normalization
  std::optional<double> radius;        // explicit R; otherwise suggested_radius
  double floor = 1e-12;

  std::size_t p() const { return peaks.size(); }
};

// p peaks of equal intensity and width, centered at (k + 1/2) d / p.
inline std::vector<PeakSpec> evenly_spaced_peaks(std::size_t d, std::size_t p, double intensity, double width) {
  if (d == 0 || p == 0) throw EmptyDimensionError("evenly_spaced_peaks: d and p must be >= 1");
  std::vector<PeakSpec> out(p);
  const double spacing = static_cast<double>(d) / static_cast<double>(p);
  for (std::size_t k = 0; k < p; ++k) out[k] = {intensity, (static_cast<double>(k) + 0.5) * spacing + 0.5, width};
  return out;
}

inline void validate(const MsModelSpec& spec) {
  if (spec.d == 0) throw EmptyDimensionError("MsModelSpec: d must be >= 1");
  if (spec.peaks.empty()) throw EmptyDimensionError("MsModelSpec: need at least one peak");
  for (std::size_t k = 0; k < spec.peaks.size(); ++k) {
    const PeakSpec& pk = spec.peaks[k];
    if (!(pk.width > 0.0)) throw PreconditionError("MsModelSpec: peak " + std::to_string(k) + " width must be > 0");
    if (!(pk.intensity >= 0.0)) throw PreconditionError("MsModelSpec: peak " + std::to_string(k) + " intensity must be >= 0");
  }
  if (spec.baseline.size() != spec.d) throw ShapeError("MsModelSpec: baseline must have d entries");
  for (double b : spec.baseline)
    if (!(b >= 0.0)) throw PreconditionError("MsModelSpec: baseline entries must be >= 0");
  if (spec.support.size() != spec.support_values.size()) {
    throw ShapeError("MsModelSpec: support and support_values differ in length");
  }
  for (std::size_t k : spec.support)
    if (k >= spec.p()) throw PreconditionError("MsModelSpec: support index " + std::to_string(k) + " >= p");
  if (spec.sigma && (spec.sigma->rows() != spec.p() || spec.sigma->cols() != spec.p())) {
    throw ShapeError("MsModelSpec: sigma must be p x p");
  }
  if (!(spec.floor > 0.0)) throw PreconditionError("MsModelSpec: floor must be > 0");
}

struct RawDictionaries {
  DenseMatrix d_raw;  // p x d, row k samples peak k at t = 1..d
  DenseMatrix n_raw;  // d x d diagonal baseline
};

inline RawDictionaries build_raw_dictionaries(const MsModelSpec& spec) {
  validate(spec);
  const std::size_t p = spec.p(), d = spec.d;
  RawDictionaries out{DenseMatrix(p, d), DenseMatrix::diagonal(spec.baseline)};
  for (std::size_t k = 0; k < p; ++k) {
    const PeakSpec& pk = spec.peaks[k];
    for (std::size_t j = 0; j < d; ++j) {
      const double u = (static_cast<double>(j + 1) - pk.center) / pk.width;
      out.d_raw(k, j) = pk.intensity * std::exp(-u * u);
    }
  }
  return out;
}

struct StandardizationReport {
  RealVector raw_stds;            // sigma'_j
  std::vector<bool> floor_flags;  // sigma'_j was below the floor
};

struct StandardizedDictionaries {
  DenseMatrix d;
  DenseMatrix n;
  StandardizationReport report;
};

// Column j of [D'; N'] is divided by sigma'_j = sqrt(|sqrt(Sigma) D'_j|^2 + |N'_j|^2),
// the standard deviation of feature variable j. Columns below the floor are
// divided by the floor instead and flagged.
inline StandardizedDictionaries standardize_dictionaries(const DenseMatrix& d_raw, const DenseMatrix& n_raw,
                                                         double floor, const DenseMatrix* sqrt_sigma = nullptr) {
  if (!(floor > 0.0)) throw PreconditionError("standardize_dictionaries: floor must be > 0");
  const std::size_t dim = d_raw.cols();
  if (n_raw.rows() > 0 && n_raw.cols() != dim) throw ShapeError("standardize_dictionaries: N' must have d columns");
  const DenseMatrix dw = sqrt_sigma ? matmul(*sqrt_sigma, d_raw) : d_raw;
  StandardizedDictionaries out{d_raw, n_raw, {RealVector(dim), std::vector<bool>(dim, false)}};
  for (std::size_t j = 0; j < dim; ++j) {
    double v = 0.0;
    for (std::size_t k = 0; k < dw.rows(); ++k) v += dw(k, j) * dw(k, j);
    for (std::size_t l = 0; l < n_raw.rows(); ++l) v += n_raw(l, j) * n_raw(l, j);
    const double sd = std::sqrt(v);
    out.report.raw_stds[j] = sd;
    double div = sd;
    if (sd < floor) {
      div = floor;
      out.report.floor_flags[j] = true;
    }
    for (std::size_t k = 0; k < out.d.rows(); ++k) out.d(k, j) /= div;
    for (std::size_t l = 0; l < out.n.rows(); ++l) out.n(l, j) /= div;
  }
  return out;
}

struct EmpiricalStandardization {
  DenseMatrix x_std;
  RealVector means;
  RealVector stds;                // population (1/m) convention
  std::vector<bool> floor_flags;  // std below 1e-12; column output is zero
};

inline EmpiricalStandardization empirical_standardize(const DenseMatrix& x) {
  const std::size_t m = x.rows(), d = x.cols();
  if (m < 2) throw InsufficientSamplesError("empirical_standardize: need m >= 2 samples");
  constexpr double floor = 1e-12;
  EmpiricalStandardization out{x, RealVector(d, 0.0), RealVector(d, 0.0), std::vector<bool>(d, false)};
  const double md = static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) out.means[j] += x(i, j);
  for (auto& v : out.means) v /= md;
  // Two-pass variance for accuracy.
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x(i, j) - out.means[j];
      out.stds[j] += c * c;
    }
  for (std::size_t j = 0; j < d; ++j) {
    out.stds[j] = std::sqrt(out.stds[j] / md);
    if (out.stds[j] < floor) out.floor_flags[j] = true;
  }
  for (std::size_t i = 0; i < m; ++i) {
    auto r = out.x_std.row(i);
    for (std::size_t j = 0; j < d; ++j)
      r[j] = out.floor_flags[j] ? 0.0 : (r[j] - out.means[j]) / out.stds[j];
  }
  return out;
}

// R ~ sqrt(s) |sqrt(Sigma)^{-1}|
inline double suggested_radius(std::size_t s, double sqrt_sigma_inv_norm) {
  if (s == 0) throw PreconditionError("suggested_radius: s must be >= 1");
  return std::sqrt(static_cast<double>(s)) * sqrt_sigma_inv_norm;
}

struct MsModel {
  FactorModel model;
  StandardizedDictionaries dicts;
  double radius = 0.0;
};

// Standardized factor model of an MsModelSpec. With an all-zero baseline there are
// no noise atoms (q = 0); otherwise q = d, one atom per channel.
inline MsModel build_ms_model(const MsModelSpec& spec, const Nonlinearity& f, double corruption = 0.0) {
  const RawDictionaries raw = build_raw_dictionaries(spec);
  const std::size_t p = spec.p();
  const DenseMatrix sigma = spec.sigma ? *spec.sigma : DenseMatrix::identity(p);
  const DenseMatrix root = sym_sqrt(sigma);
  bool any_noise = false;
  for (double b : spec.baseline) any_noise = any_noise || b > 0.0;
  const DenseMatrix n_raw = any_noise ? raw.n_raw : DenseMatrix(0, spec.d);
  StandardizedDictionaries dicts = standardize_dictionaries(raw.d_raw, n_raw, spec.floor, &root);

  RealVector z(p, 0.0);
  for (std::size_t t = 0; t < spec.support.size(); ++t) z[spec.support[t]] = spec.support_values[t];
  z = FactorModel::normalize_signal(sigma, std::move(z));
  const double r = spec.radius ? *spec.radius
                               : suggested_radius(std::max<std::size_t>(spec.support.size(), 1), inverse_sqrt_norm(sigma));
  DenseMatrix noise_atoms = any_noise ? transpose(dicts.n) : DenseMatrix(spec.d, 0);
  FactorModel model(transpose(dicts.d), std::move(noise_atoms), sigma, std::move(z), f, corruption);
  return MsModel{std::move(model), std::move(dicts), r};
}

}  // namespace fsel
