#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fsel/core/linalg.hpp"
#include "fsel/core/matrix.hpp"
#include "fsel/core/rng.hpp"
#include "fsel/error.hpp"

namespace fsel {

// sign with sign(0) := +1.
inline double sign_of(double t) noexcept { return t < 0.0 ? -1.0 : 1.0; }

// Scalar output rule y = f(t). Random rules take one nuisance draw per
// observation; the draw is returned separately so that a second evaluation
// (the rescaled outputs y'') can reuse it.
class Nonlinearity {
 public:
  enum class Kind { Sign, LinearNoise, BitFlip, Identity };

  static Nonlinearity sign() { return Nonlinearity(Kind::Sign, 1.0, 0.0, 1.0); }
  static Nonlinearity identity() { return Nonlinearity(Kind::Identity, 1.0, 0.0, 1.0); }
  static Nonlinearity linear_noise(double scale, double noise_std) {
    if (!(noise_std >= 0.0) || !std::isfinite(scale)) {
      throw PreconditionError("LinearNoise: noise_std must be >= 0 and scale finite");
    }
    return Nonlinearity(Kind::LinearNoise, scale, noise_std, 1.0);
  }
  static Nonlinearity bit_flip(double keep_prob) {
    if (!(keep_prob >= 0.0 && keep_prob <= 1.0)) {
      throw PreconditionError("BitFlip: keep probability must lie in [0, 1]");
    }
    return Nonlinearity(Kind::BitFlip, 1.0, 0.0, keep_prob);
  }

  Kind kind() const noexcept { return kind_; }
  double scale() const noexcept { return scale_; }
  double noise_std() const noexcept { return noise_std_; }
  double keep_prob() const noexcept { return keep_prob_; }

  // Observation domain is {-1, +1}.
  bool is_binary() const noexcept { return kind_ == Kind::Sign || kind_ == Kind::BitFlip; }

  bool is_random() const noexcept {
    return (kind_ == Kind::LinearNoise && noise_std_ > 0.0) ||
           (kind_ == Kind::BitFlip && keep_prob_ > 0.0 && keep_prob_ < 1.0);
  }

  // Jump discontinuity at t = 0.
  bool has_jump() const noexcept { return is_binary(); }

  // LinearNoise: standard normal xi; BitFlip: +/-1 with P(+1) = keep_prob.
  double draw_nuisance(RngStream& rng) const {
    switch (kind_) {
      case Kind::LinearNoise: return rng.normal();
      case Kind::BitFlip: return rng.bernoulli(keep_prob_) ? 1.0 : -1.0;
      default: return 0.0;
    }
  }

  double apply(double t, double nuisance) const noexcept {
    switch (kind_) {
      case Kind::Sign: return sign_of(t);
      case Kind::LinearNoise: return scale_ * t + noise_std_ * nuisance;
      case Kind::BitFlip: return nuisance * sign_of(t);
      case Kind::Identity: return t;
    }
    return t;
  }

  std::string name() const {
    switch (kind_) {
      case Kind::Sign: return "sign";
      case Kind::LinearNoise: return "linear_noise";
      case Kind::BitFlip: return "bitflip";
      case Kind::Identity: return "identity";
    }
    return "?";
  }

  friend bool operator==(const Nonlinearity&, const Nonlinearity&) = default;

 private:
  Nonlinearity(Kind k, double scale, double noise_std, double keep_prob)
      : kind_(k), scale_(scale), noise_std_(noise_std), keep_prob_(keep_prob) {}

  Kind kind_;
  double scale_;
  double noise_std_;
  double keep_prob_;
};

// Generative triple (A, B, Sigma) together with the ground-truth signal and
// the output rule. Columns of A are feature atoms, columns of B noise atoms.
// B may have zero columns (q = 0).
class FactorModel {
 public:
  FactorModel(DenseMatrix feature_atoms, DenseMatrix noise_atoms, DenseMatrix sigma,
              RealVector z_star, Nonlinearity f, double corruption_fraction = 0.0)
      : a_(std::move(feature_atoms)),
        b_(std::move(noise_atoms)),
        sigma_(std::move(sigma)),
        z_star_(std::move(z_star)),
        f_(f),
        corruption_(corruption_fraction) {
    const std::size_t d = a_.rows();
    const std::size_t p = a_.cols();
    if (d == 0 || p == 0) throw EmptyDimensionError("FactorModel: d and p must be >= 1");
    if (b_.rows() != d && !(b_.cols() == 0)) {
      throw ShapeError("FactorModel: noise atoms must have d = " + std::to_string(d) + " rows");
    }
    if (b_.cols() == 0) b_ = DenseMatrix(d, 0);
    if (sigma_.rows() != p || sigma_.cols() != p) throw ShapeError("FactorModel: sigma must be p x p");
    if (z_star_.size() != p) throw ShapeError("FactorModel: z_star must have p entries");
    if (!(corruption_ >= 0.0 && corruption_ <= 1.0)) {
      throw PreconditionError("FactorModel: corruption fraction must lie in [0, 1]");
    }
    const SymmetricEigen eig = jacobi_eigen(sigma_);
    if (max_asymmetry(sigma_) > 1e-10 * std::max(1.0, std::abs(eig.values.back())) ||
        !(eig.values.front() > 0.0)) {
      throw NotPositiveSemidefiniteError("FactorModel: sigma must be symmetric positive definite");
    }
    sqrt_sigma_ = sym_sqrt(sigma_);
    const double nz = norm2(matvec(sqrt_sigma_, z_star_));
    if (std::abs(nz - 1.0) > 1e-9) {
      throw PreconditionError("FactorModel: ||sqrt(Sigma) z_star|| = " + std::to_string(nz) +
                              ", must equal 1");
    }
  }

  // Rescales z so that ||sqrt(Sigma) z|| = 1.
  static RealVector normalize_signal(const DenseMatrix& sigma, RealVector z) {
    const double nz = norm2(matvec(sym_sqrt(sigma), z));
    if (nz == 0.0) throw PreconditionError("normalize_signal: zero signal");
    for (auto& v : z) v /= nz;
    return z;
  }

  std::size_t d() const noexcept { return a_.rows(); }
  std::size_t p() const noexcept { return a_.cols(); }
  std::size_t q() const noexcept { return b_.cols(); }

  const DenseMatrix& feature_atoms() const noexcept { return a_; }
  const DenseMatrix& noise_atoms() const noexcept { return b_; }
  const DenseMatrix& sigma() const noexcept { return sigma_; }
  const DenseMatrix& sqrt_sigma() const noexcept { return sqrt_sigma_; }
  const RealVector& z_star() const noexcept { return z_star_; }
  const Nonlinearity& nonlinearity() const noexcept { return f_; }
  double corruption_fraction() const noexcept { return corruption_; }

  // D = A^T (p x d) and N = B^T (q x d).
  DenseMatrix feature_dictionary() const { return transpose(a_); }
  DenseMatrix noise_dictionary() const { return transpose(b_); }

  bool sigma_is_identity() const {
    return max_abs_diff(sigma_, DenseMatrix::identity(p())) == 0.0;
  }

 private:
  DenseMatrix a_;
  DenseMatrix b_;
  DenseMatrix sigma_;
  DenseMatrix sqrt_sigma_;
  RealVector z_star_;
  Nonlinearity f_;
  double corruption_;
};

// Draws plus the ground truth behind them. Only X and y are estimator inputs;
// the rest is retained for diagnostics.
struct SampleSet {
  DenseMatrix x;           // m x d
  RealVector y;            // observed labels
  RealVector y0;           // f(<s_i, z_star>) before corruption
  DenseMatrix s;           // m x p signal factors
  DenseMatrix noise;       // m x q noise factors
  RealVector nuisance;     // per-observation draw of the random output rule
  std::size_t corrupted = 0;  // labels 0..corrupted-1 were corrupted

  std::size_t m() const noexcept { return y.size(); }
};

namespace detail {

struct SparseColumn {
  std::vector<std::size_t> index;
  std::vector<double> value;
};

// Nonzeros of each column of a d x k matrix.
inline std::vector<SparseColumn> sparse_columns(const DenseMatrix& atoms) {
  std::vector<SparseColumn> cols(atoms.cols());
  for (std::size_t j = 0; j < atoms.rows(); ++j)
    for (std::size_t k = 0; k < atoms.cols(); ++k)
      if (atoms(j, k) != 0.0) {
        cols[k].index.push_back(j);
        cols[k].value.push_back(atoms(j, k));
      }
  return cols;
}

}  // namespace detail

inline std::size_t corruption_count(double fraction, std::size_t m) {
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(m) - 1e-12));
}

// Draw m samples. Per sample, the stream is consumed in the order
// s_i (p normals), n_i (q normals), nuisance.
inline SampleSet sample(const FactorModel& model, std::size_t m, RngStream& rng) {
  if (m == 0) throw EmptyDimensionError("sample: m must be >= 1");
  const std::size_t d = model.d(), p = model.p(), q = model.q();
  const auto a_cols = detail::sparse_columns(model.feature_atoms());
  const auto b_cols = detail::sparse_columns(model.noise_atoms());
  const DenseMatrix& root = model.sqrt_sigma();
  const bool iso = model.sigma_is_identity();
  const Nonlinearity& f = model.nonlinearity();

  SampleSet ss{DenseMatrix(m, d), RealVector(m), RealVector(m), DenseMatrix(m, p),
               DenseMatrix(m, q), RealVector(m), 0};
  RealVector g(p);
  for (std::size_t i = 0; i < m; ++i) {
    for (auto& v : g) v = rng.normal();
    auto si = ss.s.row(i);
    if (iso) {
      std::copy(g.begin(), g.end(), si.begin());
    } else {
      const RealVector t = matvec(root, g);
      std::copy(t.begin(), t.end(), si.begin());
    }
    auto ni = ss.noise.row(i);
    for (auto& v : ni) v = rng.normal();
    ss.nuisance[i] = f.draw_nuisance(rng);

    auto xi = ss.x.row(i);
    for (std::size_t k = 0; k < p; ++k) {
      const double c = si[k];
      for (std::size_t t = 0; t < a_cols[k].index.size(); ++t) xi[a_cols[k].index[t]] += c * a_cols[k].value[t];
    }
    for (std::size_t l = 0; l < q; ++l) {
      const double c = ni[l];
      for (std::size_t t = 0; t < b_cols[l].index.size(); ++t) xi[b_cols[l].index[t]] += c * b_cols[l].value[t];
    }
    ss.y0[i] = f.apply(dot(si, model.z_star()), ss.nuisance[i]);
  }

  ss.y = ss.y0;
  ss.corrupted = std::min(m, corruption_count(model.corruption_fraction(), m));
  for (std::size_t i = 0; i < ss.corrupted; ++i) {
    ss.y[i] = f.is_binary() ? -ss.y0[i] : ss.y0[i] + 2.0;
  }
  return ss;
}

// eps_star = sqrt(mean |y0 - y|^2)
inline double adversarial_epsilon(const SampleSet& ss) {
  if (ss.y0.size() != ss.y.size()) throw ShapeError("adversarial_epsilon: y0 and y lengths differ");
  if (ss.y.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < ss.y.size(); ++i) s += (ss.y0[i] - ss.y[i]) * (ss.y0[i] - ss.y[i]);
  return std::sqrt(s / static_cast<double>(ss.y.size()));
}

namespace detail {

inline DenseMatrix stack_rows(const DenseMatrix& top, const DenseMatrix& bottom) {
  if (bottom.rows() > 0 && top.cols() != bottom.cols()) throw ShapeError("stack_rows: column mismatch");
  DenseMatrix out(top.rows() + bottom.rows(), top.cols());
  std::copy(top.entries().begin(), top.entries().end(), out.entries().begin());
  std::copy(bottom.entries().begin(), bottom.entries().end(),
            out.entries().begin() + static_cast<std::ptrdiff_t>(top.entries().size()));
  return out;
}

}  // namespace detail

// [D; N] = [A | B]^T, (p + q) x d.
inline DenseMatrix extended_dictionary(const FactorModel& model) {
  return detail::stack_rows(model.feature_dictionary(), model.noise_dictionary());
}

// [sqrt(Sigma) D; N].
inline DenseMatrix sigma_weighted_extended_dictionary(const FactorModel& model) {
  return detail::stack_rows(matmul(model.sqrt_sigma(), model.feature_dictionary()),
                            model.noise_dictionary());
}

}  // namespace fsel
