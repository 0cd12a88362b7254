#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fsel/core/matrix.hpp"
#include "fsel/core/rng.hpp"
#include "fsel/error.hpp"

namespace fsel {

struct MinNormResult {
  RealVector point;     // min-norm point of conv(points)
  RealVector weights;   // convex weights, one per input point
  bool converged = false;
  std::size_t iterations = 0;
};

namespace detail {

// Dense solve with partial pivoting; small systems only.
inline RealVector gauss_solve(std::vector<RealVector> a, RealVector b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    const double d = a[c][c];
    if (d == 0.0) continue;
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / d;
      if (f == 0.0) continue;
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  RealVector x(n, 0.0);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= a[ii][k] * x[k];
    x[ii] = a[ii][ii] == 0.0 ? 0.0 : s / a[ii][ii];
  }
  return x;
}

}  // namespace detail

// Wolfe's minimum-norm-point algorithm over conv(points). Stops when the
// Frank-Wolfe gap |x|^2 - min_j <x, p_j> falls below tolerance; the gap bounds
// the squared distance to the true minimizer.
inline MinNormResult wolfe_min_norm_point(const std::vector<RealVector>& points,
                                          std::size_t max_iters, double gap_tol = -1.0) {
  const std::size_t k = points.size();
  if (k == 0) throw EmptyDimensionError("wolfe_min_norm_point: no points");
  const std::size_t n = points[0].size();
  double scale = 0.0;
  for (const auto& p : points) scale = std::max(scale, dot(p, p));
  if (gap_tol < 0.0) gap_tol = 1e-18 + 1e-15 * scale;

  std::size_t first = 0;
  for (std::size_t j = 1; j < k; ++j)
    if (dot(points[j], points[j]) < dot(points[first], points[first])) first = j;
  std::vector<std::size_t> active{first};
  RealVector lam{1.0};
  RealVector x = points[first];

  auto combine = [&] {
    RealVector out(n, 0.0);
    for (std::size_t a = 0; a < active.size(); ++a)
      for (std::size_t i = 0; i < n; ++i) out[i] += lam[a] * points[active[a]][i];
    return out;
  };

  MinNormResult res;
  for (std::size_t it = 0; it < max_iters; ++it) {
    res.iterations = it + 1;
    std::size_t j = 0;
    double best = dot(x, points[0]);
    for (std::size_t t = 1; t < k; ++t) {
      const double v = dot(x, points[t]);
      if (v < best) { best = v; j = t; }
    }
    if (dot(x, x) - best <= gap_tol ||
        std::find(active.begin(), active.end(), j) != active.end()) {
      res.converged = dot(x, x) - best <= std::max(gap_tol, 1e-12 * scale);
      break;
    }
    active.push_back(j);
    lam.push_back(0.0);

    for (std::size_t minor = 0; minor <= k + 1; ++minor) {
      // Affine min-norm point on the active set: [G 1; 1^T 0][a; nu] = [0; 1].
      const std::size_t s = active.size();
      std::vector<RealVector> sys(s + 1, RealVector(s + 1, 0.0));
      RealVector rhs(s + 1, 0.0);
      for (std::size_t a = 0; a < s; ++a) {
        for (std::size_t b = 0; b < s; ++b) sys[a][b] = dot(points[active[a]], points[active[b]]);
        sys[a][a] += 1e-14 * std::max(scale, 1e-300);
        sys[a][s] = 1.0;
        sys[s][a] = 1.0;
      }
      rhs[s] = 1.0;
      RealVector alpha = detail::gauss_solve(sys, rhs);
      alpha.resize(s);
      bool interior = true;
      for (double v : alpha) interior = interior && v > 1e-14;
      if (interior) {
        lam = alpha;
        break;
      }
      double theta = 1.0;
      for (std::size_t a = 0; a < s; ++a)
        if (alpha[a] <= 1e-14 && lam[a] - alpha[a] > 0.0) theta = std::min(theta, lam[a] / (lam[a] - alpha[a]));
      for (std::size_t a = 0; a < s; ++a) lam[a] = (1.0 - theta) * lam[a] + theta * alpha[a];
      std::vector<std::size_t> keep_idx;
      RealVector keep_lam;
      for (std::size_t a = 0; a < s; ++a)
        if (lam[a] > 1e-14) { keep_idx.push_back(active[a]); keep_lam.push_back(lam[a]); }
      double tot = 0.0;
      for (double v : keep_lam) tot += v;
      for (auto& v : keep_lam) v /= tot;
      active = std::move(keep_idx);
      lam = std::move(keep_lam);
    }
    x = combine();
  }
  res.point = x;
  res.weights.assign(k, 0.0);
  for (std::size_t a = 0; a < active.size(); ++a) res.weights[active[a]] = lam[a];
  return res;
}

// Convex coefficient set K.
class ConstraintSet {
 public:
  enum class Kind { L1Ball, L2Ball, Polytope };

  static ConstraintSet l1_ball(double radius, std::size_t dim) {
    check_ball(radius, dim, "L1Ball");
    return ConstraintSet(Kind::L1Ball, radius, dim, {});
  }
  static ConstraintSet l2_ball(double radius, std::size_t dim) {
    check_ball(radius, dim, "L2Ball");
    return ConstraintSet(Kind::L2Ball, radius, dim, {});
  }
  // The origin must lie in the hull; checked with a min-norm-point solve.
  static ConstraintSet polytope(std::vector<RealVector> vertices) {
    if (vertices.empty()) throw PreconditionError("Polytope: need at least one vertex");
    const std::size_t dim = vertices[0].size();
    if (dim == 0) throw EmptyDimensionError("Polytope: vertices must have dimension >= 1");
    for (const auto& v : vertices) {
      if (v.size() != dim) throw ShapeError("Polytope: vertices differ in dimension");
    }
    const MinNormResult mn = wolfe_min_norm_point(vertices, std::max<std::size_t>(10 * vertices.size(), 50));
    if (norm2(mn.point) > 1e-9) {
      throw PreconditionError("Polytope: origin is not in the convex hull (distance " +
                              std::to_string(norm2(mn.point)) + ")");
    }
    return ConstraintSet(Kind::Polytope, 0.0, dim, std::move(vertices));
  }

  Kind kind() const noexcept { return kind_; }
  double radius() const noexcept { return radius_; }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<RealVector>& vertices() const noexcept { return vertices_; }

  // Same shape, radius multiplied by c > 0 (vertices scaled for polytopes).
  ConstraintSet scaled_by(double c) const {
    if (!(c > 0.0)) throw PreconditionError("ConstraintSet::scaled_by: factor must be positive");
    ConstraintSet out = *this;
    out.radius_ *= c;
    for (auto& v : out.vertices_)
      for (auto& e : v) e *= c;
    return out;
  }

  std::string describe() const {
    switch (kind_) {
      case Kind::L1Ball: return "l1_ball(R=" + std::to_string(radius_) + ")";
      case Kind::L2Ball: return "l2_ball(R=" + std::to_string(radius_) + ")";
      case Kind::Polytope: return "polytope(k=" + std::to_string(vertices_.size()) + ")";
    }
    return "?";
  }

 private:
  ConstraintSet(Kind k, double r, std::size_t dim, std::vector<RealVector> verts)
      : kind_(k), radius_(r), dim_(dim), vertices_(std::move(verts)) {}

  static void check_ball(double radius, std::size_t dim, const char* what) {
    if (dim == 0) throw EmptyDimensionError(std::string(what) + ": dimension must be >= 1");
    if (!(radius > 0.0) || !std::isfinite(radius)) {
      throw PreconditionError(std::string(what) + ": radius must be positive, got " + std::to_string(radius));
    }
  }

  Kind kind_;
  double radius_;
  std::size_t dim_;
  std::vector<RealVector> vertices_;
};

namespace detail {
inline void check_dim(const ConstraintSet& k, std::size_t n, const char* what) {
  if (k.dim() != n) {
    throw ShapeError(std::string(what) + ": set has dimension " + std::to_string(k.dim()) +
                     ", vector has " + std::to_string(n));
  }
}
}  // namespace detail

// Euclidean projection onto the l1 ball of radius r (sort and threshold).
inline RealVector project_l1(std::span<const double> v, double r) {
  if (norm1(v) <= r) return RealVector(v.begin(), v.end());
  RealVector a(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) a[i] = std::abs(v[i]);
  std::sort(a.begin(), a.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    cum += a[j];
    const double t = (cum - r) / static_cast<double>(j + 1);
    if (j + 1 == a.size() || a[j + 1] <= t) {
      theta = t;
      break;
    }
  }
  RealVector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double m = std::max(std::abs(v[i]) - theta, 0.0);
    out[i] = v[i] < 0.0 ? -m : m;
  }
  return out;
}

inline RealVector project(const ConstraintSet& k, std::span<const double> v) {
  detail::check_dim(k, v.size(), "project");
  switch (k.kind()) {
    case ConstraintSet::Kind::L1Ball: return project_l1(v, k.radius());
    case ConstraintSet::Kind::L2Ball: {
      const double n = norm2(v);
      if (n <= k.radius()) return RealVector(v.begin(), v.end());
      return scaled(v, k.radius() / n);
    }
    case ConstraintSet::Kind::Polytope: {
      std::vector<RealVector> shifted;
      shifted.reserve(k.vertices().size());
      for (const auto& vert : k.vertices()) shifted.push_back(subtract(vert, v));
      const MinNormResult mn = wolfe_min_norm_point(shifted, std::max<std::size_t>(10 * shifted.size(), 10));
      if (!mn.converged) {
        throw NumericalError("project: min-norm-point iteration cap (" +
                             std::to_string(10 * shifted.size()) + ") reached for " + k.describe());
      }
      // Rebuild from the vertices so the result is an exact convex combination.
      RealVector out(v.size(), 0.0);
      for (std::size_t j = 0; j < k.vertices().size(); ++j) {
        if (mn.weights[j] == 0.0) continue;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += mn.weights[j] * k.vertices()[j][i];
      }
      return out;
    }
  }
  return {};
}

inline double distance_to(const ConstraintSet& k, std::span<const double> v) {
  return norm2(subtract(v, project(k, v)));
}

// sup_{x in K} <g, x>
inline double support_function(const ConstraintSet& k, std::span<const double> g) {
  detail::check_dim(k, g.size(), "support_function");
  switch (k.kind()) {
    case ConstraintSet::Kind::L1Ball: return k.radius() * norm_inf(g);
    case ConstraintSet::Kind::L2Ball: return k.radius() * norm2(g);
    case ConstraintSet::Kind::Polytope: {
      double best = dot(g, k.vertices()[0]);
      for (std::size_t j = 1; j < k.vertices().size(); ++j) best = std::max(best, dot(g, k.vertices()[j]));
      return best;
    }
  }
  return 0.0;
}

// Index of the maximizing vertex; lowest index wins ties.
inline std::size_t support_vertex(const ConstraintSet& k, std::span<const double> g) {
  if (k.kind() != ConstraintSet::Kind::Polytope) throw PreconditionError("support_vertex: polytopes only");
  std::size_t arg = 0;
  double best = dot(g, k.vertices()[0]);
  for (std::size_t j = 1; j < k.vertices().size(); ++j) {
    const double v = dot(g, k.vertices()[j]);
    if (v > best) { best = v; arg = j; }
  }
  return arg;
}

// Linear image M K; without a map it is K itself.
struct SetImage {
  ConstraintSet base;
  std::optional<DenseMatrix> map;

  std::size_t image_dim() const { return map ? map->rows() : base.dim(); }
};

inline SetImage make_image(ConstraintSet base, std::optional<DenseMatrix> map = std::nullopt) {
  if (map && map->cols() != base.dim()) {
    throw ShapeError("SetImage: map has " + std::to_string(map->cols()) + " columns, set dimension " +
                     std::to_string(base.dim()));
  }
  return SetImage{std::move(base), std::move(map)};
}

struct McEstimate {
  double estimate = 0.0;
  double se = 0.0;
};

// w(MK) = E sup_{x in MK} <g, x> = E h_K(M^T g).
inline McEstimate mean_width_mc(const SetImage& img, std::size_t n_draws, RngStream& rng) {
  if (n_draws < 2) throw InsufficientSamplesError("mean_width_mc: need at least 2 draws");
  const std::size_t n = img.image_dim();
  RealVector g(n);
  double sum = 0.0, sumsq = 0.0;
  for (std::size_t t = 0; t < n_draws; ++t) {
    for (auto& v : g) v = rng.normal();
    const double h = img.map ? support_function(img.base, tmatvec(*img.map, g)) : support_function(img.base, g);
    sum += h;
    sumsq += h * h;
  }
  const double nd = static_cast<double>(n_draws);
  const double mean = sum / nd;
  const double var = std::max(0.0, (sumsq - nd * mean * mean) / (nd - 1.0));
  return {mean, std::sqrt(var / nd)};
}

// w^2 with delta-method standard error 2 w se(w).
inline McEstimate effdim_mc(const SetImage& img, std::size_t n_draws, RngStream& rng) {
  const McEstimate w = mean_width_mc(img, n_draws, rng);
  return {w.estimate * w.estimate, 2.0 * std::abs(w.estimate) * w.se};
}

// Order-of-magnitude bounds with unit constants.

// s log(2n/s)
inline double bound_sparse(double s, double n) {
  if (!(s > 0.0) || !(n >= s)) throw PreconditionError("bound_sparse: need 0 < s <= n");
  return s * std::log(2.0 * n / s);
}

// (max_j |z_j|)^2 log(max(k, 2))
inline double bound_polytope(const std::vector<RealVector>& vertices) {
  if (vertices.empty()) throw PreconditionError("bound_polytope: no vertices");
  double mx = 0.0;
  for (const auto& v : vertices) mx = std::max(mx, norm2(v));
  return mx * mx * std::log(static_cast<double>(std::max<std::size_t>(vertices.size(), 2)));
}

// |M|_op^2 effdim(K)
inline double bound_slepian(const DenseMatrix& map, double effdim_k) {
  const double op = operator_norm(map);
  return op * op * effdim_k;
}

// R^2 dmax^2 log(2d)
inline double bound_l1_image(double radius, double dmax, std::size_t d) {
  if (d == 0) throw EmptyDimensionError("bound_l1_image: d must be >= 1");
  return radius * radius * dmax * dmax * std::log(2.0 * static_cast<double>(d));
}

}  // namespace fsel
