#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nolab/layers.hpp"
#include "nolab/monotone.hpp"
#include "nolab/spectral_core.hpp"

namespace nolab {

/// x -> P_V F(P_V x) on a prefix V of dimension d.
class DiscretizedMap {
 public:
  DiscretizedMap(Map F, int d) : F_(std::move(F)), d_(d) {
    if (d < 0) throw std::invalid_argument("DiscretizedMap: negative dimension");
  }

  int dim() const { return d_; }
  const Map& source() const { return F_; }

  Vec operator()(const Vec& x) const { return project(F_(project(x, d_)), d_); }

  Map as_map() const {
    auto F = F_;
    const int d = d_;
    return [F, d](const Vec& x) { return project(F(project(x, d)), d); };
  }

 private:
  Map F_;
  int d_;
};

inline DiscretizedMap linearize(const Map& F, int d) { return DiscretizedMap(F, d); }

/// Samples x_d = P_d x of one common ambient sample set, so every dimension sees the same draws.
inline std::vector<Vec> restricted_samples(const std::vector<Vec>& ambient, int d) {
  std::vector<Vec> out;
  out.reserve(ambient.size());
  for (const auto& x : ambient) out.push_back(project(x, d));
  return out;
}

/// max over samples of |F_V(x) - F(x)| = |(Id - P_V) F(x)| for x in V.
inline double functor_A_error(const Map& F, int d, const std::vector<Vec>& ambient_samples) {
  double e = 0.0;
  for (const auto& x : restricted_samples(ambient_samples, d)) {
    const Vec fx = F(x);
    e = std::max(e, (fx - project(fx, d)).norm());
  }
  return e;
}

inline double functor_A_error(const Map& F, int M, int d, double r, int n, std::uint64_t seed) {
  return functor_A_error(F, d, sample_ball(M, r, n, 1.0, seed));
}

/// max over samples of |F_V(x) - P_V F(x)|; identically zero for the linear discretization.
inline double epsilon_error(const Map& F, int d, const std::vector<Vec>& ambient_samples) {
  const DiscretizedMap FV(F, d);
  double e = 0.0;
  for (const auto& x : restricted_samples(ambient_samples, d)) e = std::max(e, (FV(x) - project(F(x), d)).norm());
  return e;
}

/// Seeded smooth unit probe vectors.
inline std::vector<Vec> default_probes(int M, int count = 4, std::uint64_t seed = 11) {
  std::vector<Vec> out = sample_ball(M, 1.0, count, 1.0, seed);
  for (auto& y : out) y.normalize();
  return out;
}

/// max over probes y and samples x of |<F_V(x) - F(x), y>|.
inline double weak_error(const Map& F, int d, const std::vector<Vec>& probes, const std::vector<Vec>& ambient_samples) {
  for (const auto& y : probes)
    if (y.norm() == 0.0) throw std::invalid_argument("weak_error: zero probe");
  double e = 0.0;
  for (const auto& x : restricted_samples(ambient_samples, d)) {
    const Vec fx = F(x);
    const Vec diff = project(fx, d) - fx;
    for (const auto& y : probes) e = std::max(e, std::abs(diff.dot(y)));
  }
  return e;
}

struct ConvergenceRow {
  int dim = 0;
  double functor_a_error = 0.0;
  double epsilon_error = 0.0;
  double weak_error = 0.0;
  double alpha_hat = 0.0;
};

struct ConvergenceReport {
  std::vector<ConvergenceRow> rows;
  std::string description;
  double radius = 0.0;
  int samples = 0;
  std::uint64_t seed = 0;

  bool functor_error_strictly_decreasing(double noise = 1e-12) const {
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (!(rows[i].functor_a_error < rows[i - 1].functor_a_error - noise)) return false;
    return true;
  }

  void write_csv(std::ostream& os) const {
    os << "dim,functor_a_error,epsilon_error,weak_error,alpha_hat\n";
    os << std::setprecision(17);
    for (const auto& r : rows)
      os << r.dim << ',' << r.functor_a_error << ',' << r.epsilon_error << ',' << r.weak_error << ','
         << r.alpha_hat << '\n';
  }
};

/// One row per prefix dimension, all rows on the same ambient sample set.
inline ConvergenceReport convergence_scan(const Map& F, int M, const std::vector<int>& dims, double r, int n,
                                          std::uint64_t seed, std::vector<Vec> probes = {}) {
  for (std::size_t i = 1; i < dims.size(); ++i)
    if (dims[i] <= dims[i - 1]) throw std::invalid_argument("convergence_scan: dims must be ascending");
  if (probes.empty()) probes = default_probes(M);
  ConvergenceReport rep;
  rep.radius = r;
  rep.samples = n;
  rep.seed = seed;
  const auto xs = sample_ball(M, r, n, 1.0, seed);
  for (int d : dims) {
    if (d < 1 || d > M) throw std::invalid_argument("convergence_scan: dimension out of range");
    ConvergenceRow row;
    row.dim = d;
    row.functor_a_error = functor_A_error(F, d, xs);
    row.epsilon_error = epsilon_error(F, d, xs);
    row.weak_error = weak_error(F, d, probes, xs);
    const auto xd = restricted_samples(xs, d);
    row.alpha_hat = pairwise_alpha_points(linearize(F, d).as_map(), xd).alpha;
    rep.rows.push_back(row);
  }
  return rep;
}

struct ContinuityRow {
  int j = 0;
  double ambient_error = 0.0;
  double discretized_error = 0.0;
};

/// Perturbations F + K/j: sup errors in X and on V. The ambient sup runs over the samples and their
/// projections onto V, so it always covers the points used on V.
inline std::vector<ContinuityRow> continuity_probe(const Map& F, const FiniteRankOperator& K, const std::vector<int>& js,
                                                   int d, double r, int n, std::uint64_t seed) {
  const int M = K.ambient_dim();
  const auto xs = sample_ball(M, r, n, 1.0, seed);
  const auto xd = restricted_samples(xs, d);
  std::vector<ContinuityRow> out;
  for (int j : js) {
    if (j < 1) throw std::invalid_argument("continuity_probe: j must be positive");
    const double c = 1.0 / j;
    auto Fj = [&](const Vec& x) { return Vec(F(x) + c * K.apply(x)); };
    ContinuityRow row;
    row.j = j;
    for (const auto* set : {&xs, &xd})
      for (const auto& x : *set) row.ambient_error = std::max(row.ambient_error, (F(x) - Fj(x)).norm());
    const DiscretizedMap A(F, d), B(Fj, d);
    for (const auto& x : xd) row.discretized_error = std::max(row.discretized_error, (A(x) - B(x)).norm());
    out.push_back(row);
  }
  return out;
}

using MapPath = std::function<Map(double)>;

struct OrientationRow {
  double t = 0.0;
  int sign = 0;
  double abs_det = 0.0;
};

struct OrientationScan {
  std::vector<OrientationRow> rows;
  std::vector<std::pair<double, double>> crossings;  // brackets [lo, hi]

  int sign_changes() const { return static_cast<int>(crossings.size()); }
};

/// Determinant of D(P_V F_t) at a point of V.
inline double discretized_det(const Map& F, const Vec& base, int d, double h = 1e-6) {
  const Mat J = fd_jacobian(F, project(base, d), d, h);
  if (!J.allFinite()) throw std::runtime_error("orientation_scan: non-finite Jacobian entries");
  return J.determinant();
}

inline int sign_of(double v) { return (v > 0) - (v < 0); }

/// Sign of det D(F_{t,V}) along t_grid, each sign change bracketed by bisection to `tol`.
inline OrientationScan orientation_scan(const MapPath& path, const std::vector<double>& t_grid, int d, const Vec& base,
                                        double tol = 1e-6) {
  if (d > 50) throw std::invalid_argument("orientation_scan: dimension above 50");
  OrientationScan out;
  auto det_at = [&](double t) { return discretized_det(path(t), base, d); };
  double prev_t = 0, prev_det = 0;
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    const double t = t_grid[i];
    const double det = det_at(t);
    out.rows.push_back({t, sign_of(det), std::abs(det)});
    if (det == 0.0) {
      out.crossings.emplace_back(t, t);
    } else if (i > 0 && prev_det != 0.0 && sign_of(det) != sign_of(prev_det)) {
      double lo = prev_t, hi = t, flo = prev_det;
      while (hi - lo >= tol) {
        const double mid = 0.5 * (lo + hi);
        const double fm = det_at(mid);
        if (fm == 0.0) {
          lo = hi = mid;
          break;
        }
        if (sign_of(fm) == sign_of(flo)) {
          lo = mid;
          flo = fm;
        } else {
          hi = mid;
        }
      }
      out.crossings.emplace_back(lo, hi);
    }
    prev_t = t;
    prev_det = det;
  }
  return out;
}

inline std::vector<double> uniform_grid(double a, double b, int n) {
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = n == 1 ? a : a + (b - a) * i / (n - 1);
  return g;
}

}  // namespace nolab
