#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "nolab/quadrature.hpp"

namespace nolab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Coefficient vector of an element of the truncated space over a fixed orthonormal basis.
using SpectralVector = Vec;

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline void require_same_dim(const Vec& a, const Vec& b, const char* where) {
  if (a.size() != b.size())
    throw DimensionError(std::string(where) + ": dimension mismatch (" + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()) + ")");
}

enum class BasisKind { fourier, fem_hat, abstract_orthonormal };

inline std::string to_string(BasisKind k) {
  switch (k) {
    case BasisKind::fourier: return "fourier";
    case BasisKind::fem_hat: return "fem_hat";
    case BasisKind::abstract_orthonormal: return "abstract_orthonormal";
  }
  return "unknown";
}

inline BasisKind basis_kind_from_string(const std::string& s) {
  if (s == "fourier") return BasisKind::fourier;
  if (s == "fem_hat") return BasisKind::fem_hat;
  if (s == "abstract_orthonormal" || s == "abstract") return BasisKind::abstract_orthonormal;
  throw std::invalid_argument("unknown basis kind: " + s);
}

struct BasisSpec {
  BasisKind kind = BasisKind::fourier;
  int ambient_dim = 32;
  int quadrature = 0;  // panels; 0 means 4 * ambient_dim
};

/// Evaluate the n-th Fourier basis function (0-based) at t.
/// Ordering: 1, sqrt2 cos(2 pi t), sqrt2 sin(2 pi t), sqrt2 cos(4 pi t), ...
inline double fourier_basis(int n, double t) {
  if (n == 0) return 1.0;
  const int k = (n + 1) / 2;
  const double arg = 2.0 * std::numbers::pi * k * t;
  return std::numbers::sqrt2 * ((n % 2 == 1) ? std::cos(arg) : std::sin(arg));
}

/// Frequency k of the n-th Fourier basis function.
inline int fourier_frequency(int n) { return (n + 1) / 2; }

/// Prefix subspace span{e_0, ..., e_{dim-1}}.
struct Subspace {
  int dim = 0;

  static Subspace prefix(int d) {
    if (d < 0) throw std::invalid_argument("Subspace: negative dimension");
    return Subspace{d};
  }
  bool contains_index(int i) const { return i >= 0 && i < dim; }
  bool operator<=(const Subspace& o) const { return dim <= o.dim; }
  bool operator==(const Subspace& o) const = default;
};

/// Least upper bound of two prefixes.
inline Subspace join(const Subspace& a, const Subspace& b) { return Subspace{std::max(a.dim, b.dim)}; }
/// Greatest lower bound of two prefixes.
inline Subspace meet(const Subspace& a, const Subspace& b) { return Subspace{std::min(a.dim, b.dim)}; }

/// Truncated L2(0,1) with a chosen basis and a quadrature grid.
class Space {
 public:
  Space() : Space(BasisSpec{}) {}

  explicit Space(BasisSpec spec) : spec_(spec) {
    if (spec_.ambient_dim < 1) throw std::invalid_argument("Space: ambient_dim must be positive");
    if (spec_.quadrature <= 0) spec_.quadrature = 4 * spec_.ambient_dim;
    if (spec_.kind == BasisKind::fem_hat)
      throw std::invalid_argument("Space: hat functions are not orthonormal; use galerkin_fem");
    if (spec_.kind == BasisKind::fourier) build_grid();
  }

  static Space fourier(int M, int Q = 0) { return Space(BasisSpec{BasisKind::fourier, M, Q}); }
  static Space abstract(int M) { return Space(BasisSpec{BasisKind::abstract_orthonormal, M, 0}); }

  const BasisSpec& spec() const { return spec_; }
  int dim() const { return spec_.ambient_dim; }
  BasisKind kind() const { return spec_.kind; }
  bool has_grid() const { return spec_.kind == BasisKind::fourier; }
  /// True when basis element 0 is the constant function.
  bool includes_constant() const { return spec_.kind == BasisKind::fourier; }

  const Vec& nodes() const { need_grid(); return nodes_; }
  const Vec& weights() const { need_grid(); return weights_; }
  /// Basis values, rows = grid nodes, columns = basis index.
  const Mat& basis_matrix() const { need_grid(); return basis_; }

  Vec to_grid(const Vec& x) const {
    need_grid();
    if (x.size() != dim()) throw DimensionError("to_grid: dimension mismatch");
    return basis_ * x;
  }

  Vec from_grid(const Vec& values) const {
    need_grid();
    if (values.size() != nodes_.size()) throw DimensionError("from_grid: grid size mismatch");
    return basis_.transpose() * weights_.cwiseProduct(values);
  }

  /// Gram matrix of the basis under the quadrature rule.
  Mat gram() const {
    need_grid();
    return basis_.transpose() * weights_.asDiagonal() * basis_;
  }

  Vec unit(int i) const {
    if (i < 0 || i >= dim()) throw std::out_of_range("unit: index out of range");
    return Vec::Unit(dim(), i);
  }
  Vec zero() const { return Vec::Zero(dim()); }

 private:
  void need_grid() const {
    if (!has_grid()) throw std::logic_error("Space: no quadrature grid for an abstract basis");
  }

  void build_grid() {
    const QuadratureRule rule = composite_gauss_legendre(0.0, 1.0, spec_.quadrature, 6);
    const auto n = static_cast<Eigen::Index>(rule.size());
    nodes_.resize(n);
    weights_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      nodes_[i] = rule.nodes[i];
      weights_[i] = rule.weights[i];
    }
    basis_.resize(n, dim());
    for (Eigen::Index i = 0; i < n; ++i)
      for (int j = 0; j < dim(); ++j) basis_(i, j) = fourier_basis(j, nodes_[i]);
  }

  BasisSpec spec_;
  Vec nodes_;
  Vec weights_;
  Mat basis_;
};

inline double inner(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "inner");
  return a.dot(b);
}

/// Orthogonal projection onto a prefix subspace.
inline Vec project(const Vec& x, const Subspace& V) {
  Vec y = x;
  const auto d = std::min<Eigen::Index>(V.dim, x.size());
  y.tail(x.size() - d).setZero();
  return y;
}

inline Vec project(const Vec& x, int d) { return project(x, Subspace{d}); }

/// First N coefficients.
inline Vec encode(const Vec& x, int N) {
  if (N < 0 || N > x.size())
    throw DimensionError("encode: N=" + std::to_string(N) + " exceeds ambient dimension " +
                         std::to_string(x.size()));
  return x.head(N);
}

/// Embed N coefficients into the ambient space of dimension M.
inline Vec decode(const Vec& a, int M) {
  if (a.size() > M)
    throw DimensionError("decode: " + std::to_string(a.size()) + " coefficients exceed ambient dimension " +
                         std::to_string(M));
  Vec x = Vec::Zero(M);
  x.head(a.size()) = a;
  return x;
}

/// Seeded samples in the closed ball of radius r. Coefficient n (1-based) is damped by n^-decay;
/// the direction is normalised and the radius drawn so that the ball is filled uniformly in radius^M.
inline std::vector<Vec> sample_ball(int M, double r, int n, double decay, std::uint64_t seed) {
  if (!(r > 0.0)) throw std::invalid_argument("sample_ball: radius must be positive");
  if (decay < 0.0) throw std::invalid_argument("sample_ball: decay must be nonnegative");
  std::vector<Vec> out;
  if (n <= 0) return out;
  out.reserve(n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int s = 0; s < n; ++s) {
    Vec x(M);
    for (int i = 0; i < M; ++i) x[i] = normal(rng) * std::pow(static_cast<double>(i + 1), -decay);
    const double nx = x.norm();
    if (nx == 0.0) x = Vec::Unit(M, 0); else x /= nx;
    // radius law r * u^(1/3): favours the boundary without emptying the centre
    const double rad = r * std::cbrt(unif(rng));
    out.push_back(rad * x);
  }
  return out;
}

/// Same as sample_ball but restricted to the prefix of dimension d (coefficients beyond d are zero).
inline std::vector<Vec> sample_ball_prefix(int M, int d, double r, int n, double decay, std::uint64_t seed) {
  auto xs = sample_ball(d, r, n, decay, seed);
  for (auto& x : xs) x = decode(x, M);
  return xs;
}

}  // namespace nolab
