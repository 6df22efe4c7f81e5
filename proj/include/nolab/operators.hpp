#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nolab/spectral_core.hpp"

namespace nolab {

/// Tx = sum_p omega_p <x, psi_p> phi_p. Columns of psi / phi hold the singular vectors.
class FiniteRankOperator {
 public:
  FiniteRankOperator() = default;

  FiniteRankOperator(Vec omegas, Mat psi, Mat phi, double tol = 1e-10)
      : omegas_(std::move(omegas)), psi_(std::move(psi)), phi_(std::move(phi)) {
    validate(tol);
  }

  /// Zero operator on an M-dimensional space.
  static FiniteRankOperator zero(int M) { return FiniteRankOperator(Vec(0), Mat(M, 0), Mat(M, 0)); }

  /// Rank-one operator omega <x, psi> phi.
  static FiniteRankOperator rank_one(double omega, const Vec& psi, const Vec& phi) {
    Vec w(1);
    w << omega;
    return FiniteRankOperator(w, psi.normalized(), phi.normalized());
  }

  int ambient_dim() const { return static_cast<int>(psi_.rows()); }
  int rank() const { return static_cast<int>(omegas_.size()); }
  const Vec& omegas() const { return omegas_; }
  const Mat& psi() const { return psi_; }
  const Mat& phi() const { return phi_; }
  double norm() const { return rank() == 0 ? 0.0 : omegas_[0]; }

  Vec apply(const Vec& x) const {
    if (x.size() != psi_.rows()) throw DimensionError("FiniteRankOperator::apply: dimension mismatch");
    if (rank() == 0) return Vec::Zero(x.size());
    return phi_ * omegas_.cwiseProduct(psi_.transpose() * x);
  }

  Vec apply_adjoint(const Vec& x) const {
    if (x.size() != phi_.rows()) throw DimensionError("FiniteRankOperator::apply_adjoint: dimension mismatch");
    if (rank() == 0) return Vec::Zero(x.size());
    return psi_ * omegas_.cwiseProduct(phi_.transpose() * x);
  }

  Mat matrix() const {
    if (rank() == 0) return Mat::Zero(psi_.rows(), psi_.rows());
    return phi_ * omegas_.asDiagonal() * psi_.transpose();
  }

  FiniteRankOperator scaled(double c) const {
    if (c < 0) throw std::invalid_argument("FiniteRankOperator::scaled: negative factor");
    return FiniteRankOperator(omegas_ * c, psi_, phi_);
  }

  /// Keep the leading k triples.
  FiniteRankOperator head(int k) const {
    k = std::clamp(k, 0, rank());
    return FiniteRankOperator(omegas_.head(k), psi_.leftCols(k), phi_.leftCols(k));
  }

  /// Triples from index k on.
  FiniteRankOperator tail(int k) const {
    k = std::clamp(k, 0, rank());
    const int n = rank() - k;
    return FiniteRankOperator(omegas_.tail(n), psi_.rightCols(n), phi_.rightCols(n));
  }

 private:
  void validate(double tol) const {
    if (psi_.rows() != phi_.rows()) throw DimensionError("FiniteRankOperator: psi/phi row mismatch");
    if (psi_.cols() != omegas_.size() || phi_.cols() != omegas_.size())
      throw DimensionError("FiniteRankOperator: rank mismatch");
    for (int p = 0; p < rank(); ++p) {
      if (omegas_[p] < 0) throw std::invalid_argument("FiniteRankOperator: negative singular value");
      if (p > 0 && omegas_[p] > omegas_[p - 1] * (1 + 1e-14))
        throw std::invalid_argument("FiniteRankOperator: singular values must be nonincreasing");
    }
    const Mat I = Mat::Identity(rank(), rank());
    if (rank() > 0) {
      if ((psi_.transpose() * psi_ - I).cwiseAbs().maxCoeff() > tol)
        throw std::invalid_argument("FiniteRankOperator: psi family not orthonormal");
      if ((phi_.transpose() * phi_ - I).cwiseAbs().maxCoeff() > tol)
        throw std::invalid_argument("FiniteRankOperator: phi family not orthonormal");
    }
  }

  Vec omegas_;
  Mat psi_;
  Mat phi_;
};

struct TruncationResult {
  FiniteRankOperator head;
  double tail_norm = 0.0;
};

/// Split off the triples with omega >= h.
inline TruncationResult truncate_rank(const FiniteRankOperator& T, double h) {
  if (!(h > 0)) throw std::invalid_argument("truncate_rank: h must be positive");
  int k = 0;
  while (k < T.rank() && T.omegas()[k] >= h) ++k;
  return {T.head(k), k < T.rank() ? T.omegas()[k] : 0.0};
}

/// Symbolic linear operator on the ambient space.
class LinearOperatorExpr {
 public:
  enum class Kind { identity, scalar, diagonal, dense_on_prefix, reflection, composition, sum };

  static LinearOperatorExpr identity() { return LinearOperatorExpr(Kind::identity); }

  static LinearOperatorExpr scalar(double c) {
    LinearOperatorExpr e(Kind::scalar);
    e.c_ = c;
    return e;
  }

  static LinearOperatorExpr diagonal(Vec d) {
    LinearOperatorExpr e(Kind::diagonal);
    e.vec_ = std::move(d);
    return e;
  }

  /// Matrix acting on the leading block, identity on the rest.
  static LinearOperatorExpr dense_on_prefix(Mat A) {
    if (A.rows() != A.cols()) throw DimensionError("dense_on_prefix: matrix must be square");
    LinearOperatorExpr e(Kind::dense_on_prefix);
    e.mat_ = std::move(A);
    return e;
  }

  /// x - 2 <x, e> e with e normalised.
  static LinearOperatorExpr reflection(const Vec& e) {
    const double n = e.norm();
    if (!(n > 0)) throw std::invalid_argument("reflection: zero direction");
    LinearOperatorExpr r(Kind::reflection);
    r.vec_ = e / n;
    return r;
  }

  /// Applied right to left: composition({A, B}) x = A(B(x)).
  static LinearOperatorExpr composition(std::vector<LinearOperatorExpr> parts) {
    LinearOperatorExpr e(Kind::composition);
    e.parts_ = std::make_shared<std::vector<LinearOperatorExpr>>(std::move(parts));
    return e;
  }

  static LinearOperatorExpr sum(std::vector<LinearOperatorExpr> parts) {
    LinearOperatorExpr e(Kind::sum);
    e.parts_ = std::make_shared<std::vector<LinearOperatorExpr>>(std::move(parts));
    return e;
  }

  Kind kind() const { return kind_; }
  double scalar_value() const { return c_; }
  const Vec& vector() const { return vec_; }
  const Mat& matrix_block() const { return mat_; }
  const std::vector<LinearOperatorExpr>& parts() const {
    static const std::vector<LinearOperatorExpr> none;
    return parts_ ? *parts_ : none;
  }

  Vec apply(const Vec& x) const { return apply_impl(x, false); }
  Vec apply_adjoint(const Vec& x) const { return apply_impl(x, true); }

  Mat to_matrix(int M) const {
    Mat A(M, M);
    for (int j = 0; j < M; ++j) A.col(j) = apply(Vec::Unit(M, j));
    return A;
  }

  bool is_identity() const { return kind_ == Kind::identity; }
  bool is_reflection() const { return kind_ == Kind::reflection; }

 private:
  explicit LinearOperatorExpr(Kind k) : kind_(k) {}

  Vec apply_impl(const Vec& x, bool adj) const {
    switch (kind_) {
      case Kind::identity: return x;
      case Kind::scalar: return c_ * x;
      case Kind::diagonal:
        require_same_dim(vec_, x, "diagonal::apply");
        return vec_.cwiseProduct(x);
      case Kind::dense_on_prefix: {
        const auto d = mat_.rows();
        if (d > x.size()) throw DimensionError("dense_on_prefix::apply: block larger than space");
        Vec y = x;
        y.head(d) = adj ? Vec(mat_.transpose() * x.head(d)) : Vec(mat_ * x.head(d));
        return y;
      }
      case Kind::reflection:
        require_same_dim(vec_, x, "reflection::apply");
        return x - 2.0 * vec_.dot(x) * vec_;
      case Kind::composition: {
        Vec y = x;
        const auto& ps = parts();
        if (!adj) {
          for (auto it = ps.rbegin(); it != ps.rend(); ++it) y = it->apply(y);
        } else {
          for (const auto& p : ps) y = p.apply_adjoint(y);
        }
        return y;
      }
      case Kind::sum: {
        Vec y = Vec::Zero(x.size());
        for (const auto& p : parts()) y += adj ? p.apply_adjoint(x) : p.apply(x);
        return y;
      }
    }
    throw std::logic_error("LinearOperatorExpr: unknown kind");
  }

  Kind kind_;
  double c_ = 1.0;
  Vec vec_;
  Mat mat_;
  std::shared_ptr<std::vector<LinearOperatorExpr>> parts_;
};

/// Scalar activation applied pointwise to functions (through the grid) or entrywise to vectors.
struct PointwiseActivation {
  enum class Kind { identity, leaky_relu, recu, smooth_tanh };

  Kind kind = Kind::identity;
  double slope = 1.0;  // negative-side slope for leaky_relu, linear slope for smooth_tanh
  double amp = 0.0;    // tanh amplitude for smooth_tanh

  static PointwiseActivation identity() { return {}; }
  static PointwiseActivation leaky_relu(double slope_neg) { return {Kind::leaky_relu, slope_neg, 0.0}; }
  static PointwiseActivation relu() { return leaky_relu(0.0); }
  static PointwiseActivation recu() { return {Kind::recu, 0.0, 0.0}; }
  /// s -> slope * s + amp * tanh(s).
  static PointwiseActivation smooth_tanh(double slope, double amp) { return {Kind::smooth_tanh, slope, amp}; }

  double operator()(double s) const {
    switch (kind) {
      case Kind::identity: return s;
      case Kind::leaky_relu: return s >= 0 ? s : slope * s;
      case Kind::recu: return s > 0 ? s * s * s : 0.0;
      case Kind::smooth_tanh: return slope * s + amp * std::tanh(s);
    }
    return s;
  }

  double derivative(double s) const {
    switch (kind) {
      case Kind::identity: return 1.0;
      case Kind::leaky_relu: return s >= 0 ? 1.0 : slope;
      case Kind::recu: return s > 0 ? 3.0 * s * s : 0.0;
      case Kind::smooth_tanh: {
        const double c = std::cosh(s);
        return slope + amp / (c * c);
      }
    }
    return 1.0;
  }

  /// Lower bound of the derivative over the real line.
  double derivative_lower() const {
    switch (kind) {
      case Kind::identity: return 1.0;
      case Kind::leaky_relu: return std::min(1.0, slope);
      case Kind::recu: return 0.0;
      case Kind::smooth_tanh: return slope + std::min(0.0, amp);
    }
    return 1.0;
  }

  /// Upper bound of |derivative| on [-radius, radius] (radius only matters for recu).
  double lipschitz(double radius = 0.0) const {
    switch (kind) {
      case Kind::identity: return 1.0;
      case Kind::leaky_relu: return std::max(1.0, std::abs(slope));
      case Kind::recu: return 3.0 * radius * radius;
      case Kind::smooth_tanh: return std::max(std::abs(slope + amp), std::abs(slope));
    }
    return 1.0;
  }

  bool globally_lipschitz() const { return kind != Kind::recu; }

  /// Growth constants |sigma(s)| <= C1 |s| + C2.
  std::pair<double, double> growth() const {
    switch (kind) {
      case Kind::identity: return {1.0, 0.0};
      case Kind::leaky_relu: return {std::max(1.0, std::abs(slope)), 0.0};
      case Kind::recu: return {std::numeric_limits<double>::infinity(), 0.0};
      case Kind::smooth_tanh: return {std::abs(slope), std::abs(amp)};
    }
    return {1.0, 0.0};
  }

  std::string name() const {
    switch (kind) {
      case Kind::identity: return "identity";
      case Kind::leaky_relu: return "leaky_relu";
      case Kind::recu: return "recu";
      case Kind::smooth_tanh: return "smooth_tanh";
    }
    return "unknown";
  }
};

/// Entrywise activation on R^N, or GroupSort with groups of two.
struct CoordinateActivation {
  bool groupsort = false;
  PointwiseActivation pointwise;

  static CoordinateActivation groupsort2() { return {true, {}}; }
  static CoordinateActivation entrywise(PointwiseActivation a) { return {false, a}; }

  Vec operator()(const Vec& z) const {
    Vec out(z.size());
    if (groupsort) {
      Eigen::Index i = 0;
      for (; i + 1 < z.size(); i += 2) {
        out[i] = std::min(z[i], z[i + 1]);
        out[i + 1] = std::max(z[i], z[i + 1]);
      }
      if (i < z.size()) out[i] = z[i];
      return out;
    }
    for (Eigen::Index i = 0; i < z.size(); ++i) out[i] = pointwise(z[i]);
    return out;
  }

  /// Jacobian at z (a permutation matrix for groupsort).
  Mat jacobian(const Vec& z) const {
    const auto n = z.size();
    Mat J = Mat::Zero(n, n);
    if (groupsort) {
      Eigen::Index i = 0;
      for (; i + 1 < n; i += 2) {
        if (z[i] <= z[i + 1]) {
          J(i, i) = 1;
          J(i + 1, i + 1) = 1;
        } else {
          J(i, i + 1) = 1;
          J(i + 1, i) = 1;
        }
      }
      if (i < n) J(i, i) = 1;
      return J;
    }
    for (Eigen::Index i = 0; i < n; ++i) J(i, i) = pointwise.derivative(z[i]);
    return J;
  }

  double lipschitz(double radius = 0.0) const { return groupsort ? 1.0 : pointwise.lipschitz(radius); }
  bool globally_lipschitz() const { return groupsort || pointwise.globally_lipschitz(); }
  std::string name() const { return groupsort ? "groupsort2" : pointwise.name(); }
};

/// sigma o u evaluated through the quadrature grid, then projected back.
inline Vec nemytskii_apply(const Space& space, const PointwiseActivation& sigma, const Vec& u) {
  if (sigma.kind == PointwiseActivation::Kind::identity) return u;
  Vec g = space.to_grid(u);
  for (Eigen::Index i = 0; i < g.size(); ++i) g[i] = sigma(g[i]);
  return space.from_grid(g);
}

/// Power iteration on T^T T. Returns 0 for the zero operator.
inline double power_norm(const std::function<Vec(const Vec&)>& apply,
                         const std::function<Vec(const Vec&)>& adjoint, int M, int iters = 200,
                         std::uint64_t seed = 7) {
  if (iters < 10) throw std::invalid_argument("operator_norm_estimate: iters must be >= 10");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Vec v(M);
  for (int i = 0; i < M; ++i) v[i] = normal(rng);
  v.normalize();
  double est = 0.0;
  for (int k = 0; k < iters; ++k) {
    Vec w = adjoint(apply(v));
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    const double next = std::sqrt(nw);
    v = w / nw;
    if (k > 5 && std::abs(next - est) <= 1e-15 * next) {
      est = next;
      break;
    }
    est = next;
  }
  return apply(v).norm();
}

inline double operator_norm_estimate(const FiniteRankOperator& T, int iters = 200, std::uint64_t seed = 7) {
  return power_norm([&](const Vec& x) { return T.apply(x); }, [&](const Vec& x) { return T.apply_adjoint(x); },
                    T.ambient_dim(), iters, seed);
}

inline double operator_norm_estimate(const LinearOperatorExpr& T, int M, int iters = 200,
                                     std::uint64_t seed = 7) {
  return power_norm([&](const Vec& x) { return T.apply(x); }, [&](const Vec& x) { return T.apply_adjoint(x); },
                    M, iters, seed);
}

inline double operator_norm_estimate(const Mat& A, int iters = 200, std::uint64_t seed = 7) {
  if (A.rows() != A.cols()) {
    Eigen::JacobiSVD<Mat> svd(A);
    return svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
  }
  return power_norm([&](const Vec& x) { return Vec(A * x); }, [&](const Vec& x) { return Vec(A.transpose() * x); },
                    static_cast<int>(A.cols()), iters, seed);
}

/// Orthonormal columns from a seeded Gaussian matrix, coefficient n damped by (n+1)^-decay.
inline Mat random_orthonormal(int M, int r, double decay, std::uint64_t seed) {
  if (r > M) throw std::invalid_argument("random_orthonormal: rank exceeds ambient dimension");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Mat G(M, r);
  for (int j = 0; j < r; ++j)
    for (int i = 0; i < M; ++i) G(i, j) = normal(rng) * std::pow(i + 1.0, -decay);
  Eigen::HouseholderQR<Mat> qr(G);
  Mat Q = qr.householderQ() * Mat::Identity(M, r);
  // fix signs so the result does not depend on Householder conventions
  const Mat R = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  for (int j = 0; j < r; ++j)
    if (R(j, j) < 0) Q.col(j) *= -1.0;
  return Q;
}

}  // namespace nolab
