#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nolab/layers.hpp"
#include "nolab/operators.hpp"
#include "nolab/spectral_core.hpp"

namespace nolab {

enum class CertMethod { sampled, small_gain, linear_eig, nemytskii };

inline std::string to_string(CertMethod m) {
  switch (m) {
    case CertMethod::sampled: return "sampled";
    case CertMethod::small_gain: return "small_gain";
    case CertMethod::linear_eig: return "linear_eig";
    case CertMethod::nemytskii: return "nemytskii";
  }
  return "unknown";
}

struct MonotonicityCertificate {
  double alpha = 0.0;
  CertMethod method = CertMethod::sampled;
  std::optional<double> ball_radius;  // empty means global
  int sample_count = 0;
  std::uint64_t seed = 0;
  bool rejected = false;
  std::string reason;
  // sampled certificates keep the minimising pair
  std::optional<std::pair<Vec, Vec>> argmin;

  bool certified() const { return !rejected && alpha > 0.0; }
};

struct BilipschitzEstimate {
  double c_lower = 0.0;
  double c_upper = 0.0;
  double ball_radius = 0.0;
  int sample_count = 0;
  std::uint64_t seed = 0;
};

constexpr double kDegeneratePair = 1e-12;

/// Minimum of <F(a) - F(b), a - b> / |a - b|^2 over all pairs of the given points.
inline MonotonicityCertificate pairwise_alpha_points(const Map& F, const std::vector<Vec>& xs) {
  if (xs.size() < 2) throw std::invalid_argument("pairwise_alpha: need at least two samples");
  std::vector<Vec> fx;
  fx.reserve(xs.size());
  for (const auto& x : xs) fx.push_back(F(x));
  MonotonicityCertificate c;
  c.method = CertMethod::sampled;
  c.alpha = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = i + 1; j < xs.size(); ++j) {
      const Vec dx = xs[i] - xs[j];
      const double n2 = dx.squaredNorm();
      if (std::sqrt(n2) < kDegeneratePair) continue;
      const double q = (fx[i] - fx[j]).dot(dx) / n2;
      if (q < c.alpha) {
        c.alpha = q;
        c.argmin = std::make_pair(xs[i], xs[j]);
      }
    }
  if (!std::isfinite(c.alpha)) throw std::runtime_error("pairwise_alpha: all pairs degenerate");
  c.rejected = !(c.alpha > 0.0);
  if (c.rejected) c.reason = "sampled alpha is not positive";
  return c;
}

/// Sampled strong monotonicity constant on B(0, r) (an upper bound on the true constant).
inline MonotonicityCertificate pairwise_alpha(const Map& F, int M, double r, int n, std::uint64_t seed,
                                              double decay = 1.0) {
  if (n < 2) throw std::invalid_argument("pairwise_alpha: n must be at least 2");
  auto c = pairwise_alpha_points(F, sample_ball(M, r, n, decay, seed));
  c.ball_radius = r;
  c.sample_count = n;
  c.seed = seed;
  return c;
}

/// alpha = 1/2 whenever Lip(G) |T1| |T2| <= 1/2.
inline MonotonicityCertificate small_gain_certificate(const NeuralOperatorLayer& layer, double t1_norm = -1.0,
                                                   double t2_norm = -1.0) {
  MonotonicityCertificate c;
  c.method = CertMethod::small_gain;
  const double n1 = t1_norm >= 0 ? t1_norm : layer.T1().norm();
  const double n2 = t2_norm >= 0 ? t2_norm : layer.T2().norm();
  const double lip = layer.G().lipschitz();
  if (!std::isfinite(lip)) throw std::invalid_argument("small_gain_certificate: missing Lipschitz bound for G");
  if (n1 == 0.0 || n2 == 0.0 || lip == 0.0 || layer.G().kind() == Nonlinearity::Kind::zero) {
    c.alpha = 1.0;
    return c;
  }
  const double ratio = lip * n1 * n2;
  if (ratio <= 0.5) {
    c.alpha = 0.5;
  } else {
    c.rejected = true;
    c.alpha = 0.0;
    c.reason = "Lip(G)|T1||T2| = " + std::to_string(ratio) + " exceeds 1/2";
  }
  return c;
}

/// Smallest eigenvalue of the symmetric part of A compressed to the prefix d (d = M by default, which
/// includes the identity tail of dense_on_prefix operators).
inline MonotonicityCertificate linear_certificate(const LinearOperatorExpr& A, int M, int d = -1) {
  if (d < 0 || d > M) d = M;
  MonotonicityCertificate c;
  c.method = CertMethod::linear_eig;
  if (d == 0) {
    c.rejected = true;
    c.reason = "empty prefix";
    return c;
  }
  const Mat full = A.to_matrix(M);
  const Mat blk = full.topLeftCorner(d, d);
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (blk + blk.transpose()), Eigen::EigenvaluesOnly);
  c.alpha = es.eigenvalues().minCoeff();
  if (!(c.alpha > 1e-12)) {
    c.rejected = true;
    c.reason = "symmetric part has eigenvalue " + std::to_string(c.alpha);
  }
  return c;
}

/// Strong monotonicity of u -> sigma o u from the lower derivative bound of sigma.
inline MonotonicityCertificate nemytskii_certificate(const PointwiseActivation& sigma) {
  MonotonicityCertificate c;
  c.method = CertMethod::nemytskii;
  c.alpha = sigma.derivative_lower();
  if (!(c.alpha > 0.0)) {
    c.rejected = true;
    c.reason = sigma.name() + " has derivative lower bound " + std::to_string(c.alpha);
  }
  const auto g = sigma.growth();
  if (!std::isfinite(g.first)) {
    c.rejected = true;
    c.reason = sigma.name() + " violates linear growth";
  }
  return c;
}

inline BilipschitzEstimate bilipschitz_points(const Map& F, const std::vector<Vec>& xs) {
  if (xs.size() < 2) throw std::invalid_argument("bilipschitz_estimate: need at least two samples");
  std::vector<Vec> fx;
  for (const auto& x : xs) fx.push_back(F(x));
  BilipschitzEstimate b;
  b.c_lower = std::numeric_limits<double>::infinity();
  b.c_upper = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = i + 1; j < xs.size(); ++j) {
      const double d = (xs[i] - xs[j]).norm();
      if (d < kDegeneratePair) continue;
      const double q = (fx[i] - fx[j]).norm() / d;
      b.c_lower = std::min(b.c_lower, q);
      b.c_upper = std::max(b.c_upper, q);
    }
  return b;
}

inline BilipschitzEstimate bilipschitz_estimate(const Map& F, int M, double r, int n, std::uint64_t seed,
                                               double decay = 1.0) {
  if (n < 2) throw std::invalid_argument("bilipschitz_estimate: n must be at least 2");
  auto b = bilipschitz_points(F, sample_ball(M, r, n, decay, seed));
  b.ball_radius = r;
  b.sample_count = n;
  b.seed = seed;
  return b;
}

struct JacobianScan {
  double min_sym_eig = std::numeric_limits<double>::infinity();
  double min_det = std::numeric_limits<double>::infinity();
};

/// Finite-difference Jacobian of P_d F on the prefix d, scanned over samples in B_V(0, r).
inline JacobianScan jacobian_pd_scan(const Map& F, int M, int d, double r, int n, std::uint64_t seed,
                                     double h = 1e-5) {
  if (d < 1 || d > 50 || d > M) throw std::invalid_argument("jacobian_pd_scan: prefix dimension must be in [1, 50]");
  JacobianScan out;
  const auto xs = sample_ball_prefix(M, d, r, n, 1.0, seed);
  for (const auto& x : xs) {
    const Mat J = fd_jacobian(F, x, d, h);
    if (!J.allFinite()) throw std::runtime_error("jacobian_pd_scan: non-finite Jacobian entries");
    const Mat S = 0.5 * (J + J.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(S);
    out.min_sym_eig = std::min(out.min_sym_eig, es.eigenvalues().minCoeff());
    out.min_det = std::min(out.min_det, J.determinant());
  }
  return out;
}

}  // namespace nolab
