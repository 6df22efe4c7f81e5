#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nolab/invert.hpp"
#include "nolab/layers.hpp"
#include "nolab/monotone.hpp"
#include "nolab/smooth_step.hpp"

namespace nolab {

/// Error raised by one stage of the decomposition pipeline, tagged with the stage name.
struct StageError : std::runtime_error {
  std::string stage;
  StageError(std::string s, const std::string& what) : std::runtime_error(s + ": " + what), stage(std::move(s)) {}
};

// ---------------------------------------------------------------------------
// Inversion helpers

/// x <- x - tau (f(x) - y), tau = alpha / L^2. Starts at x0 (default 0).
inline Vec invert_monotone(const Map& f, const Vec& y, double alpha, double L, double tol, int max_iter,
                           const Vec* x0 = nullptr, int* iterations = nullptr) {
  if (!(alpha > 0.0) || L < alpha) throw std::invalid_argument("invert_monotone: need 0 < alpha <= L");
  const double tau = alpha / (L * L);
  Vec x = x0 ? *x0 : Vec::Zero(y.size());
  Vec r = f(x) - y;
  int n = 0;
  while (r.norm() > tol) {
    if (n >= max_iter) throw NonConvergence("invert_monotone: max_iter exceeded", r.norm());
    x -= tau * r;
    r = f(x) - y;
    ++n;
  }
  if (iterations) *iterations = n;
  return x;
}

/// log(tol / r0) / log q + 1 with q = sqrt(1 - alpha^2 / L^2).
inline int monotone_iteration_bound(double alpha, double L, double tol, double r0) {
  if (r0 <= tol) return 0;
  const double q = std::sqrt(std::max(0.0, 1.0 - alpha * alpha / (L * L)));
  if (q == 0.0) return 1;
  return static_cast<int>(std::floor(std::log(tol / r0) / std::log(q))) + 1;
}

/// Newton's method with residual backtracking for f(x) = y, given the Jacobian.
inline Vec newton_invert(const Map& f, const std::function<Mat(const Vec&)>& df, const Vec& y, Vec x, double tol,
                         int max_iter = 60) {
  Vec r = f(x) - y;
  double rn = r.norm();
  for (int it = 0; it < max_iter && rn > tol; ++it) {
    const Vec step = df(x).partialPivLu().solve(r);
    double lambda = 1.0;
    bool ok = false;
    for (int k = 0; k < 40; ++k) {
      const Vec trial = x - lambda * step;
      const Vec rt = f(trial) - y;
      const double tn = rt.norm();
      if (tn < rn) {
        x = trial;
        r = rt;
        rn = tn;
        ok = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!ok) break;
  }
  if (rn > tol) throw NonConvergence("newton_invert: residual stalled", rn);
  return x;
}

// ---------------------------------------------------------------------------
// Finite-rank reduction

struct WChoice {
  Mat frame;           // M x k orthonormal; column 0 is e_1
  double h = 0.0;
  bool saturated = false;  // W is the whole ambient space
  double tail_T1_right = 0.0, tail_T1_left = 0.0;  // |T1 (Id - P_W)|, |(Id - P_W) T1|
  double tail_T2_right = 0.0, tail_T2_left = 0.0;
  bool exact = false;  // every singular vector of T1 (input side) and T2 (output side) lies in W

  int dim() const { return static_cast<int>(frame.cols()); }
};

/// Threshold used in the existence proof: eps / (4 (1 + |G|_C1)(1 + |T1|)(1 + |T2|)).
inline double default_threshold(const NeuralOperatorLayer& layer, double epsilon) {
  const double g0 = layer.G().kind() == Nonlinearity::Kind::zero ? 0.0 : layer.G()(Vec::Zero(layer.ambient_dim())).norm();
  return epsilon / (4.0 * (1.0 + g0 + layer.G().lipschitz()) * (1.0 + layer.T1().norm()) * (1.0 + layer.T2().norm()));
}

/// e_1 plus every singular vector of T1, T2 with omega >= h, orthonormalised.
inline WChoice choose_W(const NeuralOperatorLayer& layer, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("choose_W: h must be positive");
  const int M = layer.ambient_dim();
  std::vector<Vec> cand{Vec::Unit(M, 0)};
  bool all_in = true;
  for (const auto* T : {&layer.T1(), &layer.T2()}) {
    for (int p = 0; p < T->rank(); ++p) {
      if (T->omegas()[p] < h) {
        if (T->omegas()[p] > 0) all_in = false;
        continue;
      }
      cand.push_back(T->psi().col(p));
      cand.push_back(T->phi().col(p));
    }
  }
  std::vector<Vec> basis;
  for (Vec v : cand) {
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& b : basis) v -= b.dot(v) * b;
    const double n = v.norm();
    if (n > 1e-10 && static_cast<int>(basis.size()) < M) basis.push_back(v / n);
  }
  WChoice w;
  w.h = h;
  w.frame.resize(M, static_cast<Eigen::Index>(basis.size()));
  for (std::size_t j = 0; j < basis.size(); ++j) w.frame.col(static_cast<Eigen::Index>(j)) = basis[j];
  w.saturated = w.dim() == M;
  const Mat Pperp = Mat::Identity(M, M) - w.frame * w.frame.transpose();
  const Mat A1 = layer.T1().matrix(), A2 = layer.T2().matrix();
  auto nrm = [](const Mat& A) { return A.norm() == 0.0 ? 0.0 : Eigen::JacobiSVD<Mat>(A).singularValues()[0]; };
  w.tail_T1_right = nrm(A1 * Pperp);
  w.tail_T1_left = nrm(Pperp * A1);
  w.tail_T2_right = nrm(A2 * Pperp);
  w.tail_T2_left = nrm(Pperp * A2);
  w.exact = w.saturated || all_in || (w.tail_T1_right < 1e-13 && w.tail_T2_left < 1e-13);
  return w;
}

/// F^W = Id + P_W T2 G(T1 P_W .)
inline Map build_FW(const NeuralOperatorLayer& layer, const Mat& W) {
  auto L = std::make_shared<NeuralOperatorLayer>(layer);
  auto Wp = std::make_shared<Mat>(W);
  return [L, Wp](const Vec& x) {
    const Mat& F = *Wp;
    return Vec(x + F * (F.transpose() * L->residual(F * (F.transpose() * x))));
  };
}

/// F^W restricted to W in frame coordinates: f(a) = a + W^T T2 G(T1 W a).
class ReducedMap {
 public:
  ReducedMap(std::shared_ptr<const NeuralOperatorLayer> layer, Mat W) : layer_(std::move(layer)), W_(std::move(W)) {}

  int dim() const { return static_cast<int>(W_.cols()); }
  const Mat& frame() const { return W_; }
  Vec operator()(const Vec& a) const { return a + W_.transpose() * layer_->residual(W_ * a); }
  Mat jacobian(const Vec& a) const { return W_.transpose() * layer_->jacobian(W_ * a) * W_; }

 private:
  std::shared_ptr<const NeuralOperatorLayer> layer_;
  Mat W_;
};

/// f_t(x) = (f(tx) - f(0)) / t + t f(0) for t > 0 and Df(0) x at t = 0.
class HomotopyFamily {
 public:
  explicit HomotopyFamily(ReducedMap f) : f_(std::move(f)) {
    const Vec z = Vec::Zero(f_.dim());
    f0_ = f_(z);
    Df0_ = f_.jacobian(z);
    Df0_lu_ = Df0_.partialPivLu();
  }

  const ReducedMap& base() const { return f_; }
  const Vec& value_at_zero() const { return f0_; }
  const Mat& Df0() const { return Df0_; }

  Vec value(double t, const Vec& x) const {
    if (t == 0.0) return Df0_ * x;
    return (f_(t * x) - f0_) / t + t * f0_;
  }

  Mat jacobian(double t, const Vec& x) const { return t == 0.0 ? Df0_ : f_.jacobian(t * x); }

  /// f_t^{-1}(y), started from guess or from Df0^{-1} y.
  Vec inverse(double t, const Vec& y, double tol, const Vec* guess = nullptr) const {
    if (t == 0.0) return Df0_lu_.solve(y);
    Vec x0 = guess ? *guess : Vec(Df0_lu_.solve(y - t * f0_));
    return newton_invert([&](const Vec& x) { return value(t, x); }, [&](const Vec& x) { return jacobian(t, x); }, y,
                         std::move(x0), tol * std::max(1.0, y.norm()));
  }

 private:
  ReducedMap f_;
  Vec f0_;
  Mat Df0_;
  Eigen::PartialPivLU<Mat> Df0_lu_;
};

// ---------------------------------------------------------------------------
// Linear part

struct LinearPath {
  bool reflect = false;          // A0 is the reflection in the first frame vector
  std::vector<Mat> factors;      // in application order, each within eps of Id
  int rotation_steps = 0;
  int stretch_steps = 0;
  double max_angle = 0.0;
  double max_log_stretch = 0.0;
  double reconstruction_error = 0.0;  // |product - Df0|
};

/// Df0 = P U with P > 0, U orthogonal. U (times a reflection if det U < 0) is split into rotation planes from the
/// real Schur form and interpolated in equal angle steps; P is split into equal powers.
inline LinearPath linear_path_blocks(const Mat& Df0, double epsilon) {
  const int n = static_cast<int>(Df0.rows());
  if (Df0.cols() != n) throw DimensionError("linear_path_blocks: matrix must be square");
  if (!(epsilon > 0.0)) throw std::invalid_argument("linear_path_blocks: epsilon must be positive");
  LinearPath out;
  if (n == 0) return out;
  Eigen::JacobiSVD<Mat> svd(Df0, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec sig = svd.singularValues();
  if (!(sig[n - 1] > 0) || sig[0] / sig[n - 1] > 1e8) throw std::invalid_argument("linear_path_blocks: Df0 is singular");
  const Mat& Us = svd.matrixU();
  Mat U = Us * svd.matrixV().transpose();
  Mat B = Mat::Identity(n, n);
  if (U.determinant() < 0) {
    out.reflect = true;
    B(0, 0) = -1.0;
    U = U * B;
  }
  const double target = 0.95 * epsilon;

  // rotation planes of U (now in SO(n))
  Eigen::RealSchur<Mat> schur(U);
  const Mat& T = schur.matrixT();
  const Mat& Q = schur.matrixU();
  struct Plane { int p, q; double theta; };
  std::vector<Plane> planes;
  std::vector<int> minus_ones;
  for (int i = 0; i < n;) {
    if (i + 1 < n && std::abs(T(i + 1, i)) > 1e-13) {
      planes.push_back({i, i + 1, std::atan2(T(i + 1, i), T(i, i))});
      i += 2;
    } else {
      if (T(i, i) < 0) minus_ones.push_back(i);
      ++i;
    }
  }
  if (minus_ones.size() % 2) throw std::logic_error("linear_path_blocks: odd number of -1 eigenvalues in SO(n)");
  for (std::size_t k = 0; k + 1 < minus_ones.size(); k += 2)
    planes.push_back({minus_ones[k], minus_ones[k + 1], std::numbers::pi});
  for (const auto& pl : planes) out.max_angle = std::max(out.max_angle, std::abs(pl.theta));
  auto rotation_power = [&](double s) {
    Mat S = Mat::Identity(n, n);
    for (const auto& pl : planes) {
      const double c = std::cos(s * pl.theta), sn = std::sin(s * pl.theta);
      S(pl.p, pl.p) = c;
      S(pl.q, pl.q) = c;
      S(pl.q, pl.p) = sn;
      S(pl.p, pl.q) = -sn;
    }
    return Mat(Q * S * Q.transpose());
  };
  if (out.max_angle > 1e-14) {
    out.rotation_steps = static_cast<int>(std::ceil(out.max_angle / target));
    // chord 2 sin(theta / 2n) < theta / n
    const Mat R = rotation_power(1.0 / out.rotation_steps);
    for (int k = 0; k < out.rotation_steps; ++k) out.factors.push_back(R);
  }
  const double u_err = (rotation_power(1.0) - U).norm();
  if (u_err > 1e-8) throw std::logic_error("linear_path_blocks: Schur reconstruction failed");

  // stretch part P = Us diag(sig) Us^T
  out.max_log_stretch = sig.array().log().abs().maxCoeff();
  if (out.max_log_stretch > 1e-15) {
    int steps = std::max(1, static_cast<int>(std::ceil(out.max_log_stretch / std::log1p(target))));
    auto worst = [&](int s) { return (sig.array().pow(1.0 / s) - 1.0).abs().maxCoeff(); };
    while (worst(steps) >= target) ++steps;
    out.stretch_steps = steps;
    const Mat Pk = Us * sig.array().pow(1.0 / steps).matrix().asDiagonal() * Us.transpose();
    for (int k = 0; k < steps; ++k) out.factors.push_back(Pk);
  }
  Mat prod = B;
  for (const auto& F : out.factors) prod = F * prod;
  out.reconstruction_error = (prod - Df0).norm();
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

struct DecomposeOptions {
  std::optional<double> h;           // rank threshold; default from the proof
  int lip_samples = 40;              // points per block for Lipschitz / monotonicity sampling
  std::uint64_t seed = 1;
  double inversion_tol = 1e-13;      // relative residual for f_t^{-1}
  int max_blocks = 20000;
  double refine_fraction = 0.9;      // split a t-interval while its sampled Lip >= fraction * eps
  bool verify = true;                // sample every block
};

struct BlockReport {
  std::string kind;     // "linear", "homotopy", "tail"
  double lip = 0.0;     // sampled Lip(block - Id) (exact for linear blocks)
  double alpha = 0.0;   // sampled strong monotonicity constant
  double det_at_zero = 0.0;
  double t_from = 0.0, t_to = 0.0;
};

struct DecompositionDiagnostics {
  int w_dim = 0;
  double h = 0.0;
  double tails[4] = {0, 0, 0, 0};
  double c0 = 0.0, c1 = 0.0;
  bool constants_certified = false;
  double c2_estimate = 0.0;  // finite-difference estimate of |f|_C2 on B(0, R1)
  double R0 = 0.0, R1 = 0.0, R2 = 0.0;
  double t1_bound = 0.0;
  double proof_grid_bound = 0.0;  // the proof's sufficient number of homotopy steps
  std::vector<double> t_grid;
  int rotation_steps = 0, stretch_steps = 0;
  double linear_reconstruction_error = 0.0;
};

class Decomposition {
 public:
  Decomposition(const NeuralOperatorLayer& layer, double epsilon, double r1, const DecomposeOptions& opt = {})
      : layer_(std::make_shared<const NeuralOperatorLayer>(layer)), eps_(epsilon), r1_(r1), opt_(opt) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("decompose: epsilon must lie in (0,1)");
    if (!(r1 > 0.0)) throw std::invalid_argument("decompose: r1 must be positive");
    build();
  }

  int J() const { return static_cast<int>(reports_.size()); }
  double epsilon() const { return eps_; }
  double r1() const { return r1_; }
  const LinearOperatorExpr& A0() const { return A0_; }
  bool reflected() const { return linear_.reflect; }
  const std::vector<BlockReport>& blocks() const { return reports_; }
  const DecompositionDiagnostics& diagnostics() const { return diag_; }
  const Mat& frame() const { return W_; }
  int ambient_dim() const { return layer_->ambient_dim(); }
  bool has_tail() const { return tail_; }

  /// Block k (0-based, in application order) as an ambient map.
  Vec apply_block(std::size_t k, const Vec& y) const {
    const auto& idx = index_.at(k);
    if (idx.kind == 2) return tail_apply(y, nullptr);
    const Vec a = W_.transpose() * y;
    const Vec b = idx.kind == 0 ? Vec(linear_.factors[idx.i] * a) : homotopy_apply(idx.i, a, nullptr);
    return y + W_ * (b - a);
  }

  Map block_map(std::size_t k) const {
    auto self = shared_copy();
    return [self, k](const Vec& y) { return self->apply_block(k, y); };
  }

  /// H_J o ... o H_1 o A0, evaluated with the known preimages as starting points.
  Vec composite(const Vec& x) const {
    const Vec a0 = W_.transpose() * x;
    const Vec perp = x - W_ * a0;
    Vec a = a0;
    if (linear_.reflect) a[0] = -a[0];
    for (const auto& L : linear_.factors) a = L * a;
    Vec guess = a0;
    for (std::size_t i = 0; i + 1 < diag_.t_grid.size(); ++i) a = homotopy_apply(i, a, &guess);
    Vec y = W_ * a + perp;
    if (tail_) y = tail_apply(y, &guess);
    return y;
  }

  Map composite_map() const {
    auto self = shared_copy();
    return [self](const Vec& x) { return self->composite(x); };
  }

  /// sup over samples in B(0, r1) of |composite(x) - F(x)|.
  double composite_error(int n, std::uint64_t seed) const {
    double worst = 0.0;
    for (const auto& x : sample_ball(ambient_dim(), r1_, n, 0.0, seed))
      worst = std::max(worst, (composite(x) - (*layer_)(x)).norm());
    return worst;
  }

  /// Largest |block(y) - y| change over W-perp directions, for blocks acting through W.
  double w_perp_defect(std::size_t k, const Vec& y_perp) const { return (apply_block(k, y_perp) - y_perp).norm(); }

 private:
  struct Index {
    int kind;  // 0 linear, 1 homotopy, 2 tail
    std::size_t i;
  };

  std::shared_ptr<const Decomposition> shared_copy() const { return std::make_shared<const Decomposition>(*this); }

  double cutoff(const Vec& y) const { return 1.0 - smooth_step((y.norm() - diag_.R2) / diag_.R2); }

  Vec cutoff_gradient(const Vec& y) const {
    const double r = y.norm();
    if (r == 0.0) return Vec::Zero(y.size());
    return -smooth_step_derivative((r - diag_.R2) / diag_.R2) / diag_.R2 * y / r;
  }

  /// H(y) = y + phi(y) (f_{t_next}(f_{t_prev}^{-1}(y)) - y) in frame coordinates.
  Vec homotopy_apply(std::size_t i, const Vec& y, Vec* guess) const {
    const double phi = cutoff(y);
    if (phi == 0.0) return y;
    const double tp = diag_.t_grid[i], tn = diag_.t_grid[i + 1];
    const Vec x = family_->inverse(tp, y, opt_.inversion_tol, guess);
    if (guess) *guess = x;
    return y + phi * (family_->value(tn, x) - y);
  }

  Mat homotopy_jacobian(std::size_t i, const Vec& y) const {
    const int k = static_cast<int>(y.size());
    const double phi = cutoff(y);
    if (phi == 0.0) return Mat::Identity(k, k);
    const double tp = diag_.t_grid[i], tn = diag_.t_grid[i + 1];
    const Vec x = family_->inverse(tp, y, opt_.inversion_tol);
    const Vec Qv = family_->value(tn, x) - y;
    const Mat DQ = family_->jacobian(tn, x) * family_->jacobian(tp, x).partialPivLu().inverse() - Mat::Identity(k, k);
    return Mat::Identity(k, k) + phi * DQ + Qv * cutoff_gradient(y).transpose();
  }

  /// (Id + tail)(y) = F((F^W)^{-1}(y)).
  Vec tail_apply(const Vec& y, const Vec* guess) const {
    const Vec a = W_.transpose() * y;
    const Vec pre = family_->inverse(1.0, a, opt_.inversion_tol, guess);
    return (*layer_)(W_ * pre + (y - W_ * a));
  }

  Mat tail_jacobian(const Vec& y) const {
    const int M = ambient_dim();
    const Vec a = W_.transpose() * y;
    const Vec pre = family_->inverse(1.0, a, opt_.inversion_tol);
    const Vec x = W_ * pre + (y - W_ * a);
    const Mat DFW = Mat::Identity(M, M) + W_ * (family_->base().jacobian(pre) - Mat::Identity(W_.cols(), W_.cols())) * W_.transpose();
    return layer_->jacobian(x) * DFW.partialPivLu().inverse();
  }

  static double spectral_norm(const Mat& A) { return Eigen::JacobiSVD<Mat>(A).singularValues()[0]; }

  static double min_sym_eig(const Mat& A) {
    const Mat S = 0.5 * (A + A.transpose());
    return Eigen::SelfAdjointEigenSolver<Mat>(S, Eigen::EigenvaluesOnly).eigenvalues()[0];
  }

  /// Sampled Lip(H - Id) and monotonicity for a block given as value / Jacobian callbacks.
  template <class Apply, class Jac>
  void sample_block(const std::vector<Vec>& pts, Apply&& apply, Jac&& jac, BlockReport& rep) const {
    const int n = static_cast<int>(pts.size());
    std::vector<Vec> vals;
    vals.reserve(pts.size());
    double lip = 0.0, alpha = std::numeric_limits<double>::infinity();
    for (const auto& p : pts) {
      vals.push_back(apply(p));
      const Mat D = jac(p);
      lip = std::max(lip, spectral_norm(D - Mat::Identity(D.rows(), D.cols())));
      alpha = std::min(alpha, min_sym_eig(D));
    }
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const Vec d = pts[i] - pts[j];
        const double dn2 = d.squaredNorm();
        if (dn2 < kDegeneratePair * kDegeneratePair) continue;
        const Vec df = vals[i] - vals[j];
        lip = std::max(lip, (df - d).norm() / std::sqrt(dn2));
        alpha = std::min(alpha, df.dot(d) / dn2);
      }
    rep.lip = lip;
    rep.alpha = alpha;
  }

  std::vector<Vec> w_samples(std::uint64_t salt) const {
    const int k = static_cast<int>(W_.cols());
    auto inner = sample_ball(k, diag_.R2, opt_.lip_samples / 2, 0.0, opt_.seed * 7919 + salt);
    auto outer = sample_ball(k, 2.05 * diag_.R2, opt_.lip_samples - opt_.lip_samples / 2, 0.0, opt_.seed * 104729 + salt);
    inner.insert(inner.end(), outer.begin(), outer.end());
    return inner;
  }

  BlockReport check_homotopy(std::size_t i, std::uint64_t salt) const {
    BlockReport rep;
    rep.kind = "homotopy";
    rep.t_from = diag_.t_grid[i];
    rep.t_to = diag_.t_grid[i + 1];
    const auto pts = w_samples(salt);
    sample_block(pts, [&](const Vec& y) { return homotopy_apply(i, y, nullptr); },
                 [&](const Vec& y) { return homotopy_jacobian(i, y); }, rep);
    rep.det_at_zero = homotopy_jacobian(i, Vec::Zero(W_.cols())).determinant();
    return rep;
  }

  void build() {
    const int M = layer_->ambient_dim();
    // 1. finite-rank reduction
    WChoice w;
    try {
      w = choose_W(*layer_, opt_.h.value_or(default_threshold(*layer_, eps_)));
    } catch (const std::exception& e) {
      throw StageError("choose_W", e.what());
    }
    W_ = w.frame;
    tail_ = !w.exact;
    diag_.w_dim = w.dim();
    diag_.h = w.h;
    diag_.tails[0] = w.tail_T1_right;
    diag_.tails[1] = w.tail_T1_left;
    diag_.tails[2] = w.tail_T2_right;
    diag_.tails[3] = w.tail_T2_left;
    family_ = std::make_shared<const HomotopyFamily>(ReducedMap(layer_, W_));
    const int k = w.dim();

    // 2. bilipschitz constants of f
    const double lipN = layer_->G().lipschitz() * layer_->T1().norm() * layer_->T2().norm();
    if (lipN < 1.0) {
      diag_.c0 = 1.0 - lipN;
      diag_.c1 = 1.0 + lipN;
      diag_.constants_certified = true;
    } else {
      const auto& fb = family_->base();
      const auto b = bilipschitz_points([&](const Vec& a) { return fb(a); },
                                        sample_ball(k, 2.0 * r1_, 64, 0.0, opt_.seed + 17));
      diag_.c0 = 0.9 * b.c_lower;
      diag_.c1 = 1.1 * b.c_upper;
    }
    if (!(diag_.c0 > 0.0)) throw StageError("bilipschitz", "lower constant is not positive");
    diag_.R0 = family_->value_at_zero().norm();
    diag_.R1 = diag_.c1 * r1_ + diag_.R0;

    // 3. C2 estimate on B(0, R1)
    {
      const auto& fb = family_->base();
      double sup_f = 0, sup_df = 0, sup_d2 = 0;
      const double hd = 1e-3 * std::max(1.0, diag_.R1);
      const auto pts = sample_ball(k, diag_.R1, 16, 0.0, opt_.seed + 23);
      const auto dirs = sample_ball(k, 1.0, 16, 0.0, opt_.seed + 29);
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const Vec& x = pts[i];
        const Vec v = dirs[i].normalized();
        sup_f = std::max(sup_f, fb(x).norm());
        sup_df = std::max(sup_df, spectral_norm(fb.jacobian(x)));
        sup_d2 = std::max(sup_d2, ((fb(x + hd * v) - 2.0 * fb(x) + fb(x - hd * v)) / (hd * hd)).norm());
      }
      diag_.c2_estimate = sup_f + sup_df + sup_d2;
      if (!std::isfinite(diag_.c2_estimate)) throw StageError("path_blocks", "C2 estimate is not finite");
    }

    // 4. linear part
    try {
      linear_ = linear_path_blocks(family_->Df0(), eps_);
    } catch (const std::exception& e) {
      throw StageError("linear_path_blocks", e.what());
    }
    diag_.rotation_steps = linear_.rotation_steps;
    diag_.stretch_steps = linear_.stretch_steps;
    diag_.linear_reconstruction_error = linear_.reconstruction_error;
    A0_ = linear_.reflect ? LinearOperatorExpr::reflection(Vec::Unit(M, 0)) : LinearOperatorExpr::identity();

    // 5. homotopy grid
    diag_.t1_bound = 2.0 * diag_.c0 * eps_ / (diag_.c1 + diag_.c2_estimate * diag_.R1);
    double R2 = diag_.R1;
    {
      // make sure every f_t(B(0, r1)) sits inside the plateau of the cutoff
      const auto xs = sample_ball(k, r1_, 32, 0.0, opt_.seed + 31);
      for (double t : {0.0, 0.25, 0.5, 0.75, 1.0})
        for (const auto& x : xs) R2 = std::max(R2, 1.02 * family_->value(t, x).norm());
    }
    diag_.R2 = R2;
    const double ratio = diag_.c1 / diag_.c0;
    const double bracket = ratio * (10.0 + R2) + 6.0 / R2 * (ratio + 1.0) * diag_.R0;
    diag_.proof_grid_bound = 2.0 / (eps_ * 0.95 * diag_.t1_bound) * bracket;

    const bool trivial = (family_->Df0() - Mat::Identity(k, k)).norm() == 0.0 && is_affine_zero_residual();
    std::vector<double> grid{0.0};
    if (!trivial) {
      const double t1 = std::min(0.95 * diag_.t1_bound, 0.5);
      grid.push_back(t1);
      const int steps = std::max(1, static_cast<int>(std::ceil((1.0 - t1) / t1)));
      for (int s = 1; s <= steps; ++s) grid.push_back(t1 + (1.0 - t1) * s / steps);
      grid.back() = 1.0;
    }
    diag_.t_grid = grid;
    std::vector<BlockReport> hom;
    if (!trivial) refine_grid(hom);

    // 6. assemble reports in application order
    for (const auto& L : linear_.factors) {
      BlockReport r;
      r.kind = "linear";
      r.lip = spectral_norm(L - Mat::Identity(k, k));
      r.alpha = min_sym_eig(L);
      r.det_at_zero = L.determinant();
      reports_.push_back(r);
    }
    for (std::size_t i = 0; i < linear_.factors.size(); ++i) index_.push_back({0, i});
    for (std::size_t i = 0; i < hom.size(); ++i) {
      reports_.push_back(hom[i]);
      index_.push_back({1, i});
    }
    if (tail_) {
      BlockReport r;
      r.kind = "tail";
      const double Rt = diag_.c1 * r1_ + (*layer_)(Vec::Zero(M)).norm();
      auto pts = sample_ball(M, Rt, opt_.lip_samples, 0.0, opt_.seed + 37);
      if (opt_.verify)
        sample_block(pts, [&](const Vec& y) { return tail_apply(y, nullptr); },
                     [&](const Vec& y) { return tail_jacobian(y); }, r);
      r.det_at_zero = tail_jacobian(Vec::Zero(M)).determinant();
      reports_.push_back(r);
      index_.push_back({2, 0});
    }
  }

  bool is_affine_zero_residual() const {
    // f linear with Df0 = Id and f(0) = 0 means every f_t is the identity
    return family_->value_at_zero().norm() == 0.0 && layer_->T2().rank() == 0;
  }

  void refine_grid(std::vector<BlockReport>& hom) {
    auto& g = diag_.t_grid;
    const double limit = opt_.refine_fraction * eps_;
    std::vector<BlockReport> reps;
    std::vector<bool> ok;
    auto check = [&](std::size_t i) {
      if (!opt_.verify) {
        BlockReport r;
        r.kind = "homotopy";
        r.t_from = g[i];
        r.t_to = g[i + 1];
        return r;
      }
      return check_homotopy(i, static_cast<std::uint64_t>(i) * 31 + 5);
    };
    for (std::size_t i = 0; i + 1 < g.size(); ++i) reps.push_back(check(i));
    for (;;) {
      bool changed = false;
      std::vector<double> ng{g[0]};
      std::vector<int> fresh;
      for (std::size_t i = 0; i + 1 < g.size(); ++i) {
        if (reps[i].lip >= limit) {
          ng.push_back(0.5 * (g[i] + g[i + 1]));
          changed = true;
        }
        ng.push_back(g[i + 1]);
      }
      if (!changed) break;
      if (static_cast<int>(ng.size()) - 1 > opt_.max_blocks)
        throw StageError("path_blocks", "grid size exceeds the configured cap");
      // reuse reports of untouched intervals
      std::vector<BlockReport> nr;
      std::size_t old = 0;
      g.swap(ng);
      for (std::size_t i = 0; i + 1 < g.size(); ++i) {
        while (old + 1 < ng.size() && ng[old + 1] <= g[i]) ++old;
        if (old + 1 < ng.size() && ng[old] == g[i] && ng[old + 1] == g[i + 1]) nr.push_back(reps[old]);
        else nr.push_back(check(i));
      }
      reps.swap(nr);
    }
    hom = reps;
  }

  std::shared_ptr<const NeuralOperatorLayer> layer_;
  double eps_, r1_;
  DecomposeOptions opt_;
  Mat W_;
  bool tail_ = false;
  std::shared_ptr<const HomotopyFamily> family_;
  LinearPath linear_;
  LinearOperatorExpr A0_ = LinearOperatorExpr::identity();
  DecompositionDiagnostics diag_;
  std::vector<BlockReport> reports_;
  std::vector<Index> index_;
};

inline Decomposition decompose(const NeuralOperatorLayer& layer, double epsilon, double r1, const DecomposeOptions& opt = {}) {
  return Decomposition(layer, epsilon, r1, opt);
}

/// (Id + tail) with F = (Id + tail) o F^W, for checks of the peeled factor alone.
inline Map peel_tail(const NeuralOperatorLayer& layer, const Mat& W, double tol = 1e-13) {
  auto L = std::make_shared<const NeuralOperatorLayer>(layer);
  auto fam = std::make_shared<const HomotopyFamily>(ReducedMap(L, W));
  auto Wp = std::make_shared<const Mat>(W);
  return [L, fam, Wp, tol](const Vec& y) {
    const Vec a = Wp->transpose() * y;
    const Vec pre = fam->inverse(1.0, a, tol);
    return Vec((*L)(*Wp * pre + (y - *Wp * a)) - y);
  };
}

struct EpsilonSweepRow {
  double epsilon = 0.0;
  int J = 0;
  double max_lip = 0.0;
};

struct EpsilonSweep {
  std::vector<EpsilonSweepRow> rows;
  double slope = 0.0;  // least-squares slope of log J against log(1/eps)
};

inline EpsilonSweep epsilon_sweep(const NeuralOperatorLayer& layer, const std::vector<double>& eps, double r1,
                                  const DecomposeOptions& opt = {}) {
  EpsilonSweep out;
  std::vector<double> xs, ys;
  for (double e : eps) {
    const auto d = decompose(layer, e, r1, opt);
    EpsilonSweepRow row{e, d.J(), 0.0};
    for (const auto& b : d.blocks()) row.max_lip = std::max(row.max_lip, b.lip);
    out.rows.push_back(row);
    if (d.J() > 0) {
      xs.push_back(std::log(1.0 / e));
      ys.push_back(std::log(static_cast<double>(d.J())));
    }
  }
  if (xs.size() >= 2) {
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sx += xs[i];
      sy += ys[i];
      sxx += xs[i] * xs[i];
      sxy += xs[i] * ys[i];
    }
    out.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  }
  return out;
}

}  // namespace nolab
