#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nolab/layers.hpp"
#include "nolab/monotone.hpp"

namespace nolab {

struct NonConvergence : std::runtime_error {
  double last_residual;
  NonConvergence(const std::string& what, double r) : std::runtime_error(what), last_residual(r) {}
};

struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BlockTrace {
  int iterations = 0;
  std::vector<double> residuals;  // |x_{n+1} - x_n|
  std::vector<double> ratios;     // residual quotients
  int a_priori_bound = 0;
  double final_residual = 0.0;    // |block(x) - y|

  double median_ratio() const {
    if (ratios.empty()) return 0.0;
    std::vector<double> r = ratios;
    std::nth_element(r.begin(), r.begin() + r.size() / 2, r.end());
    return r[r.size() / 2];
  }

  bool strictly_decreasing_after_first() const {
    for (std::size_t i = 2; i < residuals.size(); ++i)
      if (!(residuals[i] < residuals[i - 1])) return false;
    return true;
  }
};

struct InversionTrace {
  std::vector<BlockTrace> blocks;  // in the order they were inverted (last block first)
  double tol = 0.0;
  int max_iter = 0;
};

enum class StartPoint { y, zero };

struct FixedPointOptions {
  double tol = 1e-10;
  int max_iter = 10000;
  StartPoint start = StartPoint::y;
};

/// ceil(log(tol (1 - delta) / |x1 - x0|) / log delta) + 1, at least 1.
inline int a_priori_iterations(double delta, double tol, double first_step) {
  if (first_step <= tol * (1.0 - delta)) return 1;
  return std::max(1, static_cast<int>(std::ceil(std::log(tol * (1.0 - delta) / first_step) / std::log(delta))) + 1);
}

/// Solve x + D_N NN(E_N x) = y by x <- y - D_N NN(E_N x).
inline Vec block_fixed_point(const CoordinateNetwork& net, double delta, const Vec& y, const FixedPointOptions& opt,
                             BlockTrace* trace = nullptr) {
  if (!(delta < 1.0)) throw std::invalid_argument("block_fixed_point: block is not a certified contraction");
  const int N = net.input_dim();
  if (y.size() < N) throw DimensionError("block_fixed_point: ambient dimension smaller than N");
  BlockTrace tr;
  Vec x = opt.start == StartPoint::y ? y : Vec::Zero(y.size());
  auto step = [&](const Vec& z) {
    Vec out = y;
    out.head(N) -= net(z.head(N));
    return out;
  };
  Vec next;
  for (int n = 0; n < opt.max_iter; ++n) {
    next = step(x);
    const double r = (next - x).norm();
    if (!tr.residuals.empty() && tr.residuals.back() > 0) tr.ratios.push_back(r / tr.residuals.back());
    tr.residuals.push_back(r);
    if (n == 0) tr.a_priori_bound = a_priori_iterations(std::max(delta, 1e-300), opt.tol, r);
    x = std::move(next);
    tr.iterations = n + 1;
    if (r <= opt.tol) {
      tr.final_residual = (x - step(x)).norm();
      if (trace) *trace = std::move(tr);
      return x;
    }
  }
  const double last = tr.residuals.empty() ? 0.0 : tr.residuals.back();
  if (trace) *trace = std::move(tr);
  throw NonConvergence("block_fixed_point: max_iter exceeded", last);
}

/// Radius bookkeeping for the ball the inverse is defined on.
struct DomainOptions {
  std::optional<double> input_radius;  // R: inputs of G o A are taken from B(0, R)
  bool project = false;                // project onto the ball instead of failing
};

inline Vec inverse_of_linear(const LinearOperatorExpr& A, const Vec& y) {
  switch (A.kind()) {
    case LinearOperatorExpr::Kind::identity: return y;
    case LinearOperatorExpr::Kind::reflection: return A.apply(y);
    case LinearOperatorExpr::Kind::scalar:
      if (A.scalar_value() == 0.0) throw std::invalid_argument("chain_inverse: singular scalar");
      return y / A.scalar_value();
    default: throw std::invalid_argument("chain_inverse: A must be the identity or a reflection");
  }
}

/// x with chain(A(x)) = y: block inverses in reverse order, then A^{-1}.
inline Vec chain_inverse(const ResidualChain& chain, const std::vector<double>& deltas, const LinearOperatorExpr& A,
                         const Vec& y, const FixedPointOptions& opt = {}, InversionTrace* trace = nullptr,
                         const DomainOptions& dom = {}) {
  if (deltas.size() != chain.size()) throw std::invalid_argument("chain_inverse: one certificate per block required");
  for (double d : deltas)
    if (!(d < 1.0)) throw std::invalid_argument("chain_inverse: block certificate is not a contraction");
  InversionTrace tr;
  tr.tol = opt.tol;
  tr.max_iter = opt.max_iter;
  // radius of the image of B(0, R) after the first t blocks
  std::vector<double> gamma;
  if (dom.input_radius) {
    gamma.push_back(*dom.input_radius);
    for (std::size_t t = 0; t < chain.size(); ++t) {
      const double b0 = chain.blocks()[t](Vec::Zero(chain.N())).norm();
      gamma.push_back((1.0 + deltas[t]) * gamma.back() + b0);
    }
  }
  Vec x = y;
  if (!gamma.empty() && x.norm() > gamma.back() * (1 + 1e-12) + opt.tol) {
    if (!dom.project) throw DomainError("chain_inverse: y lies outside the image ball");
    x *= gamma.back() / x.norm();
  }
  for (std::size_t k = chain.size(); k-- > 0;) {
    BlockTrace bt;
    x = block_fixed_point(chain.blocks()[k], deltas[k], x, opt, &bt);
    tr.blocks.push_back(std::move(bt));
    if (!gamma.empty() && x.norm() > gamma[k] * (1 + 1e-12) + opt.tol) {
      if (!dom.project)
        throw DomainError("chain_inverse: iterate left the ball after inverting block " + std::to_string(k));
      x *= gamma[k] / x.norm();
    }
  }
  if (trace) *trace = std::move(tr);
  return inverse_of_linear(A, x);
}

inline Vec chain_inverse(const InvertibleResidualChain& chain, const LinearOperatorExpr& A, const Vec& y,
                         const FixedPointOptions& opt = {}, InversionTrace* trace = nullptr,
                         const DomainOptions& dom = {}) {
  return chain_inverse(chain.chain(), chain.block_bounds(), A, y, opt, trace, dom);
}

struct GlobalInverseReport {
  double roundtrip_inverse_after_forward = 0.0;  // max |F^-1(F(x)) - x|
  double roundtrip_forward_after_inverse = 0.0;  // max |F(F^-1(y)) - y|
  std::vector<double> block_alpha;               // sampled monotonicity of each block
  double delta = 0.0;
  int max_iterations = 0;
};

inline GlobalInverseReport global_inverse_check(const InvertibleResidualChain& chain, int M, double r, int n,
                                                std::uint64_t seed, const FixedPointOptions& opt = {}) {
  if (chain.ball_radius() && r > *chain.ball_radius())
    throw std::invalid_argument("global_inverse_check: test ball exceeds the certified radius");
  for (const auto& b : chain.chain().blocks())
    if (!b.globally_lipschitz() && !chain.ball_radius())
      throw std::invalid_argument("global_inverse_check: locally Lipschitz chain without a ball certificate");
  GlobalInverseReport rep;
  rep.delta = chain.delta();
  const auto id = LinearOperatorExpr::identity();
  const auto xs = sample_ball(M, r, n, 0.0, seed);
  const auto ys = sample_ball(M, r, n, 0.0, seed + 1);
  for (const auto& x : xs) {
    InversionTrace tr;
    const Vec back = chain_inverse(chain, id, chain(x), opt, &tr);
    rep.roundtrip_inverse_after_forward = std::max(rep.roundtrip_inverse_after_forward, (back - x).norm());
    for (const auto& b : tr.blocks) rep.max_iterations = std::max(rep.max_iterations, b.iterations);
  }
  for (const auto& y : ys) {
    const Vec x = chain_inverse(chain, id, y, opt);
    rep.roundtrip_forward_after_inverse = std::max(rep.roundtrip_forward_after_inverse, (chain(x) - y).norm());
  }
  for (std::size_t t = 0; t < chain.chain().size(); ++t) {
    const auto blk = [&, t](const Vec& x) { return chain.chain().apply_block(t, x); };
    rep.block_alpha.push_back(pairwise_alpha_points(blk, xs).alpha);
  }
  return rep;
}

}  // namespace nolab
