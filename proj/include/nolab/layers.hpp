#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nolab/operators.hpp"
#include "nolab/spectral_core.hpp"

namespace nolab {

using Map = std::function<Vec(const Vec&)>;

/// Feed-forward network on R^N: z -> W_L s(... s(W_0 z + c_0) ...) + c_L.
class CoordinateNetwork {
 public:
  CoordinateNetwork() = default;

  CoordinateNetwork(std::vector<Mat> weights, std::vector<Vec> biases, CoordinateActivation act)
      : weights_(std::move(weights)), biases_(std::move(biases)), act_(act) {
    if (weights_.empty()) throw std::invalid_argument("CoordinateNetwork: at least one affine map required");
    if (weights_.size() != biases_.size()) throw DimensionError("CoordinateNetwork: weights/biases count mismatch");
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      if (biases_[l].size() != weights_[l].rows()) throw DimensionError("CoordinateNetwork: bias size");
      if (l > 0 && weights_[l].cols() != weights_[l - 1].rows()) throw DimensionError("CoordinateNetwork: width chain");
    }
    if (weights_.front().cols() != weights_.back().rows())
      throw DimensionError("CoordinateNetwork: input and output widths must agree");
  }

  /// NN = c * Id on R^N.
  static CoordinateNetwork linear(int N, double c) {
    return CoordinateNetwork({c * Mat::Identity(N, N)}, {Vec::Zero(N)}, CoordinateActivation::entrywise({}));
  }

  static CoordinateNetwork zero(int N) { return linear(N, 0.0); }

  int input_dim() const { return static_cast<int>(weights_.front().cols()); }
  int hidden_layers() const { return static_cast<int>(weights_.size()) - 1; }
  std::vector<int> widths() const {
    std::vector<int> w{input_dim()};
    for (const auto& W : weights_) w.push_back(static_cast<int>(W.rows()));
    return w;
  }
  const std::vector<Mat>& weights() const { return weights_; }
  const std::vector<Vec>& biases() const { return biases_; }
  const CoordinateActivation& activation() const { return act_; }

  Vec operator()(const Vec& z) const {
    if (z.size() != input_dim()) throw DimensionError("CoordinateNetwork: input dimension mismatch");
    Vec h = z;
    for (std::size_t l = 0; l + 1 < weights_.size(); ++l) h = act_(weights_[l] * h + biases_[l]);
    return weights_.back() * h + biases_.back();
  }

  Mat jacobian(const Vec& z) const {
    Vec h = z;
    Mat J = Mat::Identity(z.size(), z.size());
    for (std::size_t l = 0; l + 1 < weights_.size(); ++l) {
      const Vec pre = weights_[l] * h + biases_[l];
      J = act_.jacobian(pre) * weights_[l] * J;
      h = act_(pre);
    }
    return weights_.back() * J;
  }

  /// Product of layer spectral norms times activation Lipschitz constants.
  /// For activations that are only locally Lipschitz the bound holds on the ball of radius `input_radius`.
  double spectral_bound(double input_radius = 0.0) const {
    double bound = 1.0;
    double rho = input_radius;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      const double wn = spectral_norm(weights_[l]);
      bound *= wn;
      if (l + 1 < weights_.size()) {
        const double pre = wn * rho + biases_[l].norm();
        bound *= act_.lipschitz(pre);
        rho = act_.globally_lipschitz() ? act_.lipschitz() * pre : pre * pre * pre;
      }
    }
    return bound;
  }

  bool globally_lipschitz() const { return hidden_layers() == 0 || act_.globally_lipschitz(); }

  static double spectral_norm(const Mat& A) {
    if (A.size() == 0) return 0.0;
    Eigen::JacobiSVD<Mat> svd(A);
    return svd.singularValues()[0];
  }

 private:
  std::vector<Mat> weights_;
  std::vector<Vec> biases_;
  CoordinateActivation act_;
};

/// Seeded network with the given widths, rescaled so spectral_bound equals `target`.
inline CoordinateNetwork random_network(const std::vector<int>& widths, CoordinateActivation act, double target,
                                        std::uint64_t seed, double bias_scale = 0.1) {
  if (widths.size() < 2 || widths.front() != widths.back())
    throw std::invalid_argument("random_network: widths must start and end with N");
  if (!act.globally_lipschitz()) throw std::invalid_argument("random_network: activation needs a global bound");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<Mat> Ws;
  std::vector<Vec> bs;
  const std::size_t L = widths.size() - 1;
  const double per_layer = std::pow(target / std::pow(act.lipschitz(), static_cast<double>(L - 1)), 1.0 / L);
  for (std::size_t l = 0; l < L; ++l) {
    Mat W(widths[l + 1], widths[l]);
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = normal(rng);
    W *= per_layer / CoordinateNetwork::spectral_norm(W);
    Vec b(widths[l + 1]);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = bias_scale * normal(rng);
    Ws.push_back(std::move(W));
    bs.push_back(std::move(b));
  }
  return CoordinateNetwork(std::move(Ws), std::move(bs), act);
}

/// The nonlinear middle part of a layer, X -> X, with a recorded Lipschitz bound.
class Nonlinearity {
 public:
  enum class Kind { zero, nemytskii, coordinate_net, affine_contraction };

  static Nonlinearity zero() { return Nonlinearity(Kind::zero); }

  /// u -> scale * sigma o u, evaluated on the grid of `space`.
  static Nonlinearity nemytskii(std::shared_ptr<const Space> space, PointwiseActivation sigma, double scale = 1.0) {
    if (!space || !space->has_grid()) throw std::invalid_argument("nemytskii: requires a space with a grid");
    Nonlinearity g(Kind::nemytskii);
    g.space_ = std::move(space);
    g.sigma_ = sigma;
    g.scale_ = scale;
    g.lip_ = std::abs(scale) * sigma.lipschitz();
    return g;
  }

  /// u -> decode(NN(encode(u, N))).
  static Nonlinearity coordinate_net(CoordinateNetwork net, double input_radius = 0.0) {
    Nonlinearity g(Kind::coordinate_net);
    g.lip_ = net.spectral_bound(input_radius);
    g.net_ = std::move(net);
    return g;
  }

  /// u -> A u_head + b on a leading block.
  static Nonlinearity affine_contraction(Mat A, Vec b) {
    if (A.rows() != A.cols() || b.size() != A.rows()) throw DimensionError("affine_contraction: shape");
    Nonlinearity g(Kind::affine_contraction);
    g.lip_ = CoordinateNetwork::spectral_norm(A);
    g.A_ = std::move(A);
    g.b_ = std::move(b);
    return g;
  }

  Kind kind() const { return kind_; }
  double lipschitz() const { return lip_; }
  const PointwiseActivation& sigma() const { return sigma_; }
  double scale() const { return scale_; }
  const CoordinateNetwork& network() const { return net_; }
  const Mat& affine_matrix() const { return A_; }
  const Vec& affine_offset() const { return b_; }
  const std::shared_ptr<const Space>& space() const { return space_; }

  Vec operator()(const Vec& u) const {
    switch (kind_) {
      case Kind::zero: return Vec::Zero(u.size());
      case Kind::nemytskii: return scale_ * nemytskii_apply(*space_, sigma_, u);
      case Kind::coordinate_net: {
        const int N = net_.input_dim();
        return decode(net_(encode(u, N)), static_cast<int>(u.size()));
      }
      case Kind::affine_contraction: {
        Vec out = Vec::Zero(u.size());
        const auto d = A_.rows();
        out.head(d) = A_ * u.head(d) + b_;
        return out;
      }
    }
    throw std::logic_error("Nonlinearity: unknown kind");
  }

  /// Derivative at u as an M x M matrix.
  Mat jacobian(const Vec& u) const {
    const auto M = u.size();
    Mat J = Mat::Zero(M, M);
    switch (kind_) {
      case Kind::zero: break;
      case Kind::nemytskii: {
        const Mat& B = space_->basis_matrix();
        const Vec g = B * u;
        Vec w(g.size());
        for (Eigen::Index i = 0; i < g.size(); ++i) w[i] = space_->weights()[i] * sigma_.derivative(g[i]);
        J = scale_ * (B.transpose() * w.asDiagonal() * B);
        break;
      }
      case Kind::coordinate_net: {
        const int N = net_.input_dim();
        J.topLeftCorner(N, N) = net_.jacobian(u.head(N));
        break;
      }
      case Kind::affine_contraction: J.topLeftCorner(A_.rows(), A_.cols()) = A_; break;
    }
    return J;
  }

  std::string name() const {
    switch (kind_) {
      case Kind::zero: return "zero";
      case Kind::nemytskii: return "nemytskii";
      case Kind::coordinate_net: return "coordinate_net";
      case Kind::affine_contraction: return "affine_contraction";
    }
    return "unknown";
  }

 private:
  explicit Nonlinearity(Kind k) : kind_(k) {}

  Kind kind_;
  double lip_ = 0.0;
  std::shared_ptr<const Space> space_;
  PointwiseActivation sigma_;
  double scale_ = 1.0;
  CoordinateNetwork net_;
  Mat A_;
  Vec b_;
};

/// x -> x + T2 G(T1 x).
class NeuralOperatorLayer {
 public:
  NeuralOperatorLayer() = default;

  NeuralOperatorLayer(FiniteRankOperator T1, FiniteRankOperator T2, Nonlinearity G)
      : T1_(std::move(T1)), T2_(std::move(T2)), G_(std::move(G)) {
    if (T1_.ambient_dim() != T2_.ambient_dim()) throw DimensionError("NeuralOperatorLayer: T1/T2 dimension mismatch");
  }

  static NeuralOperatorLayer identity(int M) {
    return NeuralOperatorLayer(FiniteRankOperator::zero(M), FiniteRankOperator::zero(M), Nonlinearity::zero());
  }

  int ambient_dim() const { return T1_.ambient_dim(); }
  const FiniteRankOperator& T1() const { return T1_; }
  const FiniteRankOperator& T2() const { return T2_; }
  const Nonlinearity& G() const { return G_; }

  /// The residual part T2 G(T1 x).
  Vec residual(const Vec& x) const {
    if (x.size() != ambient_dim()) throw DimensionError("NeuralOperatorLayer: dimension mismatch");
    if (T2_.rank() == 0 || G_.kind() == Nonlinearity::Kind::zero) return Vec::Zero(x.size());
    return T2_.apply(G_(T1_.apply(x)));
  }

  Vec operator()(const Vec& x) const { return x + residual(x); }

  Mat jacobian(const Vec& x) const {
    const auto M = x.size();
    Mat J = Mat::Identity(M, M);
    if (T2_.rank() == 0 || G_.kind() == Nonlinearity::Kind::zero) return J;
    J += T2_.matrix() * G_.jacobian(T1_.apply(x)) * T1_.matrix();
    return J;
  }

  /// Lipschitz bound of the whole layer: 1 + Lip(G) |T1| |T2|.
  double lipschitz_upper() const { return 1.0 + G_.lipschitz() * T1_.norm() * T2_.norm(); }

  Map as_map() const {
    auto self = std::make_shared<NeuralOperatorLayer>(*this);
    return [self](const Vec& x) { return (*self)(x); };
  }

 private:
  FiniteRankOperator T1_;
  FiniteRankOperator T2_;
  Nonlinearity G_;
};

/// One stage x -> A(sigma(F(x))).
struct OperatorStage {
  LinearOperatorExpr A = LinearOperatorExpr::identity();
  PointwiseActivation sigma;
  NeuralOperatorLayer F;
};

/// Composition of stages, applied first to last.
class GeneralizedNeuralOperator {
 public:
  GeneralizedNeuralOperator(std::shared_ptr<const Space> space, std::vector<OperatorStage> stages)
      : space_(std::move(space)), stages_(std::move(stages)) {}

  const std::vector<OperatorStage>& stages() const { return stages_; }

  Vec operator()(const Vec& x) const {
    Vec y = x;
    for (const auto& s : stages_) {
      y = s.F(y);
      if (s.sigma.kind != PointwiseActivation::Kind::identity) {
        if (!space_) throw std::logic_error("GeneralizedNeuralOperator: activation needs a grid");
        y = nemytskii_apply(*space_, s.sigma, y);
      }
      y = s.A.apply(y);
    }
    return y;
  }

 private:
  std::shared_ptr<const Space> space_;
  std::vector<OperatorStage> stages_;
};

/// Composition of blocks x -> x + decode(NN_t(encode(x, N))), first block applied first.
class ResidualChain {
 public:
  ResidualChain() = default;
  ResidualChain(int N, std::vector<CoordinateNetwork> blocks) : N_(N), blocks_(std::move(blocks)) {
    for (const auto& b : blocks_)
      if (b.input_dim() != N_) throw DimensionError("ResidualChain: block width differs from N");
  }

  int N() const { return N_; }
  const std::vector<CoordinateNetwork>& blocks() const { return blocks_; }
  std::size_t size() const { return blocks_.size(); }

  Vec block_residual(std::size_t t, const Vec& x) const {
    if (x.size() < N_) throw DimensionError("ResidualChain: ambient dimension smaller than N");
    return decode(blocks_.at(t)(x.head(N_)), static_cast<int>(x.size()));
  }

  Vec apply_block(std::size_t t, const Vec& x) const { return x + block_residual(t, x); }

  Vec operator()(const Vec& x) const {
    Vec y = x;
    for (std::size_t t = 0; t < blocks_.size(); ++t) y = apply_block(t, y);
    return y;
  }

 private:
  int N_ = 0;
  std::vector<CoordinateNetwork> blocks_;
};

/// A residual chain whose blocks are certified contractions with constant delta.
class InvertibleResidualChain {
 public:
  /// `ball_radius` is required when an activation is only locally Lipschitz.
  InvertibleResidualChain(ResidualChain chain, double delta, std::optional<double> ball_radius = std::nullopt)
      : chain_(std::move(chain)), delta_(delta), ball_radius_(ball_radius) {
    if (!(delta > 0.0 && delta < 1.0))
      throw std::invalid_argument("InvertibleResidualChain: delta must lie in (0,1), got " + std::to_string(delta));
    for (std::size_t t = 0; t < chain_.size(); ++t) {
      const auto& b = chain_.blocks()[t];
      if (!b.globally_lipschitz() && !ball_radius_)
        throw std::invalid_argument("InvertibleResidualChain: block " + std::to_string(t) +
                                    " is only locally Lipschitz and no ball radius was given");
      const double bound = b.spectral_bound(ball_radius_.value_or(0.0));
      if (bound > delta_ * (1.0 + 1e-12))
        throw std::invalid_argument("InvertibleResidualChain: block " + std::to_string(t) + " bound " +
                                    std::to_string(bound) + " exceeds delta " + std::to_string(delta_));
      bounds_.push_back(bound);
    }
  }

  const ResidualChain& chain() const { return chain_; }
  double delta() const { return delta_; }
  const std::vector<double>& block_bounds() const { return bounds_; }
  std::optional<double> ball_radius() const { return ball_radius_; }
  Vec operator()(const Vec& x) const { return chain_(x); }

 private:
  ResidualChain chain_;
  double delta_;
  std::optional<double> ball_radius_;
  std::vector<double> bounds_;
};

/// Kernel coefficient K_{p,q}: a (d_out x d_in) matrix coupling basis p of the input to basis q of the output.
struct KernelEntry {
  int p = 0;
  int q = 0;
  Mat K;
};

/// One layer of a kernel neural operator acting on channel functions.
struct RnoLayer {
  Mat W;                             // local weights, d_out x d_in
  std::vector<KernelEntry> kernel;   // sparse K_{p,q}
  Vec b;                             // constant bias per output channel
  bool activate = true;
};

/// Block u -> u + G(u), G built from RNO layers. Channels are stored as coefficient columns.
class RnoBlock {
 public:
  RnoBlock(std::shared_ptr<const Space> space, std::vector<RnoLayer> layers, CoordinateActivation act)
      : space_(std::move(space)), layers_(std::move(layers)), act_(act) {}

  const std::vector<RnoLayer>& layers() const { return layers_; }

  /// G(u) for a single input channel.
  Vec residual(const Vec& u) const {
    const auto M = u.size();
    Mat U = u;  // M x 1
    for (const auto& L : layers_) {
      Mat next = U * L.W.transpose();
      for (const auto& e : L.kernel) {
        const Vec coeffs = U.row(e.p).transpose();  // <u_j, phi_p> over input channels
        next.row(e.q) += (e.K * coeffs).transpose();
      }
      next.row(0) += L.b.transpose();  // constant function has coefficient 1 on basis 0
      if (L.activate) next = activate(next);
      U = std::move(next);
    }
    if (U.cols() != 1) throw DimensionError("RnoBlock: output must have one channel");
    return U.col(0).head(M);
  }

  Vec operator()(const Vec& u) const { return u + residual(u); }

  bool is_zero() const {
    for (const auto& L : layers_) {
      if (L.W.size() && L.W.cwiseAbs().maxCoeff() > 0) return false;
      if (L.b.size() && L.b.cwiseAbs().maxCoeff() > 0) return false;
      for (const auto& e : L.kernel)
        if (e.K.size() && e.K.cwiseAbs().maxCoeff() > 0) return false;
    }
    return true;
  }

 private:
  Mat activate(const Mat& U) const {
    // pointwise in the domain variable, acting on the channel vector at each grid node
    const Mat& B = space_->basis_matrix();
    Mat G = B * U;
    for (Eigen::Index i = 0; i < G.rows(); ++i) G.row(i) = act_(G.row(i).transpose()).transpose();
    return B.transpose() * space_->weights().asDiagonal() * G;
  }

  std::shared_ptr<const Space> space_;
  std::vector<RnoLayer> layers_;
  CoordinateActivation act_;
};

/// Rewrite each block of a residual chain in kernel-coefficient form.
/// Hidden layers carry two extra constant channels (value sigma(1)) so that a non-constant output bias
/// can be routed through the final kernel.
inline std::vector<RnoBlock> resnet_to_rno(const ResidualChain& chain, std::shared_ptr<const Space> space) {
  if (!space || !space->includes_constant())
    throw std::invalid_argument("resnet_to_rno: basis must contain the constant function at index 0");
  const int N = chain.N();
  if (N > space->dim()) throw DimensionError("resnet_to_rno: N exceeds ambient dimension");
  std::vector<RnoBlock> out;
  for (const auto& net : chain.blocks()) {
    const auto& Ws = net.weights();
    const auto& bs = net.biases();
    const auto L = Ws.size() - 1;  // hidden layers
    const auto& act = net.activation();
    std::vector<RnoLayer> layers;
    if (L == 0) {
      // single affine map: only a constant-function bias is expressible
      if (bs[0].size() > 1 && bs[0].tail(bs[0].size() - 1).cwiseAbs().maxCoeff() > 0)
        throw std::invalid_argument("resnet_to_rno: affine block with non-constant bias has no kernel form");
      RnoLayer lay;
      lay.W = Mat::Zero(1, 1);
      lay.b = Vec::Constant(1, bs[0].size() ? bs[0][0] : 0.0);
      lay.activate = false;
      for (int p = 0; p < N; ++p)
        for (int q = 0; q < N; ++q)
          if (Ws[0](q, p) != 0.0) lay.kernel.push_back({p, q, Mat::Constant(1, 1, Ws[0](q, p))});
      out.emplace_back(space, std::vector<RnoLayer>{lay}, act);
      continue;
    }
    const double kappa = act(Vec::Constant(2, 1.0))[0];
    if (kappa == 0.0) throw std::invalid_argument("resnet_to_rno: activation vanishes at 1");
    // first layer: Ẽ folded into K_{p,0}
    {
      const auto w = Ws[0].rows();
      RnoLayer lay;
      lay.W = Mat::Zero(w + 2, 1);
      lay.b = Vec(w + 2);
      lay.b << 1.0, 1.0, bs[0];
      for (int p = 0; p < N; ++p) {
        Mat K = Mat::Zero(w + 2, 1);
        K.bottomRows(w) = Ws[0].col(p);
        if (K.cwiseAbs().maxCoeff() > 0) lay.kernel.push_back({p, 0, std::move(K)});
      }
      layers.push_back(std::move(lay));
    }
    for (std::size_t l = 1; l < L; ++l) {
      const auto wi = Ws[l].cols(), wo = Ws[l].rows();
      RnoLayer lay;
      lay.W = Mat::Zero(wo + 2, wi + 2);
      lay.W.bottomRightCorner(wo, wi) = Ws[l];
      lay.b = Vec(wo + 2);
      lay.b << 1.0, 1.0, bs[l];
      layers.push_back(std::move(lay));
    }
    // last layer: D̃ folded into K_{0,q}; the bias rides on the constant channels
    {
      const auto wi = Ws[L].cols();
      RnoLayer lay;
      lay.W = Mat::Zero(1, wi + 2);
      lay.b = Vec::Zero(1);
      lay.activate = false;
      for (int q = 0; q < N; ++q) {
        Mat K = Mat::Zero(1, wi + 2);
        K(0, 0) = 0.5 * bs[L][q] / kappa;
        K(0, 1) = 0.5 * bs[L][q] / kappa;
        K.rightCols(wi) = Ws[L].row(q);
        if (K.cwiseAbs().maxCoeff() > 0) lay.kernel.push_back({0, q, std::move(K)});
      }
      layers.push_back(std::move(lay));
    }
    out.emplace_back(space, std::move(layers), act);
  }
  return out;
}

/// Central difference (F(x + h v) - F(x - h v)) / 2h.
inline Vec jvp(const Map& F, const Vec& x, const Vec& v, double h = 1e-5) {
  if (!(h > 0)) throw std::invalid_argument("jvp: step must be positive");
  return (F(x + h * v) - F(x - h * v)) / (2.0 * h);
}

/// Jacobian of P_d F restricted to the prefix d, assembled column by column.
inline Mat fd_jacobian(const Map& F, const Vec& x, int d, double h = 1e-5) {
  Mat J(d, d);
  for (int j = 0; j < d; ++j) {
    const Vec col = jvp(F, x, Vec::Unit(x.size(), j), h);
    J.col(j) = col.head(d);
  }
  return J;
}

enum class GKind { nemytskii_tanh, nemytskii_leaky, coordinate_net, affine };

inline std::string to_string(GKind k) {
  switch (k) {
    case GKind::nemytskii_tanh: return "nemytskii_tanh";
    case GKind::nemytskii_leaky: return "nemytskii_leaky";
    case GKind::coordinate_net: return "coordinate_net";
    case GKind::affine: return "affine";
  }
  return "unknown";
}

inline GKind gkind_from_string(const std::string& s) {
  if (s == "nemytskii_tanh") return GKind::nemytskii_tanh;
  if (s == "nemytskii_leaky") return GKind::nemytskii_leaky;
  if (s == "coordinate_net") return GKind::coordinate_net;
  if (s == "affine") return GKind::affine;
  throw std::invalid_argument("unknown nonlinearity kind: " + s);
}

struct LayerSpec {
  int rank = 8;
  double decay = 2.0;   // omega_p = p^-decay
  double lip_G = 0.4;
  GKind g = GKind::nemytskii_tanh;
  double t1_norm = 1.0;
  double t2_norm = 1.0;
  double psi_smoothness = 1.0;  // coefficient damping of the random input vectors
  int net_width_factor = 4;     // hidden width = factor * N for coordinate nets
};

/// Seeded test layer. T1 and T2 read along random smooth orthonormal families and write along signed
/// basis vectors e_0..e_{r-1}; singular values decay as p^-decay scaled to the requested norms.
inline NeuralOperatorLayer make_layer(std::uint64_t seed, const LayerSpec& spec, std::shared_ptr<const Space> space) {
  const int M = space->dim();
  if (spec.rank > M) throw std::invalid_argument("make_layer: rank exceeds ambient dimension");
  if (spec.lip_G < 0) throw std::invalid_argument("make_layer: negative Lipschitz target");
  if (spec.lip_G == 0.0 || spec.rank == 0) return NeuralOperatorLayer::identity(M);
  const int r = spec.rank;
  Vec om(r);
  for (int p = 0; p < r; ++p) om[p] = std::pow(p + 1.0, -spec.decay);
  std::mt19937_64 rng(seed);
  auto signed_prefix = [&](int cols) {
    Mat P = Mat::Zero(M, cols);
    std::bernoulli_distribution coin(0.5);
    for (int j = 0; j < cols; ++j) P(j, j) = coin(rng) ? 1.0 : -1.0;
    return P;
  };
  const Mat phi1 = signed_prefix(r);
  const Mat phi2 = signed_prefix(r);
  const Mat psi1 = random_orthonormal(M, r, spec.psi_smoothness, rng());
  const Mat psi2 = random_orthonormal(M, r, spec.psi_smoothness, rng());
  FiniteRankOperator T1(om * spec.t1_norm, psi1, phi1);
  FiniteRankOperator T2(om * spec.t2_norm, psi2, phi2);
  Nonlinearity G = Nonlinearity::zero();
  switch (spec.g) {
    case GKind::nemytskii_tanh: {
      const auto sigma = PointwiseActivation::smooth_tanh(0.0, 1.0);
      G = Nonlinearity::nemytskii(space, sigma, spec.lip_G / sigma.lipschitz());
      break;
    }
    case GKind::nemytskii_leaky: {
      const auto sigma = PointwiseActivation::leaky_relu(0.2);
      G = Nonlinearity::nemytskii(space, sigma, spec.lip_G / sigma.lipschitz());
      break;
    }
    case GKind::coordinate_net: {
      const int N = r;
      const int w = spec.net_width_factor * N;
      G = Nonlinearity::coordinate_net(
          random_network({N, w, w, N}, CoordinateActivation::entrywise(PointwiseActivation::smooth_tanh(0.0, 1.0)),
                         spec.lip_G, rng()));
      break;
    }
    case GKind::affine: {
      std::normal_distribution<double> normal;
      Mat A(r, r);
      for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = normal(rng);
      A *= spec.lip_G / CoordinateNetwork::spectral_norm(A);
      Vec b(r);
      for (int i = 0; i < r; ++i) b[i] = 0.1 * normal(rng);
      G = Nonlinearity::affine_contraction(A, b);
      break;
    }
  }
  return NeuralOperatorLayer(std::move(T1), std::move(T2), std::move(G));
}

}  // namespace nolab
