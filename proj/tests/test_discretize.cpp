#include <gtest/gtest.h>

#include <sstream>

#include "nolab/discretize.hpp"

using namespace nolab;

namespace {

std::shared_ptr<const Space> fourier(int M) { return std::make_shared<const Space>(Space::fourier(M)); }

}  // namespace

TEST(Discretize, LinearizeExamples) {
  const int M = 10, d = 4;
  const auto xs = sample_ball_prefix(M, d, 1.0, 10, 1.0, 1);
  const auto Id = linearize([](const Vec& x) { return x; }, d);
  const auto R = LinearOperatorExpr::reflection(Vec::Unit(M, 0));
  const auto RV = linearize([&](const Vec& x) { return R.apply(x); }, d);
  const auto X = fourier(M);
  const NeuralOperatorLayer L(FiniteRankOperator::rank_one(1.0, X->unit(0), X->unit(1)),
                              FiniteRankOperator::rank_one(1.0, X->unit(2), X->unit(5)),
                              Nonlinearity::nemytskii(X, PointwiseActivation::smooth_tanh(0, 0.4)));
  const auto LV = linearize(L.as_map(), 3);
  for (const auto& x : xs) {
    EXPECT_EQ(Id(x), x);
    EXPECT_EQ(RV(x), R.apply(x));
    EXPECT_EQ(LV(x), project(x, 3));
    EXPECT_EQ(LV(x).tail(M - 3).norm(), 0.0);
  }
}

TEST(Discretize, FunctorErrorExamples) {
  const int M = 32;
  const auto X = fourier(M);
  EXPECT_EQ(functor_A_error([](const Vec& x) { return x; }, M, 8, 1.0, 20, 1), 0.0);
  const auto L = make_layer(5, {.rank = 6, .decay = 1.0, .lip_G = 0.4}, X);
  EXPECT_LE(functor_A_error(L.as_map(), M, 6, 1.0, 20, 1), 1e-12);
  EXPECT_GT(functor_A_error(L.as_map(), M, 5, 1.0, 20, 1), 1e-6);
}

TEST(Discretize, FunctorErrorBelowTailBound) {
  const int M = 64;
  const auto X = fourier(M);
  const LayerSpec spec{.rank = 40, .decay = 2.0, .lip_G = 0.4};
  const auto L = make_layer(7, spec, X);
  const auto xs = sample_ball(M, 1.0, 30, 1.0, 2);
  double prev = 1e300;
  for (int d : {4, 8, 16, 32}) {
    const double e = functor_A_error(L.as_map(), d, xs);
    // |(Id - P_d) T2 y| <= omega_{d+1} |y|, |y| = |G(T1 x)| <= Lip(G) |T1| r
    const double tail = std::pow(d + 1.0, -spec.decay) * spec.lip_G * 1.0;
    EXPECT_LE(e, tail);
    EXPECT_LE(e, prev);
    prev = e;
  }
}

TEST(Discretize, WeakErrorZeroForProbesInV) {
  const int M = 24, d = 8;
  const auto L = make_layer(3, {.rank = 20, .decay = 1.0, .lip_G = 0.4}, fourier(M));
  const auto xs = sample_ball(M, 1.0, 20, 1.0, 5);
  std::vector<Vec> inV{Vec::Unit(M, 0), Vec::Unit(M, d - 1), project(Vec::Ones(M), d)};
  EXPECT_EQ(weak_error(L.as_map(), d, inV, xs), 0.0);
  EXPECT_EQ(weak_error([](const Vec& x) { return x; }, d, default_probes(M), xs), 0.0);
}

TEST(Discretize, WeakErrorDecaysForLeakyLayer) {
  const int M = 64;
  const auto L = make_layer(2, {.rank = 64, .decay = 1.0, .lip_G = 0.4, .g = GKind::nemytskii_leaky}, fourier(M));
  const auto xs = sample_ball(M, 1.0, 20, 1.0, 5);
  double first = 0, last = 0;
  for (int d : {4, 8, 16, 32, 48}) {
    const double e = weak_error(L.as_map(), d, {Vec::Unit(M, d)}, xs);
    if (d == 4) first = e;
    last = e;
  }
  EXPECT_LT(last, first);
  EXPECT_LT(last, 1e-3);
}

TEST(Discretize, ConvergenceScan) {
  const int M = 32;
  auto rep = convergence_scan([](const Vec& x) { return x; }, M, {4, 8, 16}, 1.0, 10, 1);
  for (const auto& r : rep.rows) {
    EXPECT_EQ(r.functor_a_error, 0.0);
    EXPECT_EQ(r.weak_error, 0.0);
    EXPECT_NEAR(r.alpha_hat, 1.0, 1e-14);
  }
  const auto L = make_layer(8, {.rank = 32, .decay = 2.0, .lip_G = 0.45}, fourier(M));
  rep = convergence_scan(L.as_map(), M, {4, 8, 16, 24}, 1.0, 24, 3);
  EXPECT_TRUE(rep.functor_error_strictly_decreasing());
  for (const auto& r : rep.rows) {
    EXPECT_GE(r.alpha_hat, 0.5 - 1e-6);
    EXPECT_LE(r.epsilon_error, 1e-12);
  }
  std::ostringstream os;
  rep.write_csv(os);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "dim,functor_a_error,epsilon_error,weak_error,alpha_hat");
  EXPECT_THROW(convergence_scan(L.as_map(), M, {8, 4}, 1.0, 4, 1), std::invalid_argument);
}

TEST(Discretize, ContinuityProbe) {
  const int M = 16;
  const auto L = make_layer(1, {.rank = 8, .lip_G = 0.4}, fourier(M));
  const auto K = FiniteRankOperator(Vec::Constant(1, 0.7), random_orthonormal(M, 1, 0.0, 3),
                                    random_orthonormal(M, 1, 0.0, 4));
  std::vector<int> js;
  for (int j = 1; j <= 16; ++j) js.push_back(j);
  const auto rows = continuity_probe(L.as_map(), K, js, 6, 1.0, 20, 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_LE(rows[i].discretized_error, rows[i].ambient_error);
    if (i + 1 < rows.size()) {
      const double j = rows[i].j;
      EXPECT_NEAR(rows[i + 1].discretized_error / rows[i].discretized_error, j / (j + 1), 0.1 * j / (j + 1));
    }
  }
  const auto zero = continuity_probe(L.as_map(), FiniteRankOperator::zero(M), {1, 2}, 6, 1.0, 5, 2);
  EXPECT_EQ(zero[0].ambient_error, 0.0);
  EXPECT_EQ(zero[1].discretized_error, 0.0);
}

TEST(Discretize, OrientationScanExamples) {
  const int d = 5, M = 8;
  const Vec base = Vec::Zero(M);
  const auto grid = uniform_grid(0.0, 1.0, 21);
  auto id = orientation_scan([](double) { return Map([](const Vec& x) { return x; }); }, grid, d, base);
  EXPECT_EQ(id.sign_changes(), 0);
  for (const auto& r : id.rows) EXPECT_EQ(r.sign, 1);
  const auto grid2 = uniform_grid(0.0, 1.0, 20);  // 0.5 not on the grid
  auto flip = orientation_scan([](double t) { return Map([t](const Vec& x) { return Vec((1 - 2 * t) * x); }); },
                               grid2, d, base);
  ASSERT_EQ(flip.sign_changes(), 1);
  EXPECT_LE(flip.crossings[0].second - flip.crossings[0].first, 1e-6);
  EXPECT_LE(flip.crossings[0].first, 0.5);
  EXPECT_GE(flip.crossings[0].second, 0.5);
  // grid point exactly at 0.5
  flip = orientation_scan([](double t) { return Map([t](const Vec& x) { return Vec((1 - 2 * t) * x); }); }, grid, d,
                          base);
  ASSERT_EQ(flip.sign_changes(), 1);
  EXPECT_EQ(flip.crossings[0].first, 0.5);
}

TEST(Discretize, MonotonePathKeepsOrientation) {
  const int M = 16, d = 6;
  const auto X = fourier(M);
  const auto L = make_layer(2, {.rank = 8, .decay = 1.0, .lip_G = 0.45}, X);
  const MapPath path = [&](double t) {
    return Map([&, t](const Vec& x) { return Vec((1 - t) * x + t * L(x)); });
  };
  for (const auto& x : sample_ball_prefix(M, d, 1.0, 5, 1.0, 3)) {
    const auto scan = orientation_scan(path, uniform_grid(0, 1, 11), d, x);
    EXPECT_EQ(scan.sign_changes(), 0);
    for (const auto& r : scan.rows) EXPECT_EQ(r.sign, 1);
  }
}
