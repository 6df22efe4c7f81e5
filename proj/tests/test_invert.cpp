#include <gtest/gtest.h>

#include "nolab/invert.hpp"

using namespace nolab;

namespace {

ResidualChain make_chain(int N, int T, double delta, CoordinateActivation act, std::uint64_t seed) {
  std::vector<CoordinateNetwork> blocks;
  for (int t = 0; t < T; ++t) blocks.push_back(random_network({N, 2 * N, 2 * N, N}, act, delta, seed + t, 0.2));
  return ResidualChain(N, blocks);
}

}  // namespace

TEST(Invert, ZeroNetworkReturnsY) {
  const Vec y = Vec::LinSpaced(6, -1, 1);
  BlockTrace tr;
  const Vec x = block_fixed_point(CoordinateNetwork::zero(4), 0.5, y, {}, &tr);
  EXPECT_EQ(x, y);
  EXPECT_EQ(tr.iterations, 1);
}

TEST(Invert, ScalarClosedForm) {
  // NN(z) = 0.5 * z_1 e_1: x_1 + 0.5 x_1 = y_1
  Mat W = Mat::Zero(3, 3);
  W(0, 0) = 0.5;
  const CoordinateNetwork net({W}, {Vec::Zero(3)}, CoordinateActivation::entrywise({}));
  Vec y(5);
  y << 0.9, -0.2, 0.3, 1.0, 2.0;
  const double tol = 1e-12;
  const Vec x = block_fixed_point(net, 0.5, y, {.tol = tol});
  EXPECT_NEAR(x[0], y[0] / 1.5, 2 * tol);
  EXPECT_EQ(x.tail(4), y.tail(4));
}

TEST(Invert, IterationBoundHalfContraction) {
  const int N = 8;
  const auto net = random_network({N, 16, N}, CoordinateActivation::groupsort2(), 0.5, 3, 0.2);
  for (const auto& y0 : sample_ball(N, 1.0, 20, 0.0, 4)) {
    const Vec y = y0 / y0.norm();
    BlockTrace tr;
    const Vec x = block_fixed_point(net, 0.5, y, {.tol = 1e-10}, &tr);
    EXPECT_LE(tr.iterations, 40);
    EXPECT_LE(tr.iterations, tr.a_priori_bound);
    EXPECT_LE((x + net(x) - y).norm(), 1e-10);
    EXPECT_LE(tr.median_ratio(), 0.5 + 0.05);
    EXPECT_TRUE(tr.strictly_decreasing_after_first());
  }
}

TEST(Invert, IndependentOfStart) {
  const int N = 6;
  const auto net = random_network({N, 12, N}, CoordinateActivation::groupsort2(), 0.8, 5, 0.2);
  const Vec y = sample_ball(N, 1.0, 1, 0.0, 1)[0];
  const double tol = 1e-11;
  const Vec a = block_fixed_point(net, 0.8, y, {.tol = tol, .start = StartPoint::y});
  const Vec b = block_fixed_point(net, 0.8, y, {.tol = tol, .start = StartPoint::zero});
  EXPECT_LE((a - b).norm(), 2 * tol / (1 - 0.8));
}

TEST(Invert, RefusesUncertifiedAndReportsNonConvergence) {
  const auto net = CoordinateNetwork::linear(3, 0.9);
  EXPECT_THROW(block_fixed_point(net, 1.0, Vec::Ones(3), {}), std::invalid_argument);
  try {
    block_fixed_point(net, 0.9, Vec::Ones(3), {.tol = 1e-14, .max_iter = 5});
    FAIL();
  } catch (const NonConvergence& e) {
    EXPECT_GT(e.last_residual, 0.0);
  }
}

TEST(Invert, ChainInverseExamples) {
  const Vec y = Vec::LinSpaced(8, -1, 1);
  EXPECT_EQ(chain_inverse(ResidualChain(4, {}), {}, LinearOperatorExpr::identity(), y), y);
  const auto R = LinearOperatorExpr::reflection(Vec::Unit(8, 0));
  EXPECT_EQ(chain_inverse(ResidualChain(4, {}), {}, R, y), R.apply(y));
}

TEST(Invert, ThreeBlockRoundtrip) {
  const int N = 16, M = 24;
  const InvertibleResidualChain G(make_chain(N, 3, 0.5, CoordinateActivation::groupsort2(), 20), 0.5);
  const auto A = LinearOperatorExpr::reflection(Vec::Unit(M, 0));
  for (const auto& x : sample_ball(M, 1.0, 100, 0.0, 7)) {
    const Vec y = G(A.apply(x));
    InversionTrace tr;
    const Vec back = chain_inverse(G, A, y, {.tol = 1e-10}, &tr);
    EXPECT_LE((back - x).norm(), 1e-8);
    ASSERT_EQ(tr.blocks.size(), 3u);
    for (const auto& b : tr.blocks) {
      EXPECT_LE(b.iterations, b.a_priori_bound + 5);
      EXPECT_TRUE(b.strictly_decreasing_after_first());
    }
  }
}

TEST(Invert, DomainBookkeeping) {
  const int N = 4, M = 6;
  const InvertibleResidualChain G(make_chain(N, 2, 0.5, CoordinateActivation::groupsort2(), 2), 0.5);
  const auto id = LinearOperatorExpr::identity();
  const Vec x = 0.5 * Vec::Unit(M, 1);
  EXPECT_NO_THROW(chain_inverse(G, id, G(x), {}, nullptr, {.input_radius = 1.0}));
  const Vec far = 50.0 * Vec::Unit(M, 1);
  EXPECT_THROW(chain_inverse(G, id, far, {}, nullptr, {.input_radius = 1.0}), DomainError);
  EXPECT_NO_THROW(chain_inverse(G, id, far, {}, nullptr, {.input_radius = 1.0, .project = true}));
}

TEST(Invert, GlobalCheckGroupSortDeltaPointNine) {
  const int N = 8, M = 12;
  const InvertibleResidualChain G(make_chain(N, 3, 0.9, CoordinateActivation::groupsort2(), 40), 0.9);
  const auto rep = global_inverse_check(G, M, 2.0, 30, 5, {.tol = 1e-10});
  EXPECT_LE(rep.roundtrip_inverse_after_forward, 1e-6);
  EXPECT_LE(rep.roundtrip_forward_after_inverse, 1e-6);
  for (double a : rep.block_alpha) EXPECT_GE(a, 1 - 0.9 - 1e-6);
}

TEST(Invert, IdentityChainRoundtripIsExact) {
  const InvertibleResidualChain G(ResidualChain(3, {CoordinateNetwork::zero(3)}), 0.5);
  const auto rep = global_inverse_check(G, 5, 1.0, 10, 1);
  EXPECT_EQ(rep.roundtrip_inverse_after_forward, 0.0);
  EXPECT_EQ(rep.roundtrip_forward_after_inverse, 0.0);
}
