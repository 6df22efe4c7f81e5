#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "nolab/spectral_core.hpp"

using namespace nolab;

TEST(Quadrature, GaussLegendreIntegratesPolynomialsExactly) {
  const auto rule = gauss_legendre(6);
  // exact up to degree 11
  for (int k = 0; k <= 11; ++k) {
    double s = 0;
    for (std::size_t i = 0; i < rule.size(); ++i) s += rule.weights[i] * std::pow(rule.nodes[i], k);
    const double exact = (k % 2) ? 0.0 : 2.0 / (k + 1);
    EXPECT_NEAR(s, exact, 1e-14) << "degree " << k;
  }
}

TEST(Quadrature, SplitIntegralOfSignFunction) {
  const double s = 0.3;
  const double v = integrate_split([&](double t) { return t < s ? -1.0 : 1.0; }, 0.0, 1.0, {s});
  EXPECT_NEAR(v, 1.0 - 2.0 * s, 1e-15);
}

TEST(SpectralCore, InnerProductExamples) {
  const Space X = Space::fourier(8);
  EXPECT_DOUBLE_EQ(inner(X.unit(0), X.unit(0)), 1.0);
  EXPECT_DOUBLE_EQ(inner(X.unit(0), X.unit(1)), 0.0);
  EXPECT_DOUBLE_EQ(inner(2 * X.unit(0) + 3 * X.unit(1), X.unit(1)), 3.0);
  EXPECT_THROW(inner(Vec::Zero(3), Vec::Zero(4)), DimensionError);
}

TEST(SpectralCore, ProjectExamples) {
  const int M = 8;
  const Vec e1 = Vec::Unit(M, 0), e3 = Vec::Unit(M, 2);
  EXPECT_EQ(project(e3, Subspace::prefix(2)).norm(), 0.0);
  const Vec x = Vec::LinSpaced(M, 1, M);
  EXPECT_EQ(project(x, Subspace::prefix(M)), x);
  EXPECT_EQ(project(e1 + e3, Subspace::prefix(2)), e1);
}

TEST(SpectralCore, ProjectionPythagorasAndNesting) {
  const auto xs = sample_ball(20, 3.0, 30, 0.5, 1);
  for (const auto& x : xs) {
    for (int d = 0; d <= 20; ++d) {
      const Vec p = project(x, d);
      EXPECT_NEAR(p.squaredNorm() + (x - p).squaredNorm(), x.squaredNorm(), 1e-12);
      EXPECT_EQ(project(p, d), p);
      if (d > 0) EXPECT_LE((x - p).norm(), (x - project(x, d - 1)).norm());
    }
  }
}

TEST(SpectralCore, EncodeDecode) {
  Vec a(3);
  a << 1, 2, 3;
  EXPECT_EQ(encode(decode(a, 8), 3), a);
  EXPECT_EQ(decode(encode(Vec::Unit(8, 3), 3), 8).norm(), 0.0);
  EXPECT_DOUBLE_EQ(decode(a, 8).norm(), a.norm());
  EXPECT_THROW(encode(Vec::Zero(4), 5), DimensionError);
  EXPECT_THROW(decode(Vec::Zero(5), 4), DimensionError);
}

TEST(SpectralCore, SampleBall) {
  EXPECT_TRUE(sample_ball(10, 1.0, 0, 1.0, 3).empty());
  const auto a = sample_ball(10, 2.5, 100, 1.0, 3);
  const auto b = sample_ball(10, 2.5, 100, 1.0, 3);
  ASSERT_EQ(a.size(), 100u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_LE(a[i].norm(), 2.5 + 1e-15);
    EXPECT_EQ(a[i], b[i]);
  }
  EXPECT_THROW(sample_ball(10, 0.0, 3, 1.0, 1), std::invalid_argument);
  EXPECT_THROW(sample_ball(10, 1.0, 3, -1.0, 1), std::invalid_argument);
}

TEST(SpectralCore, GramIsIdentity) {
  for (int M : {1, 5, 16, 33}) {
    const Space X = Space::fourier(M);
    EXPECT_LT((X.gram() - Mat::Identity(M, M)).cwiseAbs().maxCoeff(), 1e-10) << "M=" << M;
  }
}

TEST(SpectralCore, ConstantFunctionFirst) {
  const Space X = Space::fourier(9);
  EXPECT_TRUE(X.includes_constant());
  const Vec g = X.to_grid(X.unit(0));
  EXPECT_LT((g.array() - 1.0).abs().maxCoeff(), 1e-15);
  EXPECT_EQ(X.to_grid(X.zero()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(SpectralCore, GridRoundtripMatchesDirectIntegral) {
  const int M = 21;
  const Space X = Space::fourier(M);
  const auto xs = sample_ball(M, 1.0, 5, 0.0, 9);
  for (const auto& x : xs) {
    EXPECT_LT((X.from_grid(X.to_grid(x)) - x).cwiseAbs().maxCoeff(), 1e-8);
  }
  // oracle: coefficient of sin(2 pi t) * cos(2 pi t) = sin(4 pi t)/2 is 1/(2 sqrt2) on index 4
  Vec g(X.nodes().size());
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double t = X.nodes()[i];
    g[i] = std::sin(2 * std::numbers::pi * t) * std::cos(2 * std::numbers::pi * t);
  }
  const Vec c = X.from_grid(g);
  EXPECT_NEAR(c[4], 1.0 / (2.0 * std::numbers::sqrt2), 1e-13);
  EXPECT_NEAR(c[0], 0.0, 1e-14);
}

TEST(SpectralCore, HatBasisRefusedAndAbstractHasNoGrid) {
  EXPECT_THROW(Space(BasisSpec{BasisKind::fem_hat, 8, 0}), std::invalid_argument);
  const Space A = Space::abstract(5);
  EXPECT_FALSE(A.has_grid());
  EXPECT_THROW(A.to_grid(A.zero()), std::logic_error);
}

TEST(SpectralCore, PrefixLattice) {
  const auto a = Subspace::prefix(3), b = Subspace::prefix(7);
  EXPECT_EQ(join(a, b).dim, 7);
  EXPECT_EQ(meet(a, b).dim, 3);
  EXPECT_TRUE(a <= b);
}
