#include <gtest/gtest.h>

#include "nolab/discretize.hpp"
#include "nolab/monotone.hpp"

using namespace nolab;

namespace {

std::shared_ptr<const Space> fourier(int M) { return std::make_shared<const Space>(Space::fourier(M)); }

}  // namespace

TEST(Monotone, PairwiseAlphaExamples) {
  const int M = 6;
  EXPECT_NEAR(pairwise_alpha([](const Vec& x) { return x; }, M, 1.0, 20, 1).alpha, 1.0, 1e-14);
  EXPECT_NEAR(pairwise_alpha([](const Vec& x) { return Vec(2 * x); }, M, 1.0, 20, 1).alpha, 2.0, 1e-14);
  const auto R = LinearOperatorExpr::reflection(Vec::Unit(M, 0));
  const auto c = pairwise_alpha([&](const Vec& x) { return R.apply(x); }, M, 1.0, 40, 1);
  EXPECT_LT(c.alpha, 0.0);
  EXPECT_FALSE(c.certified());
  ASSERT_TRUE(c.argmin.has_value());
  const Vec d = c.argmin->first - c.argmin->second;
  EXPECT_NEAR((R.apply(c.argmin->first) - R.apply(c.argmin->second)).dot(d) / d.squaredNorm(), c.alpha, 1e-14);
}

TEST(Monotone, DegeneratePairsSkipped) {
  const Vec a = Vec::Unit(3, 0);
  const auto c = pairwise_alpha_points([](const Vec& x) { return Vec(3 * x); }, {a, a, Vec::Unit(3, 1)});
  EXPECT_NEAR(c.alpha, 3.0, 1e-14);
}

TEST(Monotone, SmallGainCertificate) {
  const auto X = fourier(16);
  const auto ok = make_layer(1, {.rank = 6, .lip_G = 0.4}, X);
  auto c = small_gain_certificate(ok);
  EXPECT_TRUE(c.certified());
  EXPECT_DOUBLE_EQ(c.alpha, 0.5);
  c = small_gain_certificate(make_layer(1, {.rank = 6, .lip_G = 0.6}, X));
  EXPECT_TRUE(c.rejected);
  const NeuralOperatorLayer noT2(ok.T1(), FiniteRankOperator::zero(16), ok.G());
  EXPECT_DOUBLE_EQ(small_gain_certificate(noT2).alpha, 1.0);
}

TEST(Monotone, LinearCertificate) {
  const int M = 6;
  Vec d = Vec::Ones(M);
  d[0] = 2;
  d[1] = 3;
  EXPECT_DOUBLE_EQ(linear_certificate(LinearOperatorExpr::diagonal(d), M).alpha, 1.0);
  EXPECT_DOUBLE_EQ(linear_certificate(LinearOperatorExpr::identity(), M).alpha, 1.0);
  Mat S(2, 2);
  S << 0, 1, -1, 0;
  const auto c = linear_certificate(LinearOperatorExpr::dense_on_prefix(S), M);
  EXPECT_NEAR(c.alpha, 0.0, 1e-15);
  EXPECT_TRUE(c.rejected);
}

TEST(Monotone, NemytskiiCertificate) {
  EXPECT_DOUBLE_EQ(nemytskii_certificate(PointwiseActivation::leaky_relu(0.2)).alpha, 0.2);
  EXPECT_DOUBLE_EQ(nemytskii_certificate(PointwiseActivation::identity()).alpha, 1.0);
  EXPECT_TRUE(nemytskii_certificate(PointwiseActivation::relu()).rejected);
  EXPECT_TRUE(nemytskii_certificate(PointwiseActivation::recu()).rejected);
}

TEST(Monotone, SampledAlphaNeverUndercutsCertificate) {
  const int M = 16;
  const auto X = fourier(M);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto L = make_layer(s, {.rank = 8, .decay = 1.0, .lip_G = 0.45}, X);
    const auto cert = small_gain_certificate(L);
    ASSERT_TRUE(cert.certified());
    EXPECT_GE(pairwise_alpha(L.as_map(), M, 1.0, 64, s).alpha, cert.alpha - 1e-6);
  }
  const auto sigma = PointwiseActivation::leaky_relu(0.2);
  const auto N = [&](const Vec& u) { return nemytskii_apply(*X, sigma, u); };
  EXPECT_GE(pairwise_alpha(N, M, 1.0, 64, 3).alpha, nemytskii_certificate(sigma).alpha - 1e-6);
  Vec d = Vec::LinSpaced(M, 0.5, 3);
  const auto D = LinearOperatorExpr::diagonal(d);
  EXPECT_GE(pairwise_alpha([&](const Vec& x) { return D.apply(x); }, M, 1.0, 64, 3).alpha,
            linear_certificate(D, M).alpha - 1e-6);
}

TEST(Monotone, CoercivityProbe) {
  const int M = 16;
  const auto X = fourier(M);
  const auto L = make_layer(2, {.rank = 8, .decay = 1.0, .lip_G = 0.45}, X);
  const double alpha = small_gain_certificate(L).alpha;
  const Vec f0 = L(Vec::Zero(M));
  for (double R : {1.0, 10.0, 100.0}) {
    for (auto x : sample_ball(M, 1.0, 20, 1.0, 4)) {
      x *= R / x.norm();
      const Vec u = x / x.norm();
      EXPECT_GE(L(x).dot(u), f0.dot(u) + alpha * R - 1e-6);
    }
  }
}

TEST(Monotone, ProjectionPreservesSampledAlpha) {
  const int M = 16;
  const auto X = fourier(M);
  const auto L = make_layer(6, {.rank = 8, .decay = 1.0, .lip_G = 0.45}, X);
  for (int d : {3, 6, 10}) {
    const auto xs = sample_ball_prefix(M, d, 1.0, 40, 1.0, 8);
    const double on_V = pairwise_alpha_points(L.as_map(), xs).alpha;
    const double disc = pairwise_alpha_points(linearize(L.as_map(), d).as_map(), xs).alpha;
    EXPECT_GE(disc, on_V - 1e-9);
  }
}

TEST(Monotone, BilipschitzEstimates) {
  const int M = 12;
  auto b = bilipschitz_estimate([](const Vec& x) { return x; }, M, 1.0, 20, 1);
  EXPECT_NEAR(b.c_lower, 1.0, 1e-14);
  EXPECT_NEAR(b.c_upper, 1.0, 1e-14);
  b = bilipschitz_estimate([](const Vec& x) { return Vec(2 * x); }, M, 1.0, 20, 1);
  EXPECT_NEAR(b.c_lower, 2.0, 1e-14);
  EXPECT_NEAR(b.c_upper, 2.0, 1e-14);
  const auto L = make_layer(3, {.rank = 6, .lip_G = 0.4}, fourier(M));
  b = bilipschitz_estimate(L.as_map(), M, 1.0, 60, 2);
  EXPECT_GE(b.c_lower, 0.6);
  EXPECT_LE(b.c_upper, 1.4);
  EXPECT_LE(b.c_lower, b.c_upper);
}

TEST(Monotone, JacobianScan) {
  const int M = 12;
  auto s = jacobian_pd_scan([](const Vec& x) { return x; }, M, 5, 1.0, 4, 1);
  EXPECT_NEAR(s.min_sym_eig, 1.0, 1e-9);
  EXPECT_NEAR(s.min_det, 1.0, 1e-9);
  const auto L = make_layer(3, {.rank = 6, .decay = 1.0, .lip_G = 0.45}, fourier(M));
  s = jacobian_pd_scan(L.as_map(), M, 8, 1.0, 10, 2);
  EXPECT_GE(s.min_sym_eig, 0.5 - 1e-4);
  EXPECT_GT(s.min_det, 0.0);
  const auto R = LinearOperatorExpr::reflection(Vec::Unit(M, 0));
  s = jacobian_pd_scan([&](const Vec& x) { return R.apply(x); }, M, 5, 1.0, 3, 1);
  EXPECT_NEAR(s.min_det, -1.0, 1e-9);
  EXPECT_THROW(jacobian_pd_scan([](const Vec& x) { return x; }, 60, 51, 1.0, 3, 1), std::invalid_argument);
}
