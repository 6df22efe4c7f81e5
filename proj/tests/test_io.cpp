#include <gtest/gtest.h>

#include "nolab/io.hpp"

using namespace nolab;

namespace {

std::shared_ptr<const Space> space16() { return std::make_shared<const Space>(Space::fourier(16)); }

}  // namespace

TEST(Io, SpaceRoundTrip) {
  const BasisSpec s{BasisKind::fourier, 24, 128};
  const auto back = basis_spec_from_json(to_json(s));
  EXPECT_EQ(back.kind, s.kind);
  EXPECT_EQ(back.ambient_dim, 24);
  EXPECT_EQ(back.quadrature, 128);
}

TEST(Io, UnknownKeyRejected) {
  json j = {{"basis", "fourier"}, {"ambient_dim", 8}, {"quadrature", 0}, {"typo", 1}};
  EXPECT_THROW(basis_spec_from_json(j), ConfigError);
}

TEST(Io, ActivationRoundTrip) {
  for (const auto& a : {PointwiseActivation::identity(), PointwiseActivation::leaky_relu(0.3),
                        PointwiseActivation::recu(), PointwiseActivation::smooth_tanh(0.5, 0.25)}) {
    const auto b = activation_from_json(to_json(a));
    EXPECT_EQ(b.kind, a.kind);
    EXPECT_DOUBLE_EQ(b(0.7), a(0.7));
    EXPECT_DOUBLE_EQ(b(-1.3), a(-1.3));
  }
  EXPECT_TRUE(coordinate_activation_from_json(to_json(CoordinateActivation::groupsort2())).groupsort);
}

TEST(Io, OperatorExplicitAndSeeded) {
  const Mat psi = random_orthonormal(8, 3, 1.0, 4);
  const Mat phi = random_orthonormal(8, 3, 1.0, 5);
  Vec om(3);
  om << 1.0, 0.5, 0.25;
  const FiniteRankOperator T(om, psi, phi);
  const auto back = finite_rank_from_json(json::parse(to_json(T).dump()), 8);
  EXPECT_EQ((back.matrix() - T.matrix()).norm(), 0.0);

  json seeded = {{"kind", "finite_rank"}, {"omegas", {1.0, 0.5}}, {"psi_seed", 3}, {"phi_seed", 9}};
  const auto a = finite_rank_from_json(seeded, 8), b = finite_rank_from_json(seeded, 8);
  EXPECT_EQ((a.matrix() - b.matrix()).norm(), 0.0);
  EXPECT_EQ(a.rank(), 2);
}

TEST(Io, ExplicitLayerRoundTripIsExact) {
  const auto sp = space16();
  for (auto g : {GKind::nemytskii_tanh, GKind::coordinate_net, GKind::affine}) {
    LayerSpec spec;
    spec.rank = 4;
    spec.g = g;
    const auto L = make_layer(11, spec, sp);
    const auto back = layer_from_json(json::parse(to_json(L, sp->spec()).dump()));
    const Vec x = Vec::LinSpaced(16, -0.5, 0.7);
    EXPECT_EQ((back(x) - L(x)).norm(), 0.0) << to_string(g);
  }
}

TEST(Io, GeneratorLayerNeedsSeed) {
  json j = {{"schema", 1},
            {"space", {{"basis", "fourier"}, {"ambient_dim", 16}}},
            {"generator", {{"rank", 4}, {"lip_G", 0.3}}}};
  EXPECT_THROW(layer_from_json(j), ConfigError);
  j["seed"] = 7;
  const auto L = layer_from_json(j);
  LayerSpec spec;
  spec.rank = 4;
  spec.lip_G = 0.3;
  const auto ref = make_layer(7, spec, space16());
  const Vec x = Vec::Constant(16, 0.1);
  EXPECT_EQ((L(x) - ref(x)).norm(), 0.0);
}

TEST(Io, SchemaVersionChecked) {
  json j = {{"schema", 2}, {"space", {{"basis", "fourier"}, {"ambient_dim", 8}}}, {"generator", json::object()}, {"seed", 1}};
  EXPECT_THROW(layer_from_json(j), ConfigError);
}

TEST(Io, ChainRoundTrip) {
  std::vector<CoordinateNetwork> blocks;
  for (int t = 0; t < 2; ++t)
    blocks.push_back(random_network({4, 8, 8, 4}, CoordinateActivation::groupsort2(), 0.5, 20 + t));
  const ResidualChain c(4, blocks);
  const auto doc = chain_from_json(json::parse(to_json(c, 0.5).dump()));
  ASSERT_TRUE(doc.delta);
  EXPECT_DOUBLE_EQ(*doc.delta, 0.5);
  const Vec x = Vec::LinSpaced(6, -1, 1);
  EXPECT_EQ((doc.chain(x) - c(x)).norm(), 0.0);
}

TEST(Io, ChainGenerator) {
  json j = {{"N", 4}, {"delta", 0.5}, {"seed", 3}, {"generator", {{"blocks", 3}}}};
  const auto doc = chain_from_json(j);
  EXPECT_EQ(doc.chain.size(), 3u);
  EXPECT_NO_THROW(InvertibleResidualChain(doc.chain, 0.5));
  j.erase("seed");
  EXPECT_THROW(chain_from_json(j), ConfigError);
}

TEST(Io, CertificateHashIsStable) {
  MonotonicityCertificate c;
  c.alpha = 0.5;
  c.method = CertMethod::small_gain;
  const auto a = content_hash(to_json(c));
  EXPECT_EQ(a.size(), 16u);
  EXPECT_EQ(a, content_hash(to_json(c)));
  c.alpha = 0.25;
  EXPECT_NE(a, content_hash(to_json(c)));
}

TEST(Io, DoublesRoundTripBitExactly) {
  const Vec v = Vec::Random(20);
  const Vec back = vec_from_json(json::parse(to_json(v).dump()));
  EXPECT_EQ((back - v).norm(), 0.0);
}
