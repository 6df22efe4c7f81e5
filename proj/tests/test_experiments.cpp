#include <gtest/gtest.h>

#include <filesystem>

#include "nolab/experiments.hpp"

using namespace nolab;

namespace {

json config(json experiments) { return {{"schema", 1}, {"seed", 4}, {"experiments", std::move(experiments)}}; }

json generator_layer(double lip) {
  return {{"seed", 5},
          {"space", {{"basis", "fourier"}, {"ambient_dim", 16}}},
          {"generator", {{"rank", 4}, {"decay", 1.0}, {"lip_G", lip}}}};
}

}  // namespace

TEST(Experiments, EmptyListPassesWithoutArtifacts) {
  const auto dir = std::filesystem::temp_directory_path() / "nolab_empty_run";
  std::filesystem::remove_all(dir);
  const auto r = run_config(config(json::array()), {.out_dir = dir.string()});
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_FALSE(std::filesystem::exists(dir));
}

TEST(Experiments, ConfigErrors) {
  EXPECT_EQ(run_config({{"schema", 1}, {"experiments", json::array()}}).exit_code, 1);  // no seed
  EXPECT_EQ(run_config({{"schema", 2}, {"seed", 1}}).exit_code, 1);
  EXPECT_EQ(run_config(config({{{"op", "nope"}}})).exit_code, 1);
  EXPECT_EQ(run_config(config({{{"op", "fem-solve"}, {"typo", 1}}})).exit_code, 1);
  EXPECT_EQ(run_config(config({{{"op", "nogo-galerkin"}, {"kind", "c"}}})).exit_code, 1);
  EXPECT_EQ(run_config(config({{{"name", "a"}, {"op", "nogo-isotopy"}}, {{"name", "a"}, {"op", "nogo-isotopy"}}}))
                .exit_code,
            1);
}

TEST(Experiments, SmallGainRejectionIsNotAFailure) {
  const auto r = run_config(config({{{"op", "monotone-check"}, {"layer", generator_layer(0.8)}, {"dims", {2, 4}}}}));
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.results[0].summary["rejected_certificates"], 1);
}

TEST(Experiments, SeededMonotoneSuitePasses) {
  const auto r = run_config(
      config({{{"op", "monotone-check"}, {"layer", generator_layer(0.45)}, {"count", 5}, {"dims", {1, 4, 16}}}}));
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.results[0].summary["rejected_certificates"], 0);
}

TEST(Experiments, AssertionFailureExitsTwo) {
  const auto r = run_config(config({{{"op", "fem-solve"}, {"ratio_range", {3.0, 4.0}}}}));
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_EQ(r.report["status"], "assertion_failure");
  EXPECT_FALSE(r.report["experiments"][0]["failures"].empty());
}

TEST(Experiments, RefusedChain) {
  const json chain{{"N", 4}, {"delta", 1.5}, {"seed", 1}, {"generator", {{"blocks", 1}}}};
  EXPECT_EQ(run_config(config({{{"op", "invert"}, {"chain", chain}}})).exit_code, 2);
  EXPECT_EQ(run_config(config({{{"op", "invert"}, {"chain", chain}, {"expect_refusal", true}}})).exit_code, 0);
}

TEST(Experiments, ConcurrentRunsAreByteIdentical) {
  const json exps = {{{"name", "iso"}, {"op", "nogo-isotopy"}, {"m", 5}},
                     {{"name", "gal"}, {"op", "nogo-galerkin"}, {"n", 3}},
                     {{"name", "scan"}, {"op", "discretize-scan"}, {"layer", generator_layer(0.4)}, {"dims", {2, 8}}}};
  const auto a = run_config(config(exps), {.jobs = 1});
  const auto b = run_config(config(exps), {.jobs = 3});
  ASSERT_EQ(a.exit_code, 0);
  ASSERT_EQ(a.results.size(), b.results.size());
  for (std::size_t i = 0; i < a.results.size(); ++i) {
    EXPECT_EQ(a.results[i].name, b.results[i].name);
    EXPECT_EQ(a.results[i].artifacts, b.results[i].artifacts);
  }
}

TEST(Experiments, SeedOverrideChangesSamples) {
  const json exps = {{{"op", "discretize-scan"}, {"layer", generator_layer(0.4)}, {"dims", {2, 8}}}};
  const auto a = run_config(config(exps));
  const auto b = run_config(config(exps), {.seed = 99});
  EXPECT_NE(a.results[0].artifacts[0].second, b.results[0].artifacts[0].second);
}
