#include <gtest/gtest.h>

#include <random>

#include "nolab/nogo_isotopy.hpp"

using namespace nolab;

TEST(NogoIsotopy, SmoothStep) {
  EXPECT_EQ(smooth_step(-1.0), 0.0);
  EXPECT_EQ(smooth_step(0.0), 0.0);
  EXPECT_EQ(smooth_step(1.0), 1.0);
  EXPECT_EQ(smooth_step(3.0), 1.0);
  EXPECT_DOUBLE_EQ(smooth_step(0.5), 0.5);
  double prev = 0;
  for (int i = 0; i <= 1000; ++i) {
    const double v = smooth_step(i / 1000.0);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(NogoIsotopy, RotationPathEndpoints) {
  for (int m : {2, 6, 10}) {
    EXPECT_EQ(rotation_path(0.0, m), Mat::Identity(m, m));
    EXPECT_EQ(rotation_path(1.0, m), -Mat::Identity(m, m));
  }
  Mat S = Mat::Identity(5, 5);
  S(0, 0) = -1;
  EXPECT_EQ(shifted_rotation_path(0.0, 5), S);
  EXPECT_EQ(shifted_rotation_path(1.0, 5), -Mat::Identity(5, 5));
  EXPECT_THROW(rotation_path(0.3, 5), std::invalid_argument);
  EXPECT_THROW(shifted_rotation_path(0.3, 4), std::invalid_argument);
}

TEST(NogoIsotopy, FullPathsOrthogonalWithUnitDet) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  for (double t : isotopy_grid(101, 10)) {
    const Mat R = rotation_path(t, 8), S = shifted_rotation_path(t, 9);
    EXPECT_LE((R.transpose() * R - Mat::Identity(8, 8)).norm(), 1e-12);
    EXPECT_LE((S.transpose() * S - Mat::Identity(9, 9)).norm(), 1e-12);
    EXPECT_NEAR(R.determinant(), 1.0, 1e-12);
    Vec v(8);
    for (auto& x : v) x = n01(rng);
    EXPECT_NEAR((R * v).norm(), v.norm(), 1e-10);
  }
}

TEST(NogoIsotopy, GluedPathExamples) {
  const Vec v = Vec::LinSpaced(7, -1, 2);
  EXPECT_EQ(isotopy_apply(v, 0.0), v);
  EXPECT_EQ(isotopy_apply(v, 0.5), -v);
  Vec r = v;
  r[0] = -r[0];
  EXPECT_EQ(isotopy_apply(v, 1.0), r);
}

TEST(NogoIsotopy, CrossingForSeven) {
  const auto scan = truncated_det_scan(7, isotopy_grid(201, 12));
  EXPECT_NEAR(scan.rows.front().det, 1.0, 1e-14);
  EXPECT_NEAR(scan.rows.back().det, -1.0, 1e-14);
  ASSERT_EQ(scan.crossings.size(), 1u);
  const auto [lo, hi] = scan.crossings[0];
  EXPECT_LT(hi - lo, 1e-6);
  // the cut block is the fourth: its angle passes pi/2 where 1/(1-2t) = 4.5
  EXPECT_NEAR(0.5 * (lo + hi), 7.0 / 18.0, 1e-8);
  EXPECT_LT(scan.crossing_dets[0], 1e-8);
}

TEST(NogoIsotopy, AlignedTruncationsKeepUnitDeterminant) {
  // even d keeps every first-half block whole, but the second half then cuts one
  for (int d : {4, 6}) {
    for (double t : isotopy_grid(101, 8)) {
      if (t > 0.5) continue;
      EXPECT_NEAR(isotopy_matrix(t, d).determinant(), 1.0, 1e-12);
    }
  }
}

TEST(NogoIsotopy, FaithfulRange) {
  EXPECT_TRUE(truncation_faithful(0.0, 7));
  EXPECT_TRUE(truncation_faithful(0.2, 7));   // tau = 5/3: only block 1 moving
  EXPECT_FALSE(truncation_faithful(0.45, 7)); // tau = 10: block 4 cut and moving
  EXPECT_FALSE(truncation_faithful(0.5, 7));
  EXPECT_TRUE(truncation_faithful(1.0, 7));
}

TEST(NogoIsotopy, DetCurveLipschitzOnGrid) {
  const auto grid = isotopy_grid(2001, 0);
  double worst = 0;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    if (grid[i + 1] > 0.5) break;
    const double dd = std::abs(isotopy_matrix(grid[i + 1], 7).determinant() - isotopy_matrix(grid[i], 7).determinant());
    worst = std::max(worst, dd / (grid[i + 1] - grid[i]));
  }
  // pi * max smoothstep' * max d tau/dt over the cut-block window tau in [4, 5]
  EXPECT_LE(worst, std::numbers::pi * 1.875 * 2.0 * 25.0 * 1.01);
}
