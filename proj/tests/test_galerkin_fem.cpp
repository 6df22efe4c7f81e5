#include <gtest/gtest.h>

#include <numbers>

#include "nolab/galerkin_fem.hpp"

using namespace nolab;

namespace {

constexpr double kPi = std::numbers::pi;

}  // namespace

TEST(GalerkinFem, StiffnessExamples) {
  const auto B = assemble_stiffness(FemMesh(2, BoundaryCondition::dirichlet_dirichlet));
  ASSERT_EQ(B.size(), 1);
  EXPECT_DOUBLE_EQ(B.diag[0], 4.0);
  const FemMesh mesh(16, BoundaryCondition::dirichlet_dirichlet);
  const auto K = assemble_stiffness(mesh);
  EXPECT_TRUE(K.is_spd());
  Eigen::SelfAdjointEigenSolver<Mat> es(K.dense());
  const double h = mesh.h();
  for (int k = 1; k < 16; ++k) EXPECT_NEAR(es.eigenvalues()[k - 1], 2.0 / h * (1 - std::cos(k * kPi * h)), 1e-10);
  EXPECT_TRUE(assemble_stiffness(FemMesh(8, BoundaryCondition::dirichlet_neumann)).is_spd());
  EXPECT_THROW(FemMesh(1, BoundaryCondition::dirichlet_dirichlet), std::invalid_argument);
}

TEST(GalerkinFem, TridiagonalSolveMatchesDense) {
  Tridiagonal T(5);
  T.diag << 4, 5, 6, 5, 4;
  T.sub << 1, -1, 2, 0.5;
  T.sup << -1, 2, 0.3, 1;
  const Vec b = Vec::LinSpaced(5, -1, 2);
  EXPECT_LE((T.solve(b) - T.dense().lu().solve(b)).norm(), 1e-13);
  EXPECT_LE((T * b - T.dense() * b).norm(), 1e-14);
}

TEST(GalerkinFem, NonlinearityMonotone) {
  for (const char* n : {"zero", "linear", "cubic"}) EXPECT_TRUE(ConvexNonlinearity::from_name(n).monotone_on(-3, 3));
  EXPECT_THROW(ConvexNonlinearity::from_name("sine"), std::invalid_argument);
}

TEST(GalerkinFem, ZeroSourceGivesZero) {
  const FemMesh mesh(32, BoundaryCondition::dirichlet_dirichlet);
  for (const auto& g : {ConvexNonlinearity::zero(), ConvexNonlinearity::cubic()}) {
    const auto r = solve_semilinear([](double) { return 0.0; }, mesh, g);
    EXPECT_EQ(r.w.norm(), 0.0);
  }
}

TEST(GalerkinFem, ManufacturedNodalErrorSecondOrder) {
  const auto g = ConvexNonlinearity::zero();
  const auto p = manufactured_sine(g);
  // 1-D hats are nodally superconvergent, so only the O(h^2) ceiling is asserted
  for (int n : {16, 32, 64}) {
    const FemMesh mesh(n, BoundaryCondition::dirichlet_dirichlet);
    const Vec u = mesh.nodal_values(solve_semilinear(p.source, mesh, g).w);
    double err = 0;
    for (int i = 0; i <= n; ++i) err = std::max(err, std::abs(u[i] - p.exact(mesh.node(i))));
    EXPECT_LE(err, 2.0 * mesh.h() * mesh.h());
  }
}

TEST(GalerkinFem, LinearAndCubicConverge) {
  for (const auto& g : {ConvexNonlinearity::linear(), ConvexNonlinearity::cubic()}) {
    const auto p = manufactured_sine(g);
    const FemMesh mesh(64, BoundaryCondition::dirichlet_dirichlet);
    const auto r = solve_semilinear(p.source, mesh, g, 1e-11);
    EXPECT_LE(r.residuals.back(), 1e-11);
    const Vec u = mesh.nodal_values(r.w);
    for (int i = 0; i <= 64; ++i) EXPECT_NEAR(u[i], p.exact(mesh.node(i)), 1e-3);
    for (std::size_t k = 1; k < r.energies.size(); ++k) EXPECT_LE(r.energies[k], r.energies[k - 1] + 1e-14);
  }
}

TEST(GalerkinFem, ConvergenceTable) {
  const auto g = ConvexNonlinearity::linear();
  const auto p = manufactured_sine(g);
  const auto rows = fem_convergence(p.source, g, {16, 32, 64, 128}, 8, p.exact, p.exact_derivative);
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_GE(rows[i].ratio, 1.7);
    EXPECT_LE(rows[i].ratio, 2.3);
    EXPECT_LT(rows[i].h1_error, rows[i - 1].h1_error);
    EXPECT_NEAR(rows[i - 1].h1_error_exact / rows[i].h1_error_exact, 2.0, 0.1);
  }
  const auto again = fem_convergence(p.source, g, {16, 32, 64, 128}, 8);
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(again[i].h1_error, rows[i].h1_error);
}

TEST(GalerkinFem, PathMatrixExamples) {
  for (double s : {0.0, 0.2, 0.7, 1.0}) EXPECT_NEAR(galerkin_path_matrix(PathKind::A, s, 1, PathBasis::fourier)(0, 0), 1 - 2 * s, 1e-15);
  for (int n : {1, 4, 5}) {
    EXPECT_NEAR(galerkin_path_matrix(PathKind::A, 0.0, n, PathBasis::fourier).determinant(), 1.0, 1e-13);
    EXPECT_NEAR(galerkin_path_matrix(PathKind::A, 1.0, n, PathBasis::fourier).determinant(), n % 2 ? -1.0 : 1.0, 1e-13);
  }
  EXPECT_GT(galerkin_path_matrix(PathKind::A, 0.0, 6, PathBasis::hat).determinant(), 0.0);
  EXPECT_THROW(galerkin_path_matrix(PathKind::B, 0.3, 3, PathBasis::fourier), std::invalid_argument);
  EXPECT_THROW(galerkin_path_matrix(PathKind::A, 1.5, 3, PathBasis::fourier), std::invalid_argument);
}

TEST(GalerkinFem, PathMatrixAgreesWithQuadrature) {
  // oracle: brute-force quadrature split at s
  const int n = 5;
  const double s = 0.37;
  const Mat A = galerkin_path_matrix(PathKind::A, s, n, PathBasis::fourier);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) {
      const double ref = integrate_split(
          [&](double t) { return (t < s ? -1.0 : 1.0) * fourier_basis(j, t) * fourier_basis(k, t); }, 0, 1,
          {0.1, 0.2, 0.3, 0.5, 0.6, 0.7, 0.8, 0.9, s}, 16);
      EXPECT_NEAR(A(j, k), ref, 1e-13);
    }
}

TEST(GalerkinFem, PathMatrixSymmetricAndContinuous) {
  for (auto [kind, basis] : {std::pair{PathKind::A, PathBasis::fourier}, std::pair{PathKind::A, PathBasis::hat},
                             std::pair{PathKind::B, PathBasis::hat}}) {
    for (double s : uniform_grid(0.0, 0.9999, 13)) {
      const Mat A = galerkin_path_matrix(kind, s, 7, basis);
      const Mat A2 = galerkin_path_matrix(kind, s + 1e-4, 7, basis);
      EXPECT_LE((A - A.transpose()).norm(), 1e-12);
      // entries move at most |d/ds| <= 2 max|weight * integrand| per unit s
      const double C = kind == PathKind::B ? 4.0 * 49.0 * 7 : 4.0 * 7;
      EXPECT_LE((A2 - A).norm(), C * 1e-4);
    }
  }
}

TEST(GalerkinFem, SingularityScans) {
  const auto grid = uniform_grid(0.0, 1.0, 41);
  auto sc = singularity_scan(PathKind::A, 1, PathBasis::fourier, grid, 1e-12);
  ASSERT_TRUE(sc.found);
  EXPECT_NEAR(sc.s_star, 0.5, 1e-12);
  sc = singularity_scan(PathKind::A, 5, PathBasis::fourier, uniform_grid(0.0, 1.0, 43));
  EXPECT_EQ(sc.sign_at_start, 1);
  EXPECT_EQ(sc.sign_at_end, -1);
  ASSERT_TRUE(sc.found);
  EXPECT_LT(std::abs(sc.det_at_star), 1e-10);
  sc = singularity_scan(PathKind::B, 7, PathBasis::hat, uniform_grid(0.0, 1.0, 43));
  ASSERT_TRUE(sc.found);
  EXPECT_LT(sc.min_sv_at_star, 1e-8);
  EXPECT_EQ(sc.rows.size(), 43u);
}

TEST(GalerkinFem, ContinuumPathIsIsometry) {
  for (double s : {0.0, 0.31, 0.5, 0.93})
    EXPECT_LE(multiplication_isometry_defect(s, [](double t) { return std::exp(t) * std::sin(7 * t); }), 1e-14);
}
