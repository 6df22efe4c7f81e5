#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "nolab/decompose.hpp"
#include "nolab/discretize.hpp"
#include "nolab/galerkin_fem.hpp"
#include "nolab/invert.hpp"
#include "nolab/monotone.hpp"
#include "nolab/nogo_isotopy.hpp"

namespace nolab {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

namespace acceptance {

inline std::shared_ptr<const Space> fourier_space(int M) { return std::make_shared<const Space>(Space::fourier(M)); }

/// Collects failed checks; the first few are kept for the report line.
struct Checker {
  bool ok = true;
  int failures = 0;
  std::ostringstream msg;

  void expect(bool cond, const std::string& what) {
    if (cond) return;
    ok = false;
    if (failures++ < 3) msg << (failures > 1 ? "; " : "") << what;
  }
};

template <class Body>
CriterionResult timed(int id, std::string name, Body&& body) {
  CriterionResult r;
  r.id = id;
  r.name = std::move(name);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    Checker c;
    std::string summary = body(c);
    r.pass = c.ok;
    r.detail = c.ok ? summary : c.msg.str() + (c.failures > 3 ? " (+" + std::to_string(c.failures - 3) + " more)" : "");
  } catch (const std::exception& e) {
    r.pass = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

}  // namespace acceptance

/// Certified layers keep alpha >= 1/2 on every prefix.
inline CriterionResult criterion_monotonicity() {
  using namespace acceptance;
  return timed(1, "monotonicity preservation", [](Checker& c) {
    const int M = 32;
    const auto X = fourier_space(M);
    const std::vector<int> dims{1, 2, 4, 8, 12, 16, 24, 32};
    const GKind kinds[] = {GKind::nemytskii_tanh, GKind::nemytskii_leaky, GKind::coordinate_net};
    double worst = INFINITY;
    for (std::uint64_t s = 0; s < 50; ++s) {
      const auto L = make_layer(100 + s, {.rank = 8, .decay = 1.0, .lip_G = 0.45, .g = kinds[s % 3]}, X);
      const auto cert = small_gain_certificate(L);
      c.expect(cert.certified() && cert.alpha == 0.5, "layer " + std::to_string(s) + " not certified");
      for (int d : dims) {
        const auto xs = sample_ball_prefix(M, d, 1.0, 48, 1.0, 1000 + s * 16 + d);
        const double a = pairwise_alpha_points(linearize(L.as_map(), d).as_map(), xs).alpha;
        worst = std::min(worst, a);
        c.expect(a >= 0.5 - 1e-6, "alpha " + fmt(a) + " at d=" + std::to_string(d));
      }
    }
    return "50 layers x 8 dims, min alpha " + fmt(worst);
  });
}

/// Functor error decreases with d and vanishes past the rank; the projection error is exact.
inline CriterionResult criterion_discretization() {
  using namespace acceptance;
  return timed(2, "discretization convergence", [](Checker& c) {
    const int M = 96;
    const auto X = fourier_space(M);
    const std::vector<int> dims{4, 8, 16, 32, 64};
    double last = 0.0;
    for (std::uint64_t s = 0; s < 4; ++s) {
      const auto L = make_layer(200 + s, {.rank = M, .decay = 2.0, .lip_G = 0.45}, X);
      const auto rep = convergence_scan(L.as_map(), M, dims, 1.0, 24, 300 + s);
      c.expect(rep.functor_error_strictly_decreasing(0.0), "functor error not strictly decreasing, seed " + std::to_string(s));
      for (const auto& r : rep.rows) c.expect(r.epsilon_error <= 1e-12, "epsilon error " + fmt(r.epsilon_error));
      last = rep.rows.back().functor_a_error;
    }
    const int r = 6;
    double past = 0.0;
    for (std::uint64_t s = 0; s < 4; ++s) {
      const auto L = make_layer(400 + s, {.rank = r, .decay = 1.0, .lip_G = 0.45}, X);
      const auto rep = convergence_scan(L.as_map(), M, {2, 4, 6, 8, 16, 32, 64}, 1.0, 24, 500 + s);
      for (const auto& row : rep.rows)
        if (row.dim >= r) {
          past = std::max(past, row.functor_a_error);
          c.expect(row.functor_a_error <= 1e-12, "rank-6 functor error " + fmt(row.functor_a_error) + " at d=" +
                                                     std::to_string(row.dim));
        }
    }
    return "decaying: error at d=64 " + fmt(last) + "; finite rank past r: " + fmt(past);
  });
}

/// Perturbation F + K/j: errors scale like 1/j and the discretized error never exceeds the ambient one.
inline CriterionResult criterion_continuity() {
  using namespace acceptance;
  return timed(3, "continuity of the discretization functor", [](Checker& c) {
    const int M = 16;
    const auto L = make_layer(1, {.rank = 8, .lip_G = 0.4}, fourier_space(M));
    const FiniteRankOperator K(Vec::Constant(1, 0.7), random_orthonormal(M, 1, 0.0, 3), random_orthonormal(M, 1, 0.0, 4));
    std::vector<int> js;
    for (int j = 1; j <= 17; ++j) js.push_back(j);
    const auto rows = continuity_probe(L.as_map(), K, js, 6, 1.0, 20, 2);
    double worst = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      c.expect(rows[i].discretized_error <= rows[i].ambient_error, "discretized above ambient at j=" + std::to_string(rows[i].j));
      if (i + 1 < rows.size()) {
        const double j = rows[i].j, want = j / (j + 1);
        for (double got : {rows[i + 1].discretized_error / rows[i].discretized_error,
                           rows[i + 1].ambient_error / rows[i].ambient_error}) {
          worst = std::max(worst, std::abs(got / want - 1.0));
          c.expect(std::abs(got - want) <= 0.1 * want, "ratio " + fmt(got) + " at j=" + std::to_string(rows[i].j));
        }
      }
    }
    return "j = 1..16, worst relative ratio deviation " + fmt(worst);
  });
}

/// Layer with sampled bilipschitz constants near 0.8 and 1.25.
inline NeuralOperatorLayer decomposition_layer() {
  return make_layer(2, {.rank = 12, .decay = 0.0, .lip_G = 0.4}, acceptance::fourier_space(16));
}

inline CriterionResult criterion_decomposition() {
  using namespace acceptance;
  return timed(4, "decomposition into near-identity blocks", [](Checker& c) {
    const auto L = decomposition_layer();
    const double eps = 0.25;
    const auto bl = bilipschitz_estimate(L.as_map(), 16, 1.0, 80, 3);
    c.expect(bl.c_lower > 0.7 && bl.c_lower < 0.9 && bl.c_upper > 1.15 && bl.c_upper < 1.35,
             "bilipschitz constants " + fmt(bl.c_lower) + ", " + fmt(bl.c_upper));
    const auto D = decompose(L, eps, 1.0);
    double max_lip = 0.0, min_alpha = INFINITY;
    for (const auto& b : D.blocks()) {
      max_lip = std::max(max_lip, b.lip);
      min_alpha = std::min(min_alpha, b.alpha);
    }
    c.expect(max_lip < eps, "block Lip " + fmt(max_lip));
    c.expect(min_alpha >= 1.0 - eps - 1e-6, "block alpha " + fmt(min_alpha));
    const double err = D.composite_error(200, 17);
    c.expect(err <= 1e-6, "composite error " + fmt(err));
    const auto sw = epsilon_sweep(L, {0.4, 0.2, 0.1, 0.05}, 1.0);
    c.expect(sw.slope <= 2.3, "sweep slope " + fmt(sw.slope));
    std::string Js;
    for (const auto& r : sw.rows) Js += (Js.empty() ? "" : ",") + std::to_string(r.J);
    return "c=" + fmt(bl.c_lower) + " C=" + fmt(bl.c_upper) + " J=" + std::to_string(D.J()) + " max Lip " +
           fmt(max_lip) + " min alpha " + fmt(min_alpha) + " composite " + fmt(err) + "; sweep J {" + Js +
           "} slope " + fmt(sw.slope);
  });
}

inline ResidualChain acceptance_chain(int N, int T, double delta, CoordinateActivation act, std::uint64_t seed) {
  std::vector<CoordinateNetwork> blocks;
  for (int t = 0; t < T; ++t) blocks.push_back(random_network({N, 2 * N, 2 * N, N}, act, delta, seed + t, 0.2));
  return ResidualChain(N, blocks);
}

inline CriterionResult criterion_fixed_point() {
  using namespace acceptance;
  return timed(5, "fixed-point inversion", [](Checker& c) {
    const int N = 16, M = 24;
    const InvertibleResidualChain G(acceptance_chain(N, 3, 0.5, CoordinateActivation::groupsort2(), 20), 0.5);
    const auto A = LinearOperatorExpr::reflection(Vec::Unit(M, 0));
    double worst = 0.0;
    int slack = -1000;
    for (const auto& x : sample_ball(M, 1.0, 100, 0.0, 7)) {
      InversionTrace tr;
      const Vec back = chain_inverse(G, A, G(A.apply(x)), {.tol = 1e-10}, &tr);
      worst = std::max(worst, (back - x).norm());
      c.expect(tr.blocks.size() == 3, "trace length");
      for (const auto& b : tr.blocks) {
        slack = std::max(slack, b.iterations - b.a_priori_bound);
        c.expect(b.iterations <= b.a_priori_bound + 5, "iterations above bound");
        c.expect(b.strictly_decreasing_after_first(), "residuals not decreasing");
      }
    }
    c.expect(worst <= 1e-8, "roundtrip " + fmt(worst));
    return "roundtrip " + fmt(worst) + ", max iterations minus bound " + std::to_string(slack);
  });
}

inline CriterionResult criterion_residual_chain() {
  using namespace acceptance;
  return timed(6, "invertible residual chains", [](Checker& c) {
    const int N = 8, M = 12;
    const auto chain = acceptance_chain(N, 3, 0.9, CoordinateActivation::groupsort2(), 40);
    const InvertibleResidualChain G(chain, 0.9);
    const auto rep = global_inverse_check(G, M, 2.0, 60, 5, {.tol = 1e-10});
    c.expect(rep.roundtrip_inverse_after_forward <= 1e-6, "inverse after forward " + fmt(rep.roundtrip_inverse_after_forward));
    c.expect(rep.roundtrip_forward_after_inverse <= 1e-6, "forward after inverse " + fmt(rep.roundtrip_forward_after_inverse));
    double amin = INFINITY;
    for (double a : rep.block_alpha) amin = std::min(amin, a);
    c.expect(amin >= 1 - 0.9 - 1e-6, "block alpha " + fmt(amin));
    bool refused = false;
    try {
      InvertibleResidualChain bad(acceptance_chain(N, 2, 1.5, CoordinateActivation::groupsort2(), 60), 1.5);
    } catch (const std::invalid_argument&) {
      refused = true;
    }
    c.expect(refused, "delta = 1.5 chain was certified");
    return "roundtrips " + fmt(rep.roundtrip_inverse_after_forward) + ", " + fmt(rep.roundtrip_forward_after_inverse) +
           "; min block alpha " + fmt(amin) + "; delta 1.5 refused";
  });
}

inline CriterionResult criterion_galerkin_nogo() {
  using namespace acceptance;
  return timed(7, "Galerkin singularity witness", [](Checker& c) {
    const auto grid = uniform_grid(0.0, 1.0, 43);
    const auto sc = singularity_scan(PathKind::A, 5, PathBasis::fourier, grid);
    c.expect(sc.sign_at_start == 1 && sc.sign_at_end == -1, "endpoint signs");
    c.expect(sc.found && std::abs(sc.det_at_star) < 1e-10, "|det(s*)| " + fmt(sc.det_at_star));
    const auto one = singularity_scan(PathKind::A, 1, PathBasis::fourier, uniform_grid(0.0, 1.0, 40));
    c.expect(one.found && std::abs(one.s_star - 0.5) <= 1e-9, "n=1 crossing " + fmt(one.s_star));
    const ScalarFn u = [](double t) { return std::exp(t) * std::sin(7 * t) + 0.3; };
    double defect = 0.0;
    for (double s : grid) defect = std::max(defect, multiplication_isometry_defect(s, u));
    c.expect(defect <= 1e-10, "isometry defect " + fmt(defect));
    std::ostringstream os;
    os << std::setprecision(12) << "s*=" << sc.s_star << " |det|=" << std::setprecision(3) << std::abs(sc.det_at_star)
       << "; n=1 s*=" << std::setprecision(15) << one.s_star << "; isometry defect " << std::setprecision(3) << defect;
    return os.str();
  });
}

inline CriterionResult criterion_isotopy_nogo() {
  using namespace acceptance;
  return timed(8, "isotopy truncation witness", [](Checker& c) {
    const int m = 7;
    const auto grid = isotopy_grid(101, 12);
    const auto sc = truncated_det_scan(m, grid);
    c.expect(std::abs(sc.rows.front().det - 1.0) < 1e-12 && std::abs(sc.rows.back().det + 1.0) < 1e-12, "endpoint dets");
    c.expect(!sc.crossings.empty(), "no crossing");
    double width = 0.0;
    for (const auto& [lo, hi] : sc.crossings) width = std::max(width, hi - lo);
    c.expect(width <= 1e-6, "bracket " + fmt(width));
    // full blocks: the uncut rotation matrices on either half are orthogonal
    double orth = 0.0;
    for (double t : grid) {
      const Mat H = t <= 0.5 ? rotation_path(2 * t, m + 1) : shifted_rotation_path(2 - 2 * t, m + 2);
      orth = std::max(orth, (H.transpose() * H - Mat::Identity(H.rows(), H.cols())).norm());
    }
    c.expect(orth <= 1e-10, "orthogonality defect " + fmt(orth));
    std::ostringstream os;
    os << sc.crossings.size() << " crossing(s), first at " << std::setprecision(12) << sc.crossings.front().first
       << ", bracket " << std::setprecision(3) << width << "; orthogonality defect " << orth;
    return os.str();
  });
}

inline CriterionResult criterion_fem() {
  using namespace acceptance;
  return timed(9, "FEM Galerkin convergence", [](Checker& c) {
    const std::vector<int> meshes{16, 32, 64, 128};
    std::string out;
    for (const auto& g : {ConvexNonlinearity::zero(), ConvexNonlinearity::linear()}) {
      const auto p = manufactured_sine(g);
      const auto rows = fem_convergence(p.source, g, meshes);
      for (std::size_t i = 1; i < rows.size(); ++i)
        c.expect(rows[i].ratio >= 1.7 && rows[i].ratio <= 2.3, g.name + " ratio " + fmt(rows[i].ratio));
      for (int n : meshes) {
        const auto res = solve_semilinear(p.source, FemMesh(n, BoundaryCondition::dirichlet_dirichlet), g);
        for (std::size_t k = 1; k < res.energies.size(); ++k)
          c.expect(res.energies[k] <= res.energies[k - 1], g.name + " energy increased");
      }
      out += (out.empty() ? "" : "; ") + g.name + " ratios";
      for (std::size_t i = 1; i < rows.size(); ++i) out += " " + fmt(rows[i].ratio);
    }
    return out;
  });
}

inline CriterionResult criterion_orientation() {
  using namespace acceptance;
  return timed(10, "orientation stability", [](Checker& c) {
    const int M = 16, d = 6;
    const auto L = make_layer(2, {.rank = 8, .decay = 1.0, .lip_G = 0.45}, fourier_space(M));
    const MapPath path = [&](double t) { return Map([&, t](const Vec& x) { return Vec((1 - t) * x + t * L(x)); }); };
    int changes = 0, negative = 0;
    for (const auto& x : sample_ball_prefix(M, d, 1.0, 8, 1.0, 3)) {
      const auto scan = orientation_scan(path, uniform_grid(0, 1, 21), d, x);
      changes += scan.sign_changes();
      for (const auto& r : scan.rows) negative += r.sign != 1;
    }
    c.expect(changes == 0 && negative == 0, "monotone path changed orientation");
    const MapPath flip = [](double t) { return Map([t](const Vec& x) { return Vec((1 - 2 * t) * x); }); };
    const auto fs = orientation_scan(flip, uniform_grid(0, 1, 20), 5, Vec::Zero(8));
    c.expect(fs.sign_changes() == 1, "flip path has " + std::to_string(fs.sign_changes()) + " sign changes");
    if (fs.sign_changes() == 1) {
      const auto [lo, hi] = fs.crossings[0];
      c.expect(std::abs(lo - 0.5) <= 1e-6 && std::abs(hi - 0.5) <= 1e-6, "flip at [" + fmt(lo) + ", " + fmt(hi) + "]");
    }
    std::ostringstream os;
    os << "monotone path: 0 sign changes over 8 points; flip bracket [" << std::setprecision(10)
       << fs.crossings.at(0).first << ", " << fs.crossings.at(0).second << "]";
    return os.str();
  });
}

/// Wall-clock budgets per criterion, in seconds (0 means none).
inline double time_budget(int id) {
  switch (id) {
    case 1: return 60.0;
    case 4: return 600.0;
    case 9: return 30.0;
    default: return 0.0;
  }
}

inline std::vector<std::function<CriterionResult()>> acceptance_suite() {
  return {criterion_monotonicity, criterion_discretization, criterion_continuity, criterion_decomposition,
          criterion_fixed_point,  criterion_residual_chain, criterion_galerkin_nogo, criterion_isotopy_nogo,
          criterion_fem,          criterion_orientation};
}

/// Runs one criterion and applies its time budget.
inline CriterionResult run_criterion(const std::function<CriterionResult()>& fn) {
  auto r = fn();
  const double budget = time_budget(r.id);
  if (r.pass && budget > 0 && r.seconds > budget) {
    r.pass = false;
    r.detail += " (took " + acceptance::fmt(r.seconds) + " s, budget " + acceptance::fmt(budget) + " s)";
  }
  return r;
}

inline std::string format_result(const CriterionResult& r) {
  std::ostringstream os;
  os << (r.pass ? "PASS" : "FAIL") << "  [" << r.id << "] " << r.name << " (" << std::fixed << std::setprecision(2)
     << r.seconds << " s): " << r.detail;
  return os.str();
}

}  // namespace nolab
