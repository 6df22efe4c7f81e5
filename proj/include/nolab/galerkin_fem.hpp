#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "nolab/discretize.hpp"
#include "nolab/quadrature.hpp"
#include "nolab/spectral_core.hpp"

namespace nolab {

/// Symmetric or general tridiagonal matrix: sub[i] = A(i+1, i), sup[i] = A(i, i+1).
struct Tridiagonal {
  Vec sub, diag, sup;

  explicit Tridiagonal(int n = 0) : sub(Vec::Zero(std::max(n - 1, 0))), diag(Vec::Zero(n)), sup(Vec::Zero(std::max(n - 1, 0))) {}

  int size() const { return static_cast<int>(diag.size()); }

  Vec operator*(const Vec& x) const {
    const int n = size();
    Vec y = diag.cwiseProduct(x);
    for (int i = 0; i + 1 < n; ++i) {
      y[i] += sup[i] * x[i + 1];
      y[i + 1] += sub[i] * x[i];
    }
    return y;
  }

  Mat dense() const {
    const int n = size();
    Mat A = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) A(i, i) = diag[i];
    for (int i = 0; i + 1 < n; ++i) {
      A(i, i + 1) = sup[i];
      A(i + 1, i) = sub[i];
    }
    return A;
  }

  /// Thomas algorithm (no pivoting; fine for the diagonally dominant systems used here).
  Vec solve(const Vec& rhs) const {
    const int n = size();
    if (rhs.size() != n) throw DimensionError("Tridiagonal::solve: size mismatch");
    Vec c(n), d(n);
    double den = diag[0];
    if (den == 0.0) throw std::runtime_error("Tridiagonal::solve: zero pivot");
    c[0] = n > 1 ? sup[0] / den : 0.0;
    d[0] = rhs[0] / den;
    for (int i = 1; i < n; ++i) {
      den = diag[i] - sub[i - 1] * c[i - 1];
      if (den == 0.0) throw std::runtime_error("Tridiagonal::solve: zero pivot");
      c[i] = i + 1 < n ? sup[i] / den : 0.0;
      d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / den;
    }
    Vec x(n);
    x[n - 1] = d[n - 1];
    for (int i = n - 2; i >= 0; --i) x[i] = d[i] - c[i] * x[i + 1];
    return x;
  }

  /// True when symmetric and every LDL^T pivot is positive.
  bool is_spd() const {
    if ((sub - sup).cwiseAbs().maxCoeff() > 1e-14 * std::max(1.0, diag.cwiseAbs().maxCoeff())) return false;
    double piv = diag[0];
    if (!(piv > 0)) return false;
    for (int i = 1; i < size(); ++i) {
      piv = diag[i] - sub[i - 1] * sub[i - 1] / piv;
      if (!(piv > 0)) return false;
    }
    return true;
  }
};

enum class BoundaryCondition { dirichlet_dirichlet, dirichlet_neumann };

/// Uniform mesh on [0,1] with hat functions on the free nodes.
class FemMesh {
 public:
  FemMesh(int elements, BoundaryCondition bc) : n_(elements), bc_(bc) {
    if (elements < 1) throw std::invalid_argument("FemMesh: need at least one element");
    if (bc == BoundaryCondition::dirichlet_dirichlet && elements < 2)
      throw std::invalid_argument("FemMesh: Dirichlet at both ends needs two elements");
  }

  int elements() const { return n_; }
  double h() const { return 1.0 / n_; }
  BoundaryCondition bc() const { return bc_; }
  /// Number of unknowns: interior nodes, plus the node at t = 1 for a Neumann end.
  int dofs() const { return bc_ == BoundaryCondition::dirichlet_dirichlet ? n_ - 1 : n_; }
  /// Node index of unknown j.
  int node_of(int j) const { return j + 1; }
  double node(int i) const { return static_cast<double>(i) / n_; }

  /// Value of hat j at t.
  double hat(int j, double t) const {
    const double c = node(node_of(j));
    const double v = 1.0 - std::abs(t - c) / h();
    return v > 0 ? v : 0.0;
  }

  /// Derivative of hat j at t (interior of an element).
  double hat_derivative(int j, double t) const {
    const double c = node(node_of(j));
    if (t > c - h() && t < c) return 1.0 / h();
    if (t > c && t < c + h()) return -1.0 / h();
    return 0.0;
  }

  /// Unknowns -> nodal values including the boundary.
  Vec nodal_values(const Vec& w) const {
    Vec u = Vec::Zero(n_ + 1);
    for (int j = 0; j < dofs(); ++j) u[node_of(j)] = w[j];
    return u;
  }

  std::vector<double> breakpoints() const {
    std::vector<double> b;
    for (int i = 0; i <= n_; ++i) b.push_back(node(i));
    return b;
  }

 private:
  int n_;
  BoundaryCondition bc_;
};

/// b_jk = int chi_j' chi_k'.
inline Tridiagonal assemble_stiffness(const FemMesh& mesh) {
  const int d = mesh.dofs();
  const double h = mesh.h();
  Tridiagonal B(d);
  for (int j = 0; j < d; ++j) B.diag[j] = 2.0 / h;
  if (mesh.bc() == BoundaryCondition::dirichlet_neumann) B.diag[d - 1] = 1.0 / h;  // half hat at t = 1
  for (int j = 0; j + 1 < d; ++j) B.sub[j] = B.sup[j] = -1.0 / h;
  return B;
}

/// Scalar nonlinearity g = G' with G convex.
struct ConvexNonlinearity {
  std::string name = "zero";
  std::function<double(double)> g = [](double) { return 0.0; };
  std::function<double(double)> dg = [](double) { return 0.0; };
  std::function<double(double)> G = [](double) { return 0.0; };

  static ConvexNonlinearity zero() { return {}; }
  static ConvexNonlinearity linear() {
    return {"linear", [](double u) { return u; }, [](double) { return 1.0; }, [](double u) { return 0.5 * u * u; }};
  }
  static ConvexNonlinearity cubic() {
    return {"cubic", [](double u) { return u * u * u; }, [](double u) { return 3.0 * u * u; },
            [](double u) { return 0.25 * u * u * u * u; }};
  }
  static ConvexNonlinearity from_name(const std::string& n) {
    if (n == "zero") return zero();
    if (n == "linear") return linear();
    if (n == "cubic") return cubic();
    throw std::invalid_argument("unknown nonlinearity: " + n);
  }

  /// g nondecreasing on a sampled grid.
  bool monotone_on(double a, double b, int n = 2001) const {
    double prev = g(a);
    for (int i = 1; i < n; ++i) {
      const double v = g(a + (b - a) * i / (n - 1));
      if (v < prev) return false;
      prev = v;
    }
    return true;
  }
};

using ScalarFn = std::function<double(double)>;

struct SemilinearResult {
  Vec w;                        // coefficients on the free nodes
  std::vector<double> energies; // energy after each accepted step, starting at the initial iterate
  std::vector<double> residuals;
  int iterations = 0;
};

struct NewtonStagnation : std::runtime_error {
  double last_residual;
  NewtonStagnation(const std::string& w, double r) : std::runtime_error(w), last_residual(r) {}
};

namespace detail {

/// Four-point Gauss rule on each element, evaluated through a callback f(element, t, weight, local values).
template <class Fn>
void for_each_element_point(const FemMesh& mesh, Fn&& f) {
  static const QuadratureRule ref = gauss_legendre(4);
  const double h = mesh.h();
  for (int e = 0; e < mesh.elements(); ++e) {
    const double a = e * h;
    for (std::size_t q = 0; q < ref.size(); ++q) {
      const double t = a + 0.5 * h * (ref.nodes[q] + 1.0);
      const double w = 0.5 * h * ref.weights[q];
      const double xi = (t - a) / h;  // local coordinate in [0,1]
      f(e, t, w, xi);
    }
  }
}

}  // namespace detail

/// Energy 1/2 w^T B w + int G(w_h) + int x w_h, whose gradient is the Galerkin residual.
inline double semilinear_energy(const FemMesh& mesh, const Tridiagonal& B, const ConvexNonlinearity& g, const ScalarFn& x,
                                const Vec& w) {
  const Vec u = mesh.nodal_values(w);
  double E = 0.5 * w.dot(B * w);
  detail::for_each_element_point(mesh, [&](int e, double t, double wt, double xi) {
    const double uh = (1 - xi) * u[e] + xi * u[e + 1];
    E += wt * (g.G(uh) + x(t) * uh);
  });
  return E;
}

/// Residual Bw + int g(w_h) chi_j + int x chi_j and the tangent matrix.
inline Vec semilinear_residual(const FemMesh& mesh, const Tridiagonal& B, const ConvexNonlinearity& g, const ScalarFn& x,
                               const Vec& w, Tridiagonal* tangent = nullptr) {
  const Vec u = mesh.nodal_values(w);
  Vec r = B * w;
  if (tangent) *tangent = B;
  const int d = mesh.dofs();
  // nodal index -> unknown index
  auto dof = [&](int node) { return (node >= 1 && node - 1 < d) ? node - 1 : -1; };
  detail::for_each_element_point(mesh, [&](int e, double t, double wt, double xi) {
    const double uh = (1 - xi) * u[e] + xi * u[e + 1];
    const double phi[2] = {1 - xi, xi};
    const int ids[2] = {dof(e), dof(e + 1)};
    const double src = g.g(uh) + x(t);
    const double slope = g.dg(uh);
    for (int a = 0; a < 2; ++a) {
      if (ids[a] < 0) continue;
      r[ids[a]] += wt * src * phi[a];
      if (!tangent) continue;
      for (int b = 0; b < 2; ++b) {
        if (ids[b] < 0) continue;
        const double v = wt * slope * phi[a] * phi[b];
        if (ids[a] == ids[b]) tangent->diag[ids[a]] += v;
        else if (ids[b] == ids[a] + 1) tangent->sup[ids[a]] += v;
        else tangent->sub[ids[b]] += v;
      }
    }
  });
  return r;
}

/// Damped Newton on the Galerkin system for  u'' - g(u) = x,  with backtracking on the energy.
inline SemilinearResult solve_semilinear(const ScalarFn& x, const FemMesh& mesh, const ConvexNonlinearity& g,
                                         double tol = 1e-10, int max_iter = 100) {
  const Tridiagonal B = assemble_stiffness(mesh);
  SemilinearResult res;
  Vec w = Vec::Zero(mesh.dofs());
  double E = semilinear_energy(mesh, B, g, x, w);
  res.energies.push_back(E);
  for (int it = 0; it < max_iter; ++it) {
    Tridiagonal Jt;
    const Vec r = semilinear_residual(mesh, B, g, x, w, &Jt);
    const double rn = r.norm();
    res.residuals.push_back(rn);
    if (rn <= tol) {
      res.w = w;
      res.iterations = it;
      return res;
    }
    const Vec step = Jt.solve(-r);
    double lambda = 1.0;
    const double slope = r.dot(step);
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      const Vec trial = w + lambda * step;
      const double Et = semilinear_energy(mesh, B, g, x, trial);
      if (Et <= E + 1e-4 * lambda * slope) {
        w = trial;
        E = Et;
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) {
      // the energy is flat to rounding: accept the full step if it reduces the residual
      const Vec trial = w + step;
      if (semilinear_residual(mesh, B, g, x, trial).norm() < rn) {
        w = trial;
        E = std::min(E, semilinear_energy(mesh, B, g, x, w));
      } else {
        throw NewtonStagnation("solve_semilinear: line search failed", rn);
      }
    }
    res.energies.push_back(E);
  }
  const double last = semilinear_residual(mesh, B, g, x, w).norm();
  if (last <= tol) {
    res.w = w;
    res.iterations = max_iter;
    return res;
  }
  throw NewtonStagnation("solve_semilinear: max_iter exceeded", last);
}

/// |u_coarse - u_fine|_{H1} with the coarse mesh nested in the fine one (both piecewise linear).
inline double h1_seminorm_difference(const FemMesh& coarse, const Vec& wc, const FemMesh& fine, const Vec& wf) {
  if (fine.elements() % coarse.elements() != 0) throw std::invalid_argument("h1 difference: meshes not nested");
  const int ratio = fine.elements() / coarse.elements();
  const Vec uc = coarse.nodal_values(wc), uf = fine.nodal_values(wf);
  double s = 0.0;
  for (int e = 0; e < fine.elements(); ++e) {
    const int ce = e / ratio;
    const double dc = (uc[ce + 1] - uc[ce]) / coarse.h();
    const double df = (uf[e + 1] - uf[e]) / fine.h();
    s += fine.h() * (dc - df) * (dc - df);
  }
  return std::sqrt(s);
}

/// |u_h - u|_{H1} against an exact derivative.
inline double h1_seminorm_error(const FemMesh& mesh, const Vec& w, const ScalarFn& du) {
  const Vec u = mesh.nodal_values(w);
  double s = 0.0;
  static const QuadratureRule ref = gauss_legendre(8);
  const double h = mesh.h();
  for (int e = 0; e < mesh.elements(); ++e) {
    const double slope = (u[e + 1] - u[e]) / h;
    for (std::size_t q = 0; q < ref.size(); ++q) {
      const double t = e * h + 0.5 * h * (ref.nodes[q] + 1.0);
      const double diff = slope - du(t);
      s += 0.5 * h * ref.weights[q] * diff * diff;
    }
  }
  return std::sqrt(s);
}

struct ManufacturedProblem {
  ScalarFn source;
  ScalarFn exact;
  ScalarFn exact_derivative;
};

/// u = sin(pi t) for the chosen nonlinearity.
inline ManufacturedProblem manufactured_sine(const ConvexNonlinearity& g) {
  constexpr double pi = std::numbers::pi;
  ManufacturedProblem p;
  p.exact = [](double t) { return std::sin(pi * t); };
  p.exact_derivative = [](double t) { return pi * std::cos(pi * t); };
  auto gg = g.g;
  p.source = [gg](double t) {
    const double u = std::sin(pi * t);
    return -pi * pi * u - gg(u);
  };
  return p;
}

struct FemConvergenceRow {
  int elements = 0;
  double h = 0.0;
  double h1_error = 0.0;        // against the fine-mesh reference
  double h1_error_exact = -1.0; // against the exact derivative, when known
  double ratio = 0.0;           // previous error / this error
  double max_nodal_error = -1.0;
};

/// H1-seminorm errors on the given meshes against a reference solve on a mesh `refine` times finer than the finest.
inline std::vector<FemConvergenceRow> fem_convergence(const ScalarFn& x, const ConvexNonlinearity& g,
                                                      const std::vector<int>& meshes, int refine = 8,
                                                      const ScalarFn& exact = nullptr, const ScalarFn& exact_du = nullptr) {
  if (meshes.empty()) return {};
  const int finest = *std::max_element(meshes.begin(), meshes.end());
  const FemMesh ref_mesh(finest * refine, BoundaryCondition::dirichlet_dirichlet);
  const Vec w_ref = solve_semilinear(x, ref_mesh, g, 1e-11).w;
  std::vector<FemConvergenceRow> rows;
  for (int n : meshes) {
    const FemMesh mesh(n, BoundaryCondition::dirichlet_dirichlet);
    const Vec w = solve_semilinear(x, mesh, g, 1e-11).w;
    FemConvergenceRow row;
    row.elements = n;
    row.h = mesh.h();
    row.h1_error = h1_seminorm_difference(mesh, w, ref_mesh, w_ref);
    if (exact_du) row.h1_error_exact = h1_seminorm_error(mesh, w, exact_du);
    if (exact) {
      const Vec u = mesh.nodal_values(w);
      row.max_nodal_error = 0;
      for (int i = 0; i <= n; ++i) row.max_nodal_error = std::max(row.max_nodal_error, std::abs(u[i] - exact(mesh.node(i))));
    }
    if (!rows.empty()) row.ratio = rows.back().h1_error / row.h1_error;
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Operator paths whose Galerkin matrices must become singular.

enum class PathKind { A, B };
enum class PathBasis { fourier, hat };

namespace detail {

/// int_0^s cos(w t) dt and int_0^s sin(w t) dt.
inline double int_cos(double w, double s) { return w == 0.0 ? s : std::sin(w * s) / w; }
inline double int_sin(double w, double s) { return w == 0.0 ? 0.0 : (1.0 - std::cos(w * s)) / w; }

/// int_0^s psi_j psi_k for the Fourier basis, by product-to-sum identities.
inline double fourier_product_integral(int j, int k, double s) {
  const double two_pi = 2.0 * std::numbers::pi;
  const int kj = fourier_frequency(j), kk = fourier_frequency(k);
  const bool cj = (j == 0) || (j % 2 == 1), ck = (k == 0) || (k % 2 == 1);  // cosine type
  const double aj = j == 0 ? 1.0 : std::numbers::sqrt2, ak = k == 0 ? 1.0 : std::numbers::sqrt2;
  const double wm = two_pi * (kj - kk), wp = two_pi * (kj + kk);
  double v;
  if (cj && ck) v = 0.5 * (int_cos(wm, s) + int_cos(wp, s));
  else if (!cj && !ck) v = 0.5 * (int_cos(wm, s) - int_cos(wp, s));
  else if (!cj && ck) v = 0.5 * (int_sin(wp, s) + int_sin(wm, s));   // sin(a) cos(b)
  else v = 0.5 * (int_sin(wp, s) - int_sin(wm, s));                  // cos(a) sin(b) = sin(b) cos(a)
  return aj * ak * v;
}

}  // namespace detail

/// Galerkin matrix of multiplication by sign(t - s) (kind A) or of -d/dt((1+t) sign(t-s) d/dt) with
/// u(0) = 0, u'(1) = 0 (kind B).
inline Mat galerkin_path_matrix(PathKind kind, double s, int n, PathBasis basis) {
  if (n < 1) throw std::invalid_argument("galerkin_path_matrix: n must be positive");
  if (s < 0.0 || s > 1.0) throw std::invalid_argument("galerkin_path_matrix: s must lie in [0,1]");
  Mat A(n, n);
  if (basis == PathBasis::fourier) {
    if (kind == PathKind::B) throw std::invalid_argument("galerkin_path_matrix: Fourier basis lacks the mixed boundary conditions");
    for (int j = 0; j < n; ++j)
      for (int k = j; k < n; ++k) {
        const double v = (j == k ? 1.0 : 0.0) - 2.0 * detail::fourier_product_integral(j, k, s);
        A(j, k) = A(k, j) = v;
      }
    return A;
  }
  const FemMesh mesh(n, BoundaryCondition::dirichlet_neumann);
  const auto breaks = mesh.breakpoints();
  auto sgn = [s](double t) { return t < s ? -1.0 : 1.0; };
  for (int j = 0; j < n; ++j)
    for (int k = j; k < n; ++k) {
      if (std::abs(j - k) > 1) {
        A(j, k) = A(k, j) = 0.0;
        continue;
      }
      std::vector<double> cuts = breaks;
      cuts.push_back(s);
      double v;
      if (kind == PathKind::A) {
        v = integrate_split([&](double t) { return sgn(t) * mesh.hat(j, t) * mesh.hat(k, t); }, 0.0, 1.0, cuts, 4);
      } else {
        v = integrate_split(
            [&](double t) { return (1.0 + t) * sgn(t) * mesh.hat_derivative(j, t) * mesh.hat_derivative(k, t); }, 0.0,
            1.0, cuts, 4);
      }
      A(j, k) = A(k, j) = v;
    }
  return A;
}

inline double min_singular_value(const Mat& A) {
  Eigen::JacobiSVD<Mat> svd(A);
  return svd.singularValues().minCoeff();
}

struct SingularityRow {
  double s = 0.0;
  double det = 0.0;
  double min_sv = 0.0;
};

struct SingularityScan {
  std::vector<SingularityRow> rows;
  int sign_at_start = 0;
  int sign_at_end = 0;
  bool found = false;
  double s_star = 0.0;
  double s_lo = 0.0, s_hi = 0.0;
  double det_at_star = 0.0;
  double min_sv_at_star = 0.0;
};

/// Determinant and smallest singular value along s, plus bisection on the first determinant sign change.
inline SingularityScan singularity_scan(PathKind kind, int n, PathBasis basis, const std::vector<double>& s_grid,
                                        double bisect_tol = 1e-12) {
  SingularityScan out;
  auto det_at = [&](double s) { return galerkin_path_matrix(kind, s, n, basis).determinant(); };
  for (double s : s_grid) {
    const Mat A = galerkin_path_matrix(kind, s, n, basis);
    out.rows.push_back({s, A.determinant(), min_singular_value(A)});
  }
  if (out.rows.empty()) return out;
  out.sign_at_start = sign_of(out.rows.front().det);
  out.sign_at_end = sign_of(out.rows.back().det);
  for (std::size_t i = 0; i + 1 < out.rows.size() && !out.found; ++i) {
    const double d0 = out.rows[i].det, d1 = out.rows[i + 1].det;
    if (d0 == 0.0) {
      out.found = true;
      out.s_lo = out.s_hi = out.rows[i].s;
    } else if (sign_of(d0) != sign_of(d1)) {
      double lo = out.rows[i].s, hi = out.rows[i + 1].s, flo = d0;
      while (hi - lo > bisect_tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double fm = det_at(mid);
        if (fm == 0.0) {
          lo = hi = mid;
          break;
        }
        if (sign_of(fm) == sign_of(flo)) {
          lo = mid;
          flo = fm;
        } else {
          hi = mid;
        }
      }
      out.found = true;
      out.s_lo = lo;
      out.s_hi = hi;
    }
  }
  if (out.found) {
    // report the bracket end with the smaller determinant
    const double dlo = std::abs(det_at(out.s_lo)), dhi = std::abs(det_at(out.s_hi));
    out.s_star = dlo <= dhi ? out.s_lo : out.s_hi;
    const Mat A = galerkin_path_matrix(kind, out.s_star, n, basis);
    out.det_at_star = A.determinant();
    out.min_sv_at_star = min_singular_value(A);
  }
  return out;
}

/// | |A_s u| - |u| | in L2 for grid values of u, with the quadrature split at s.
inline double multiplication_isometry_defect(double s, const ScalarFn& u) {
  auto sgn = [s](double t) { return t < s ? -1.0 : 1.0; };
  const double a = integrate_split([&](double t) { const double v = sgn(t) * u(t); return v * v; }, 0.0, 1.0, {s}, 12);
  const double b = integrate_split([&](double t) { const double v = u(t); return v * v; }, 0.0, 1.0, {s}, 12);
  return std::abs(std::sqrt(a) - std::sqrt(b));
}

}  // namespace nolab
