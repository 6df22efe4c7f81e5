#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "nolab/smooth_step.hpp"
#include "nolab/spectral_core.hpp"

namespace nolab {

/// Angle of the i-th (1-based) rotation block at the internal time tau = 1/(1-t).
inline double block_angle(int i, double tau) { return smooth_step(tau - i) * std::numbers::pi; }

namespace detail {

/// Block-diagonal rotations starting at coordinate `offset`, blocks numbered from 1, on an n x n matrix.
/// A block cut by the boundary keeps only its top-left entry.
inline void place_rotations(Mat& out, int offset, double t) {
  const int n = static_cast<int>(out.rows());
  if (t >= 1.0) {
    for (int c = offset; c < n; ++c) out(c, c) = -1.0;
    return;
  }
  const double tau = 1.0 / (1.0 - t);
  for (int i = 1;; ++i) {
    const int a = offset + 2 * (i - 1);
    if (a >= n) break;
    const double th = block_angle(i, tau);
    const double c = std::cos(th), s = std::sin(th);
    out(a, a) = c;
    if (a + 1 < n) {
      out(a, a + 1) = s;
      out(a + 1, a) = -s;
      out(a + 1, a + 1) = c;
    }
  }
}

}  // namespace detail

/// Rotation path on R^m: identity at t = 0, -I at t = 1. m must be even so no block is cut.
inline Mat rotation_path(double t, int m) {
  if (m < 2 || m % 2) throw std::invalid_argument("rotation_path: m must be even and positive");
  if (t < 0.0 || t > 1.0) throw std::invalid_argument("rotation_path: t must lie in [0,1]");
  Mat out = Mat::Zero(m, m);
  detail::place_rotations(out, 0, t);
  return out;
}

/// diag(-1, rotation_path) on R^m; m must be odd.
inline Mat shifted_rotation_path(double t, int m) {
  if (m < 1 || m % 2 == 0) throw std::invalid_argument("shifted_rotation_path: m must be odd");
  if (t < 0.0 || t > 1.0) throw std::invalid_argument("shifted_rotation_path: t must lie in [0,1]");
  Mat out = Mat::Zero(m, m);
  out(0, 0) = -1.0;
  detail::place_rotations(out, 1, t);
  return out;
}

/// Compression to the first d coordinates of the glued isotopy: identity at t = 0, -I at t = 1/2,
/// diag(-1, I) at t = 1. Blocks that straddle coordinate d are cut.
inline Mat isotopy_matrix(double t, int d) {
  if (d < 1) throw std::invalid_argument("isotopy_matrix: d must be positive");
  if (t < 0.0 || t > 1.0) throw std::invalid_argument("isotopy_matrix: t must lie in [0,1]");
  Mat out = Mat::Zero(d, d);
  if (t <= 0.5) {
    detail::place_rotations(out, 0, 2.0 * t);
  } else {
    out(0, 0) = -1.0;
    detail::place_rotations(out, 1, 2.0 - 2.0 * t);
  }
  return out;
}

inline Vec isotopy_apply(const Vec& v, double t) { return isotopy_matrix(t, static_cast<int>(v.size())) * v; }

/// True when the d-dimensional compression equals the restriction of the infinite operator, i.e. the block
/// crossing coordinate d and all later blocks are still the identity.
inline bool truncation_faithful(double t, int d) {
  const bool first_half = t <= 0.5;
  const double tt = first_half ? 2.0 * t : 2.0 - 2.0 * t;
  if (tt >= 1.0) return false;  // every block is -I: the infinite tail is never captured
  const int offset = first_half ? 0 : 1;
  // first block not wholly inside the d coordinates
  int i_out = 1;
  while (offset + 2 * i_out <= d) ++i_out;
  return 1.0 / (1.0 - tt) <= i_out;
}

struct IsotopyRow {
  double t = 0.0;
  double det = 0.0;
  double min_sv = 0.0;
  bool faithful = false;
};

struct IsotopyScan {
  std::vector<IsotopyRow> rows;
  std::vector<std::pair<double, double>> crossings;  // bisection brackets of det sign changes
  std::vector<double> crossing_dets;                  // |det| at the reported crossing point
  int d = 0;
};

/// Default grid: uniform points plus 1/2 (1 - 2^-k) so the block index k*(t) runs up to the truncation.
inline std::vector<double> isotopy_grid(int n_uniform, int k_max) {
  std::vector<double> g;
  for (int i = 0; i < n_uniform; ++i) g.push_back(static_cast<double>(i) / (n_uniform - 1));
  for (int k = 1; k <= k_max; ++k) g.push_back(0.5 * (1.0 - std::ldexp(1.0, -k)));
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

/// det and smallest singular value of the d-dimensional compression along t, with bisection on sign changes.
inline IsotopyScan truncated_det_scan(int d, const std::vector<double>& t_grid, double bisect_tol = 1e-12) {
  if (d < 1) throw std::invalid_argument("truncated_det_scan: d must be positive");
  IsotopyScan scan;
  scan.d = d;
  auto det_at = [d](double t) { return isotopy_matrix(t, d).determinant(); };
  for (double t : t_grid) {
    const Mat H = isotopy_matrix(t, d);
    Eigen::JacobiSVD<Mat> svd(H);
    scan.rows.push_back({t, H.determinant(), svd.singularValues().minCoeff(), truncation_faithful(t, d)});
  }
  auto sgn = [](double x) { return (x > 0) - (x < 0); };
  for (std::size_t i = 0; i + 1 < scan.rows.size(); ++i) {
    double lo = scan.rows[i].t, hi = scan.rows[i + 1].t;
    double flo = scan.rows[i].det, fhi = scan.rows[i + 1].det;
    if (flo == 0.0) {
      if (i == 0 || scan.rows[i - 1].det != 0.0) {
        scan.crossings.emplace_back(lo, lo);
        scan.crossing_dets.push_back(0.0);
      }
      continue;
    }
    if (fhi == 0.0 || sgn(flo) == sgn(fhi)) continue;
    while (hi - lo > bisect_tol) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      const double fm = det_at(mid);
      if (fm == 0.0) {
        lo = hi = mid;
        break;
      }
      if (sgn(fm) == sgn(flo)) {
        lo = mid;
        flo = fm;
      } else {
        hi = mid;
      }
    }
    scan.crossings.emplace_back(lo, hi);
    scan.crossing_dets.push_back(std::min(std::abs(det_at(lo)), std::abs(det_at(hi))));
  }
  return scan;
}

}  // namespace nolab
