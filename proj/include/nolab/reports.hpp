#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <vector>

#include "nolab/discretize.hpp"
#include "nolab/galerkin_fem.hpp"
#include "nolab/nogo_isotopy.hpp"

namespace nolab {

/// Measured discretization error next to the growth shape of the approximation-size bound
/// (unit constant, relative scaling only). The networks themselves are never built.
struct QuantRow {
  int dim = 0;
  double eps_V = 0.0;
  double layers_bound = 0.0;     // log2((1 + r) / eps_V)
  double nonzeros_bound = 0.0;   // eps_V^-d log2((1 + r) / eps_V)
  double log10_nonzeros = 0.0;   // the nonzero column overflows quickly; its log stays readable
};

struct QuantReport {
  std::vector<QuantRow> rows;
  double radius = 0.0;
  int samples = 0;
  std::uint64_t seed = 0;

  static constexpr const char* header_note =
      "measured eps_V with unit-constant size-bound columns; networks are not synthesized";

  void write_csv(std::ostream& os) const {
    os << "dim,eps_v,layers_bound,nonzeros_bound,log10_nonzeros_bound\n" << std::setprecision(17);
    for (const auto& r : rows)
      os << r.dim << ',' << r.eps_V << ',' << r.layers_bound << ',' << r.nonzeros_bound << ',' << r.log10_nonzeros
         << '\n';
  }
};

inline QuantRow quant_row(int d, double eps_V, double r) {
  QuantRow row;
  row.dim = d;
  row.eps_V = eps_V;
  if (eps_V <= 0.0) return row;
  const double lg = std::log2((1.0 + r) / eps_V);
  row.layers_bound = lg;
  row.log10_nonzeros = -d * std::log10(eps_V) + (lg > 0 ? std::log10(lg) : -INFINITY);
  row.nonzeros_bound = std::pow(eps_V, -d) * lg;
  return row;
}

/// eps_V measured as the functor error on a common sample set of B(0, r).
inline QuantReport quant_report(const Map& F, int M, const std::vector<int>& dims, double r, int n, std::uint64_t seed) {
  QuantReport rep;
  rep.radius = r;
  rep.samples = n;
  rep.seed = seed;
  const auto xs = sample_ball(M, r, n, 1.0, seed);
  for (int d : dims) {
    if (d < 1 || d > M) throw std::invalid_argument("quant_report: dimension out of range");
    rep.rows.push_back(quant_row(d, functor_A_error(F, d, xs), r));
  }
  return rep;
}

inline void write_singularity_csv(std::ostream& os, const SingularityScan& sc) {
  os << "s,det,min_sv\n" << std::setprecision(17);
  for (const auto& r : sc.rows) os << r.s << ',' << r.det << ',' << r.min_sv << '\n';
}

inline void write_isotopy_csv(std::ostream& os, const IsotopyScan& sc) {
  os << "t,det,min_sv\n" << std::setprecision(17);
  for (const auto& r : sc.rows) os << r.t << ',' << r.det << ',' << r.min_sv << '\n';
}

inline void write_fem_csv(std::ostream& os, const std::vector<FemConvergenceRow>& rows) {
  os << "elements,h,h1_error,h1_error_exact,ratio,max_nodal_error\n" << std::setprecision(17);
  for (const auto& r : rows)
    os << r.elements << ',' << r.h << ',' << r.h1_error << ',' << r.h1_error_exact << ',' << r.ratio << ','
       << r.max_nodal_error << '\n';
}

}  // namespace nolab
