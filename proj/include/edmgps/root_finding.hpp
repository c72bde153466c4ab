#pragma once

#include <cmath>
#include <utility>

namespace edmgps {

struct RootResult {
  double x = 0.0;
  double fx = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Root of an increasing function on (lo, hi) with f(lo) < 0 < f(hi).
/// Newton steps are taken only while they land inside the current bracket and
/// at least halve the previous step; otherwise the bracket is bisected.
/// `f_df(x)` returns {f(x), f'(x)}.
template <class FDf>
RootResult safeguarded_newton(FDf&& f_df, double lo, double hi, double ftol, double xtol,
                              int max_iter = 200) {
  RootResult res;
  double dx_old = hi - lo;
  double dx = dx_old;
  double x = 0.5 * (lo + hi);
  auto [f, df] = f_df(x);

  for (int it = 1; it <= max_iter; ++it) {
    res.iterations = it;
    if (std::abs(f) <= ftol) {
      res.converged = true;
      break;
    }
    if (f < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    if (hi - lo <= xtol) {
      res.converged = true;
      break;
    }

    const double newton = df > 0.0 ? x - f / df : lo - 1.0;
    if (newton <= lo || newton >= hi || std::abs(2.0 * f) > std::abs(dx_old * df)) {
      dx_old = dx;
      dx = 0.5 * (hi - lo);
      x = lo + dx;
    } else {
      dx_old = dx;
      dx = f / df;
      x = newton;
    }
    std::tie(f, df) = f_df(x);
  }
  res.x = x;
  res.fx = f;
  return res;
}

}  // namespace edmgps
