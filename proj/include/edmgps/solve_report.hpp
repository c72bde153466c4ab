#pragma once

#include <string>
#include <utility>

#include "edmgps/consistency.hpp"
#include "edmgps/position.hpp"

namespace edmgps {

struct SolveOptions {
  ConsistencyTolerances consistency;
  double root_ftol = 1e-13;  // |g| or |f| <= root_ftol * max(1, |h|)
  double root_xtol = 1e-15;  // bracket width relative to the pole location
  int max_iter = 200;
  // |kappa(dm)| <= exact_tol * max(1, mean|dm|): dm is already feasible to
  // round-off and is returned unchanged. Wider than this, the root is found
  // even when the verdict band calls dm consistent.
  double exact_tol = 1e-12;
};

/// Outcome of one projection. `y_star` is in the working frame; `fix.q_world`
/// is the receiver in meters.
struct SolveReport {
  double lambda_star = 0.0;
  Vector y_star;
  PositionFix fix;
  double kappa_residual = 0.0;
  double secular_residual = 0.0;
  double objective = 0.0;  // |y* - dm|^2
  int iterations = 0;
  std::pair<double, double> bracket{0.0, 0.0};
  std::string method;
  ConsistencyVerdict verdict;  // of the input measurement
  bool converged = true;
  bool fallback = false;  // a degenerate secular problem was rerouted

  const Vector& q() const { return fix.q_world; }
};

namespace detail {

inline bool already_feasible(double kappa_dm, const Vector& dm, const SolveOptions& opts) {
  return std::abs(kappa_dm) <= opts.exact_tol * std::max(1.0, dm.cwiseAbs().mean());
}

inline void finish_report(SolveReport& rep, const Measurement& dm, const EdmBundle& bundle,
                          const SolveOptions& opts) {
  rep.kappa_residual = kappa(rep.y_star, bundle);
  rep.objective = (rep.y_star - dm.dm).squaredNorm();
  rep.fix = recover_position(rep.y_star, bundle, opts.consistency.gale_tol);
}

}  // namespace detail

}  // namespace edmgps
