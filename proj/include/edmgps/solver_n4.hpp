#pragma once

#include <cmath>
#include <string>

#include "edmgps/consistency.hpp"
#include "edmgps/root_finding.hpp"
#include "edmgps/solve_report.hpp"

namespace edmgps {

/// Four satellites in R^3. With B^+ = S Lambda S^T and y = S x + dm, the
/// projection becomes min x^T x subject to x^T Lambda x - 2 c^T x - kappa(dm) = 0,
/// whose multiplier solves the secular equation g(lambda) = 0.
struct SecularProblemN4 {
  Vector mu;  // eigenvalues of B^+, descending, mu(3) == 0
  Matrix S;   // eigenvectors; S.col(3) == e/2
  Vector c;   // c(3) == 1
  double kappa_dm = 0.0;
  double h = 0.0;  // kappa_dm + sum_{i<3} c_i^2 / mu_i
  bool degenerate = false;  // c_1 ~ 0: dm - b orthogonal to the top eigenvector

  double pole() const { return 1.0 / mu(0); }
};

namespace detail {

inline void fix_column_signs(Matrix& S, Index cols) {
  for (Index j = 0; j < cols; ++j) {
    Index k = 0;
    S.col(j).cwiseAbs().maxCoeff(&k);
    if (S(k, j) < 0.0) S.col(j) = -S.col(j);
  }
}

inline void require_n4(const EdmBundle& bundle) {
  if (bundle.n() != 4 || bundle.r != 3) throw Error(ErrorKind::BadShape, "n=4 solver needs n=4, r=3");
}

}  // namespace detail

/// The nonzero eigenpairs of B^+ = V X^{-1} V^T come straight from the
/// eigenpairs of X, so S is orthogonal by construction and its last column is
/// pinned to e/2.
inline SecularProblemN4 build_secular_n4(const Measurement& dm, const EdmBundle& bundle) {
  detail::require_n4(bundle);
  if (dm.n() != 4) throw Error(ErrorKind::BadShape, "measurement length must be 4");

  SecularProblemN4 sp;
  sp.mu = Vector::Zero(4);
  sp.S = Matrix::Zero(4, 4);
  // bundle.x_eigenvalues is descending, so its reciprocals ascend.
  for (Index i = 0; i < 3; ++i) {
    sp.mu(i) = 1.0 / bundle.x_eigenvalues(2 - i);
    sp.S.col(i) = bundle.V * bundle.W.col(2 - i);
  }
  sp.S.col(3) = Vector::Constant(4, 0.5);
  detail::fix_column_signs(sp.S, 3);

  const Vector d = dm.dm - bundle.b;
  sp.c = Vector::Zero(4);
  for (Index i = 0; i < 3; ++i) sp.c(i) = -sp.mu(i) * sp.S.col(i).dot(detail::demean(d));
  sp.c(3) = 1.0;

  sp.kappa_dm = kappa(dm.dm, bundle);
  sp.h = sp.kappa_dm;
  for (Index i = 0; i < 3; ++i) sp.h += sp.c(i) * sp.c(i) / sp.mu(i);
  sp.degenerate = std::abs(sp.c(0)) <= 1e-12 * sp.c.norm();
  return sp;
}

namespace detail {

inline void check_pole_n4(const SecularProblemN4& sp, double lambda) {
  for (Index i = 0; i < 3; ++i) {
    if (std::abs(1.0 - lambda * sp.mu(i)) < 1e-14) {
      throw Error(ErrorKind::PoleEvaluation, "g evaluated at the pole 1/mu_" + std::to_string(i + 1));
    }
  }
}

}  // namespace detail

/// g(lambda) = sum_{i<3} c_i^2 / (mu_i (1 - lambda mu_i)^2) + 2 lambda - h.
/// Evaluated with h folded in, as
///   2 lambda - kappa + sum_{i<3} c_i^2 lambda (2 - lambda mu_i) / (1 - lambda mu_i)^2,
/// which avoids cancelling sum c_i^2 / mu_i against h when kappa is small.
inline double eval_g(const SecularProblemN4& sp, double lambda) {
  detail::check_pole_n4(sp, lambda);
  double g = 2.0 * lambda - sp.kappa_dm;
  for (Index i = 0; i < 3; ++i) {
    const double t = 1.0 - lambda * sp.mu(i);
    g += sp.c(i) * sp.c(i) * lambda * (2.0 - lambda * sp.mu(i)) / (t * t);
  }
  return g;
}

/// The same function before completing the square:
/// lambda^2 c^T T^{-1} Lambda T^{-1} c + 2 lambda c^T T^{-1} c - kappa,
/// T = I - lambda Lambda (all four components, mu_4 = 0).
inline double eval_g_raw(const SecularProblemN4& sp, double lambda) {
  detail::check_pole_n4(sp, lambda);
  double quad = 0.0;
  double lin = 0.0;
  for (Index i = 0; i < 4; ++i) {
    const double t = 1.0 - lambda * sp.mu(i);
    quad += sp.mu(i) * sp.c(i) * sp.c(i) / (t * t);
    lin += sp.c(i) * sp.c(i) / t;
  }
  return lambda * lambda * quad + 2.0 * lambda * lin - sp.kappa_dm;
}

inline double eval_g_derivative(const SecularProblemN4& sp, double lambda) {
  double dg = 2.0;
  for (Index i = 0; i < 3; ++i) {
    const double t = 1.0 - lambda * sp.mu(i);
    dg += 2.0 * sp.c(i) * sp.c(i) / (t * t * t);
  }
  return dg;
}

/// x(lambda) = -lambda (I - lambda Lambda)^{-1} c.
inline Vector x_of_lambda(const SecularProblemN4& sp, double lambda) {
  Vector x(4);
  for (Index i = 0; i < 4; ++i) x(i) = -lambda * sp.c(i) / (1.0 - lambda * sp.mu(i));
  return x;
}

/// Closest y to dm for which [[0, y^T], [y, D]] is an EDM of embedding
/// dimension 3.
inline SolveReport solve_n4(const Measurement& dm, const EdmBundle& bundle, const SolveOptions& opts = {}) {
  detail::require_n4(bundle);
  SolveReport rep;
  rep.method = "secular_n4";
  rep.verdict = self_consistency_test(dm.dm, bundle, opts.consistency);

  const SecularProblemN4 sp = build_secular_n4(dm, bundle);
  if (detail::already_feasible(sp.kappa_dm, dm.dm, opts)) {
    rep.lambda_star = 0.0;
    rep.y_star = dm.dm;
    rep.secular_residual = std::abs(sp.kappa_dm);
    rep.method = "consistent";
    detail::finish_report(rep, dm, bundle, opts);
    return rep;
  }

  // Only the pole end of the bracket is open.
  const double pole = sp.pole();
  const double lo = sp.kappa_dm > 0.0 ? 0.0 : 0.5 * sp.kappa_dm;
  const double hi = sp.kappa_dm > 0.0 ? pole - 1e-12 * pole : 0.0;
  rep.bracket = {lo, sp.kappa_dm > 0.0 ? pole : 0.0};
  // A root within tolerance of the closed end means c ~ 0: the projection is not unique.
  const double ftol = opts.root_ftol * std::max(1.0, std::abs(sp.h));
  if (!(eval_g(sp, hi) > ftol) || !(eval_g(sp, lo) < -ftol)) {
    throw Error(ErrorKind::DegenerateCoefficient,
                "secular function has no sign change on the bracket (c_1 = " + std::to_string(sp.c(0)) + ")");
  }

  const auto root = safeguarded_newton(
      [&sp](double l) { return std::pair{eval_g(sp, l), eval_g_derivative(sp, l)}; }, lo, hi,
      ftol, opts.root_xtol * pole, opts.max_iter);
  if (!root.converged) throw Error(ErrorKind::NoConvergence, "g root not found within the iteration limit");
  if (!(root.x < pole)) throw Error(ErrorKind::NoConvergence, "second-order condition lambda* < 1/mu_1 failed");

  rep.lambda_star = root.x;
  rep.iterations = root.iterations;
  rep.secular_residual = std::abs(root.fx);
  rep.y_star = sp.S * x_of_lambda(sp, root.x) + dm.dm;
  detail::finish_report(rep, dm, bundle, opts);
  return rep;
}

}  // namespace edmgps
