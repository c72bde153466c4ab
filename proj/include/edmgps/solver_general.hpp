#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "edmgps/consistency.hpp"
#include "edmgps/rng.hpp"
#include "edmgps/root_finding.hpp"
#include "edmgps/solve_report.hpp"

namespace edmgps {

/// Gale feasibility lets y - b = P x + s e; the curvature constraint then reads
/// x^T x = 4 s and the multiplier of that constraint solves f(lambda) = 0.
struct SecularProblemGen {
  Vector nu;  // eigenvalues of P^T P, descending, all > 0
  Matrix Sp;  // eigenvectors of P^T P
  Vector w;   // Sp^T P^T (dm - b)
  double hprime = 0.0;  // 4 e^T (dm - b) / n
  double kappa_dm = 0.0;
  double sum_residual = 0.0;  // e^T (dm - b)
  Index n = 0;
  bool degenerate = false;  // w_r ~ 0

  double pole() const { return nu(nu.size() - 1); }
};

inline SecularProblemGen build_secular_general(const Measurement& dm, const EdmBundle& bundle,
                                               double rank_tol = kDefaultRankTol) {
  const SatelliteConfig& cfg = bundle.config;
  if (dm.n() != cfg.n()) throw Error(ErrorKind::BadShape, "measurement length does not match satellites");

  SecularProblemGen sp;
  sp.n = cfg.n();
  // nu and Sp from a thin SVD of P rather than an eigensolve of P^T P, which
  // would square the conditioning.
  const Eigen::JacobiSVD<Matrix> svd(cfg.P, Eigen::ComputeThinU | Eigen::ComputeThinV);
  sp.nu = svd.singularValues().array().square();
  sp.Sp = svd.matrixV();
  const Index r = cfg.r();
  if (!(sp.nu(r - 1) > rank_tol * sp.nu(0))) throw Error(ErrorKind::SingularGeometry, "P^T P is singular");

  const Vector d = dm.dm - bundle.b;
  sp.w = svd.singularValues().cwiseProduct(svd.matrixU().transpose() * detail::demean(d));
  sp.sum_residual = d.sum();
  sp.hprime = 4.0 * sp.sum_residual / static_cast<double>(sp.n);
  sp.kappa_dm = kappa(dm.dm, bundle);
  sp.degenerate = std::abs(sp.w(r - 1)) <= 1e-12 * sp.w.norm();
  return sp;
}

/// f(lambda) = sum_i w_i^2 / (nu_i - lambda)^2 + (8/n) lambda - h'.
/// Evaluated relative to f(0) = -kappa, as
///   (8/n) lambda - kappa + sum_i w_i^2 lambda (2 nu_i - lambda) / (nu_i^2 (nu_i - lambda)^2).
inline double eval_f(const SecularProblemGen& sp, double lambda) {
  double f = 8.0 / static_cast<double>(sp.n) * lambda - sp.kappa_dm;
  for (Index i = 0; i < sp.nu.size(); ++i) {
    const double t = sp.nu(i) - lambda;
    if (std::abs(t) < 1e-14 * sp.nu(i)) {
      throw Error(ErrorKind::PoleEvaluation, "f evaluated at the pole nu_" + std::to_string(i + 1));
    }
    f += sp.w(i) * sp.w(i) * lambda * (2.0 * sp.nu(i) - lambda) / (sp.nu(i) * sp.nu(i) * t * t);
  }
  return f;
}

inline double eval_f_derivative(const SecularProblemGen& sp, double lambda) {
  double df = 8.0 / static_cast<double>(sp.n);
  for (Index i = 0; i < sp.nu.size(); ++i) {
    const double t = sp.nu(i) - lambda;
    df += 2.0 * sp.w(i) * sp.w(i) / (t * t * t);
  }
  return df;
}

/// x(lambda) = (P^T P - lambda I)^{-1} P^T (dm - b) in the eigenbasis.
inline Vector x_of_lambda(const SecularProblemGen& sp, double lambda) {
  return sp.Sp * (sp.w.array() / (sp.nu.array() - lambda)).matrix();
}

inline double s_of_lambda(const SecularProblemGen& sp, double lambda) {
  return (sp.sum_residual - 2.0 * lambda) / static_cast<double>(sp.n);
}

/// Projection through the single-constraint QCQP in (x, s). Valid for any
/// n >= r + 1; the Gale component of dm is dropped by the parametrization.
inline SolveReport solve_qcqp(const Measurement& dm, const EdmBundle& bundle, const SolveOptions& opts = {}) {
  SolveReport rep;
  rep.method = "secular_qcqp";
  rep.verdict = self_consistency_test(dm.dm, bundle, opts.consistency);

  const SecularProblemGen sp = build_secular_general(dm, bundle);
  const SatelliteConfig& cfg = bundle.config;
  const auto assemble = [&](double lambda) {
    const Vector x = x_of_lambda(sp, lambda);
    const double s = s_of_lambda(sp, lambda);
    return Vector(cfg.P * x + Vector::Constant(sp.n, s) + bundle.b);
  };

  if (detail::already_feasible(sp.kappa_dm, dm.dm, opts)) {
    rep.lambda_star = 0.0;
    rep.secular_residual = std::abs(eval_f(sp, 0.0));
    rep.y_star = assemble(0.0);
    detail::finish_report(rep, dm, bundle, opts);
    return rep;
  }

  const double pole = sp.pole();
  const double lo = sp.kappa_dm > 0.0 ? 0.0 : static_cast<double>(sp.n) * sp.kappa_dm / 8.0;
  const double hi = sp.kappa_dm > 0.0 ? pole - 1e-12 * pole : 0.0;
  rep.bracket = {lo, sp.kappa_dm > 0.0 ? pole : 0.0};
  const double ftol = opts.root_ftol * std::max(1.0, std::abs(sp.hprime));
  if (!(eval_f(sp, hi) > ftol) || !(eval_f(sp, lo) < -ftol)) {
    throw Error(ErrorKind::DegenerateCoefficient, "secular function has no sign change on the bracket");
  }

  const auto root = safeguarded_newton(
      [&sp](double l) { return std::pair{eval_f(sp, l), eval_f_derivative(sp, l)}; }, lo, hi,
      ftol, opts.root_xtol * pole, opts.max_iter);
  if (!root.converged) throw Error(ErrorKind::NoConvergence, "f root not found within the iteration limit");
  if (!(root.x < pole)) throw Error(ErrorKind::NoConvergence, "second-order condition lambda* < nu_r failed");

  rep.lambda_star = root.x;
  rep.iterations = root.iterations;
  rep.secular_residual = std::abs(root.fx);
  rep.y_star = assemble(root.x);
  detail::finish_report(rep, dm, bundle, opts);
  return rep;
}

/// Substituting s = x^T x / 4 gives the unconstrained quartic
///   F(x) = n (x^T x)^2 / 16 + x^T A x + (x^T x) a / 2 + 2 x^T g,
/// A = P^T P, g = P^T (b - dm), a = e^T (b - dm); |y - dm|^2 = F(x) + |b - dm|^2.
struct QuarticModel {
  Matrix A;
  Vector g;
  double a = 0.0;
  double constant = 0.0;  // |b - dm|^2
  Index n = 0;
  Matrix P;
  Vector b_minus_dm;

  double value(const Vector& x) const {
    const double xx = x.squaredNorm();
    return static_cast<double>(n) * xx * xx / 16.0 + x.dot(A * x) + 0.5 * xx * a + 2.0 * x.dot(g);
  }

  Vector gradient(const Vector& x) const {
    const double xx = x.squaredNorm();
    return (static_cast<double>(n) * xx / 4.0 + a) * x + 2.0 * A * x + 2.0 * g;
  }

  /// r(x) = y(x) - dm with y(x) = P x + (x^T x / 4) e + b.
  Vector residual(const Vector& x) const {
    return P * x + Vector::Constant(n, x.squaredNorm() / 4.0) + b_minus_dm;
  }

  /// grad |r|^2 = 2 P^T r + (e^T r) x. Equal to gradient(x), but the error
  /// stays proportional to the residual instead of to the expanded terms.
  Vector residual_gradient(const Vector& x) const {
    const Vector r = residual(x);
    return 2.0 * P.transpose() * r + r.sum() * x;
  }

  Matrix hessian(const Vector& x) const {
    const Index r = x.size();
    const double xx = x.squaredNorm();
    return (static_cast<double>(n) * xx / 4.0 + a) * Matrix::Identity(r, r) +
           static_cast<double>(n) / 2.0 * x * x.transpose() + 2.0 * A;
  }
};

inline QuarticModel make_quartic_model(const Measurement& dm, const EdmBundle& bundle) {
  const SatelliteConfig& cfg = bundle.config;
  if (dm.n() != cfg.n()) throw Error(ErrorKind::BadShape, "measurement length does not match satellites");
  const Vector bd = bundle.b - dm.dm;
  QuarticModel m;
  m.A = cfg.P.transpose() * cfg.P;
  m.g = cfg.P.transpose() * detail::demean(bd);
  m.a = bd.sum();
  m.constant = bd.squaredNorm();
  m.n = cfg.n();
  m.P = cfg.P;
  m.b_minus_dm = bd;
  return m;
}

struct UnconstrainedState {
  Vector x;
  double s = 0.0;  // x^T x / 4
  double objective = 0.0;
  double gradient_norm = 0.0;

  static UnconstrainedState at(const QuarticModel& model, Vector x) {
    UnconstrainedState st;
    st.s = x.squaredNorm() / 4.0;
    st.objective = model.value(x);
    st.gradient_norm = model.gradient(x).norm();
    st.x = std::move(x);
    return st;
  }
};

/// Damped Newton on F, falling back to steepest descent when the Hessian is
/// not positive definite, with Armijo backtracking in both cases. Starts from
/// the lambda = 0 point x0 = A^{-1} P^T (dm - b).
inline SolveReport solve_unconstrained(const Measurement& dm, const EdmBundle& bundle,
                                       const SolveOptions& opts = {}, int max_iter = 200) {
  SolveReport rep;
  rep.method = "unconstrained";
  rep.verdict = self_consistency_test(dm.dm, bundle, opts.consistency);

  const QuarticModel model = make_quartic_model(dm, bundle);
  Vector x = -model.A.ldlt().solve(model.g);
  constexpr double eps = std::numeric_limits<double>::epsilon();
  const double p_norm = model.P.cwiseAbs().colwise().sum().maxCoeff();
  // Size of the pieces of r(x); r carries round-off of ~eps times this, which
  // bounds how small the gradient and the change in |r|^2 can be resolved.
  const auto r_terms = [&](const Vector& v) {
    return 1.0 + (model.P * v).cwiseAbs().maxCoeff() + v.squaredNorm() / 4.0 +
           model.b_minus_dm.cwiseAbs().maxCoeff();
  };
  const auto grad_terms = [&](const Vector& v) {
    return 2.0 * (p_norm + static_cast<double>(model.n) * v.cwiseAbs().maxCoeff()) * r_terms(v);
  };

  rep.converged = false;
  int it = 0;
  for (; it < max_iter; ++it) {
    const Vector grad = model.residual_gradient(x);
    const double gnorm = grad.cwiseAbs().maxCoeff();
    if (gnorm == 0.0) {
      rep.converged = true;
      break;
    }
    const Matrix H = model.hessian(x);
    Eigen::LLT<Matrix> llt(H);
    const bool newton = llt.info() == Eigen::Success;
    Vector dir = newton ? Vector(-llt.solve(grad)) : Vector(-grad);
    // A Newton step this small means x is stationary to working precision
    // (the step accounts for curvature, a gradient threshold would not).
    if (newton && dir.cwiseAbs().maxCoeff() <= 1e-14 * (1.0 + x.cwiseAbs().maxCoeff())) {
      x += dir;
      ++it;
      rep.converged = true;
      break;
    }
    double slope = grad.dot(dir);
    if (!(slope < 0.0)) {
      dir = -grad;
      slope = -grad.squaredNorm();
    }

    // Armijo backtracking. Near the minimizer F stops resolving progress, so a
    // step whose value change is within round-off but whose gradient shrinks
    // is also taken.
    const double f0 = model.residual(x).squaredNorm();
    const double noise = 64.0 * eps * (std::sqrt(f0) + eps) * r_terms(x);
    double t = 1.0;
    bool accepted = false;
    Vector trial;
    for (int halvings = 0; halvings < 60; ++halvings, t *= 0.5) {
      trial = x + t * dir;
      const double ft = model.residual(trial).squaredNorm();
      if (ft <= f0 + 1e-4 * t * slope ||
          (ft <= f0 + noise && model.residual_gradient(trial).cwiseAbs().maxCoeff() < gnorm)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // Round-off floor: no representable step makes progress.
      rep.converged = gnorm <= 1e-10 * grad_terms(x);
      break;
    }
    const double step = (trial - x).cwiseAbs().maxCoeff();
    x = trial;
    if (step <= 4.0 * eps * (1.0 + x.cwiseAbs().maxCoeff())) {
      ++it;
      rep.converged = model.residual_gradient(x).cwiseAbs().maxCoeff() <= 1e-10 * grad_terms(x);
      break;
    }
  }

  const auto st = UnconstrainedState::at(model, x);
  const SatelliteConfig& cfg = bundle.config;
  rep.iterations = it;
  rep.secular_residual = st.gradient_norm;
  rep.y_star = cfg.P * st.x + Vector::Constant(cfg.n(), st.s) + bundle.b;
  rep.lambda_star = -(static_cast<double>(cfg.n()) * st.s + model.a) / 2.0;
  detail::finish_report(rep, dm, bundle, opts);
  return rep;
}

struct NlpOptions {
  int starts = 8;                  // perturbed starts besides the centroid
  double start_radius_frac = 0.1;  // of the bounding-box diagonal
  std::uint64_t start_seed = 0x5EED;
  int max_iter = 200;
};

/// Levenberg-Marquardt on sum_i (|p^i - q|^2 - dm_i)^2 directly over q,
/// multi-started from the centroid and `starts` points around it. The best
/// final cost wins; ties go to the lower start index.
inline SolveReport nlp_oracle(const Measurement& dm, const EdmBundle& bundle, const SolveOptions& opts = {},
                              const NlpOptions& nlp = {}) {
  const SatelliteConfig& cfg = bundle.config;
  const Matrix& P = cfg.P;
  const Index n = cfg.n();
  const Index r = cfg.r();
  if (dm.n() != n) throw Error(ErrorKind::BadShape, "measurement length does not match satellites");

  const auto residual = [&](const Vector& q) -> Vector {
    return (P.rowwise() - q.transpose()).rowwise().squaredNorm() - dm.dm;
  };

  const double diag = (P.colwise().maxCoeff() - P.colwise().minCoeff()).norm();
  std::vector<Vector> starts{Vector::Zero(r)};
  Rng rng(nlp.start_seed);
  for (int k = 0; k < nlp.starts; ++k) {
    Vector dir(r);
    for (Index j = 0; j < r; ++j) dir(j) = rng.normal();
    starts.push_back(nlp.start_radius_frac * diag * dir.normalized());
  }

  struct Run {
    Vector q;
    double cost;
    int iterations;
    bool converged;
  };
  const auto run_lm = [&](Vector q) {
    Vector res = residual(q);
    double cost = res.squaredNorm();
    double damping = 1e-3;  // relative to diag(J^T J)
    Run out{q, cost, 0, false};
    for (int it = 0; it < nlp.max_iter; ++it) {
      out.iterations = it + 1;
      const Matrix J = -2.0 * (P.rowwise() - q.transpose());
      const Vector grad = J.transpose() * res;
      const Matrix JtJ = J.transpose() * J;
      if (cost == 0.0) {
        out.converged = true;
        break;
      }
      // A full Gauss-Newton step this small means q is stationary to working
      // precision; the cost itself stops resolving progress well before that.
      const Vector gn = JtJ.ldlt().solve(-grad);
      if (gn.cwiseAbs().maxCoeff() <= 1e-14 * (1.0 + q.cwiseAbs().maxCoeff())) {
        q += gn;
        res = residual(q);
        cost = res.squaredNorm();
        out.converged = true;
        break;
      }

      bool accepted = false;
      for (int tries = 0; tries < 60 && !accepted; ++tries) {
        Matrix H = JtJ;
        H.diagonal() += damping * JtJ.diagonal();
        const Vector q_new = q + H.ldlt().solve(-grad);
        const Vector res_new = residual(q_new);
        const double cost_new = res_new.squaredNorm();
        // Within cost round-off, a falling gradient still counts as progress.
        const double cost_noise =
            64.0 * std::numeric_limits<double>::epsilon() * std::sqrt(cost) * dm.dm.norm();
        const bool flat = cost_new <= cost + cost_noise && (J.transpose() * res_new).norm() < grad.norm();
        if (cost_new < cost || flat) {
          q = q_new;
          res = res_new;
          cost = cost_new;
          damping = std::max(damping / 3.0, 1e-12);
          accepted = true;
        } else {
          damping *= 4.0;
        }
      }
      if (!accepted) {
        out.converged = true;  // no decrease at any damping
        break;
      }
    }
    out.q = q;
    out.cost = cost;
    return out;
  };

  Run best{Vector::Zero(r), std::numeric_limits<double>::infinity(), 0, false};
  int total_iterations = 0;
  for (const auto& q0 : starts) {
    Run run = run_lm(q0);
    total_iterations += run.iterations;
    if (run.cost < best.cost) best = std::move(run);
  }

  SolveReport rep;
  rep.method = "nlp";
  rep.verdict = self_consistency_test(dm.dm, bundle, opts.consistency);
  rep.iterations = total_iterations;
  rep.converged = best.converged;
  rep.y_star = (P.rowwise() - best.q.transpose()).rowwise().squaredNorm();
  const Matrix J = -2.0 * (P.rowwise() - best.q.transpose());
  rep.secular_residual = (J.transpose() * residual(best.q)).norm();
  const double qq = best.q.squaredNorm();
  rep.lambda_star = ((dm.dm - bundle.b).sum() - static_cast<double>(n) * qq) / 2.0;
  rep.kappa_residual = kappa(rep.y_star, bundle);
  rep.objective = (rep.y_star - dm.dm).squaredNorm();

  rep.fix.q_centered = best.q;
  rep.fix.q_world = cfg.to_world(best.q);
  rep.fix.qtq_direct = qq;
  rep.fix.qtq_identity = (rep.y_star - bundle.b).sum() / static_cast<double>(n);
  rep.fix.gale_residual = gale_residual(rep.y_star, bundle);
  rep.fix.gale_feasible = rep.fix.gale_residual <= opts.consistency.gale_tol;
  return rep;
}

}  // namespace edmgps
