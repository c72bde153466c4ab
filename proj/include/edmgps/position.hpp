#pragma once

#include <cmath>

#include "edmgps/consistency.hpp"
#include "edmgps/edm_core.hpp"

namespace edmgps {

struct PositionFix {
  Vector q_centered;  // working frame
  Vector q_world;     // meters, centroid restored
  double qtq_direct = 0.0;
  double qtq_identity = 0.0;
  double gale_residual = 0.0;
  bool gale_feasible = true;

  double identity_gap() const { return std::abs(qtq_direct - qtq_identity); }
};

/// Solves 2 P q = q^T q e + b - y* for q. Multiplying through by P^T (P^T e = 0)
/// leaves q = 1/2 P^+ (b - y*), computed with a QR of P on the mean-free part
/// of b - y* (P^T e is only zero up to round-off). For n >= r + 2 this
/// only makes sense when b - y* lies in the span of [P e], i.e. Z^T (y* - b) = 0.
inline PositionFix recover_position(const Vector& y_star, const EdmBundle& bundle,
                                    double gale_tol = 1e-8) {
  const SatelliteConfig& cfg = bundle.config;
  if (y_star.size() != cfg.n()) throw Error(ErrorKind::BadShape, "recover_position: y* has wrong length");

  PositionFix fix;
  fix.gale_residual = gale_residual(y_star, bundle);
  fix.gale_feasible = fix.gale_residual <= gale_tol;
  if (!fix.gale_feasible) {
    throw Error(ErrorKind::GaleInfeasible,
                "b - y* leaves the span of [P e] (residual " + std::to_string(fix.gale_residual) + ")");
  }

  Eigen::ColPivHouseholderQR<Matrix> qr(cfg.P);
  if (qr.rank() < cfg.r()) throw Error(ErrorKind::SingularGeometry, "P^T P is singular");

  const Vector rhs = bundle.b - y_star;
  fix.q_centered = 0.5 * qr.solve(detail::demean(rhs));
  fix.q_world = cfg.to_world(fix.q_centered);
  fix.qtq_direct = fix.q_centered.squaredNorm();
  fix.qtq_identity = (y_star - bundle.b).sum() / static_cast<double>(cfg.n());
  return fix;
}

/// max_i |2 (P q)_i - (q^T q + b_i - y_i)|.
inline double position_system_residual(const Vector& q_centered, const Vector& y, const EdmBundle& bundle) {
  const Vector lhs = 2.0 * bundle.config.P * q_centered;
  const Vector rhs = Vector::Constant(y.size(), q_centered.squaredNorm()) + bundle.b - y;
  return (lhs - rhs).cwiseAbs().maxCoeff();
}

struct FixResiduals {
  Vector y_hat;               // |q - p^i|^2, working frame
  double max_abs_scaled = 0;  // max_i |y_hat_i - y*_i|
  Vector range_residual_m;    // sqrt(y_hat_i) - sqrt(y*_i), meters
  double max_range_residual_m = 0;
};

inline FixResiduals verify_fix(const PositionFix& fix, const Vector& y_star, const EdmBundle& bundle) {
  const SatelliteConfig& cfg = bundle.config;
  FixResiduals out;
  out.y_hat = (cfg.P.rowwise() - fix.q_centered.transpose()).rowwise().squaredNorm();
  out.max_abs_scaled = (out.y_hat - y_star).cwiseAbs().maxCoeff();
  out.range_residual_m = (out.y_hat.cwiseSqrt() - y_star.cwiseMax(0.0).cwiseSqrt()) / cfg.scale;
  out.max_range_residual_m = out.range_residual_m.cwiseAbs().maxCoeff();
  return out;
}

}  // namespace edmgps
