#pragma once

#include <cmath>
#include <string_view>

#include "edmgps/edm_core.hpp"

namespace edmgps {

/// Squared pseudoranges in the working (scaled) frame.
struct Measurement {
  Vector dm;          // (scale * rho)^2
  Vector raw_ranges;  // rho, meters
  double scale = 1.0;

  Index n() const { return dm.size(); }
};

inline Measurement make_measurement(const Vector& ranges_m, double scale = kDefaultScale) {
  if (!ranges_m.allFinite() || (ranges_m.array() < 0.0).any()) {
    throw Error(ErrorKind::BadInput, "pseudoranges must be finite and nonnegative");
  }
  Measurement m;
  m.raw_ranges = ranges_m;
  m.scale = scale;
  m.dm = (scale * ranges_m).array().square();
  return m;
}

/// Wraps an already-squared working-frame vector (tests, solver internals).
inline Measurement measurement_from_squares(const Vector& dm, double scale = 1.0) {
  Measurement m;
  m.dm = dm;
  m.scale = scale;
  m.raw_ranges = dm.cwiseMax(0.0).cwiseSqrt() / scale;
  return m;
}

enum class Verdict { SelfConsistent, FaultyPositive, FaultyNegative, GaleInfeasible };

constexpr std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::SelfConsistent: return "SelfConsistent";
    case Verdict::FaultyPositive: return "FaultyPositive";
    case Verdict::FaultyNegative: return "FaultyNegative";
    case Verdict::GaleInfeasible: return "GaleInfeasible";
  }
  return "Unknown";
}

struct ConsistencyTolerances {
  double kappa_tol = 1e-8;
  double gale_tol = 1e-8;
};

struct ConsistencyVerdict {
  double kappa = 0.0;
  double band = 0.0;           // |kappa| <= band counts as zero
  double gale_residual = 0.0;  // 0 when the Gale space is trivial
  Verdict tag = Verdict::SelfConsistent;
  bool borderline = false;  // |kappa| within a factor 10 of the band

  bool faulty() const { return tag != Verdict::SelfConsistent; }
};

/// kappa_n(y) = (4/n) e^T (y - b) - (y - b)^T B^+ (y - b).
inline double kappa(const Vector& y, const EdmBundle& bundle) {
  if (y.size() != bundle.n()) throw Error(ErrorKind::BadShape, "kappa: y has wrong length");
  const Vector d = y - bundle.b;
  return 4.0 / static_cast<double>(bundle.n()) * d.sum() - (bundle.Bdag_half.transpose() * detail::demean(d)).squaredNorm();
}

inline double kappa_band(const Vector& y, double tol) {
  return tol * std::max(1.0, y.cwiseAbs().mean());
}

/// max |Z^T (y - b)| relative to max(1, |y - b|).
inline double gale_residual(const Vector& y, const EdmBundle& bundle) {
  if (!bundle.has_gale_space()) return 0.0;
  const Vector d = y - bundle.b;
  return (bundle.Z.transpose() * d).cwiseAbs().maxCoeff() / std::max(1.0, d.norm());
}

namespace detail {

inline ConsistencyVerdict kappa_verdict(const Vector& y, const EdmBundle& bundle, double tol) {
  ConsistencyVerdict v;
  v.kappa = kappa(y, bundle);
  v.band = kappa_band(y, tol);
  const double mag = std::abs(v.kappa);
  if (mag <= v.band) {
    v.tag = Verdict::SelfConsistent;
  } else {
    v.tag = v.kappa > 0.0 ? Verdict::FaultyPositive : Verdict::FaultyNegative;
  }
  v.borderline = mag >= 0.1 * v.band && mag <= 10.0 * v.band;
  return v;
}

}  // namespace detail

/// Three-way test for four satellites in R^3: kappa = 0 keeps the embedding
/// dimension, kappa > 0 lifts it to 4, kappa < 0 breaks the EDM property.
inline ConsistencyVerdict classify_n4(const Vector& y, const EdmBundle& bundle, double tol = 1e-8) {
  if (bundle.n() != 4 || bundle.r != 3) throw Error(ErrorKind::BadShape, "classify_n4 needs n=4, r=3");
  return detail::kappa_verdict(y, bundle, tol);
}

/// Gale feasibility plus kappa. A Gale violation dominates the kappa tag.
inline ConsistencyVerdict self_consistency_test(const Vector& y, const EdmBundle& bundle,
                                                const ConsistencyTolerances& tol = {}) {
  ConsistencyVerdict v = detail::kappa_verdict(y, bundle, tol.kappa_tol);
  v.gale_residual = gale_residual(y, bundle);
  if (bundle.has_gale_space() && v.gale_residual > tol.gale_tol) v.tag = Verdict::GaleInfeasible;
  return v;
}

/// For dm = d + delta e with d self-consistent, kappa_4(dm) = 4 delta.
inline double clock_bias_estimate(const Vector& dm, const EdmBundle& bundle) {
  if (bundle.n() != 4) throw Error(ErrorKind::BadShape, "clock_bias_estimate needs n=4");
  return kappa(dm, bundle) / 4.0;
}

}  // namespace edmgps
