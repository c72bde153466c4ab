#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "edmgps/consistency.hpp"
#include "edmgps/edm_core.hpp"
#include "edmgps/harness/scenario.hpp"
#include "edmgps/solver_general.hpp"
#include "edmgps/solver_n4.hpp"

namespace edmgps::harness {

enum class Method { Auto, Secular, Unconstrained, Nlp };

inline std::optional<Method> parse_method(std::string_view s) {
  if (s == "auto") return Method::Auto;
  if (s == "secular") return Method::Secular;
  if (s == "unconstrained") return Method::Unconstrained;
  if (s == "nlp") return Method::Nlp;
  return std::nullopt;
}

struct PipelineOptions {
  Method method = Method::Auto;
  double scale = kDefaultScale;
  double rank_tol = kDefaultRankTol;
  SolveOptions solve;
};

/// Working-frame objects shared by the consistency check and the solvers.
struct Prepared {
  EdmBundle bundle;
  Measurement measurement;
};

inline Prepared prepare(const Scenario& sc, const PipelineOptions& opts) {
  validate(sc);
  const SatelliteConfig cfg = center_configuration(sc.satellites, opts.scale, opts.rank_tol);
  return {make_bundle(cfg, opts.rank_tol), make_measurement(sc.pseudoranges, opts.scale)};
}

struct PipelineResult {
  SolveReport report;
  std::optional<double> position_error_m;
};

inline SolveReport solve_prepared(const Prepared& prep, const PipelineOptions& opts) {
  const EdmBundle& bundle = prep.bundle;
  const Measurement& dm = prep.measurement;
  const bool four_in_three = bundle.n() == 4 && bundle.r == 3;

  switch (opts.method) {
    case Method::Unconstrained:
      return solve_unconstrained(dm, bundle, opts.solve);
    case Method::Nlp:
      return nlp_oracle(dm, bundle, opts.solve);
    case Method::Secular:
      return four_in_three ? solve_n4(dm, bundle, opts.solve) : solve_qcqp(dm, bundle, opts.solve);
    case Method::Auto:
      break;
  }
  try {
    return four_in_three ? solve_n4(dm, bundle, opts.solve) : solve_qcqp(dm, bundle, opts.solve);
  } catch (const Error& err) {
    if (err.kind() != ErrorKind::DegenerateCoefficient) throw;
    SolveReport rep = nlp_oracle(dm, bundle, opts.solve);
    rep.method = "nlp_fallback";
    rep.fallback = true;
    return rep;
  }
}

/// Center and scale, factor the EDM, test consistency, project and recover
/// the receiver.
inline PipelineResult run_pipeline(const Scenario& sc, const PipelineOptions& opts = {}) {
  const Prepared prep = prepare(sc, opts);
  PipelineResult out{solve_prepared(prep, opts), std::nullopt};
  if (sc.true_receiver) out.position_error_m = (out.report.q() - *sc.true_receiver).norm();
  return out;
}

namespace exit_codes {
inline constexpr int kOk = 0;
inline constexpr int kFaulty = 2;
inline constexpr int kInfeasibleGeometry = 3;
inline constexpr int kNoConvergence = 4;
inline constexpr int kBadInput = 64;
}  // namespace exit_codes

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::SingularGeometry:
    case ErrorKind::NotAnEdm:
    case ErrorKind::GeometryRejection:
    case ErrorKind::GaleInfeasible:
      return exit_codes::kInfeasibleGeometry;
    case ErrorKind::NoConvergence:
    case ErrorKind::DegenerateCoefficient:
    case ErrorKind::PoleEvaluation:
      return exit_codes::kNoConvergence;
    case ErrorKind::BadShape:
    case ErrorKind::BadInput:
    case ErrorKind::NegativeSquare:
    case ErrorKind::Io:
      return exit_codes::kBadInput;
  }
  return exit_codes::kBadInput;
}

}  // namespace edmgps::harness
