#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "edmgps/harness/scenario.hpp"
#include "edmgps/solve_report.hpp"

namespace edmgps::harness {

using nlohmann::json;

inline constexpr int kScenarioSchemaVersion = 1;

namespace detail {

inline json vector_to_json(const Vector& v) {
  json arr = json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline Vector vector_from_json(const json& j, const std::string& field) {
  if (!j.is_array()) throw Error(ErrorKind::BadInput, "'" + field + "' must be an array of numbers");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw Error(ErrorKind::BadInput, "'" + field + "' must contain only numbers");
    v(static_cast<Index>(i)) = j[i].get<double>();
  }
  return v;
}

}  // namespace detail

/// Row-major: "satellites" is an array of n coordinate rows. Only ranges are
/// stored; squared quantities are derived on load.
inline json scenario_to_json(const Scenario& sc) {
  json j;
  j["schema_version"] = kScenarioSchemaVersion;
  j["label"] = sc.label;
  j["dim"] = sc.dim;
  json rows = json::array();
  for (Index i = 0; i < sc.n(); ++i) rows.push_back(detail::vector_to_json(sc.satellites.row(i).transpose()));
  j["satellites"] = rows;
  j["pseudoranges"] = detail::vector_to_json(sc.pseudoranges);
  if (sc.true_receiver) j["true_receiver"] = detail::vector_to_json(*sc.true_receiver);
  if (sc.true_bias) j["true_bias"] = *sc.true_bias;
  if (sc.noise_sigma) j["noise_sigma"] = *sc.noise_sigma;
  if (sc.seed) j["seed"] = *sc.seed;
  return j;
}

inline Scenario scenario_from_json(const json& j) {
  try {
    if (!j.is_object()) throw Error(ErrorKind::BadInput, "scenario must be a JSON object");
    const int version = j.at("schema_version").get<int>();
    if (version != kScenarioSchemaVersion) {
      throw Error(ErrorKind::BadInput, "unsupported schema_version " + std::to_string(version));
    }
    Scenario sc;
    sc.label = j.value("label", std::string{});
    sc.dim = j.value("dim", Index{3});
    const json& rows = j.at("satellites");
    if (!rows.is_array()) throw Error(ErrorKind::BadInput, "'satellites' must be an array of rows");
    sc.satellites.resize(static_cast<Index>(rows.size()), sc.dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Vector row = detail::vector_from_json(rows[i], "satellites");
      if (row.size() != sc.dim) throw Error(ErrorKind::BadShape, "satellite row " + std::to_string(i) + " has wrong length");
      sc.satellites.row(static_cast<Index>(i)) = row.transpose();
    }
    sc.pseudoranges = detail::vector_from_json(j.at("pseudoranges"), "pseudoranges");
    if (j.contains("true_receiver")) sc.true_receiver = detail::vector_from_json(j["true_receiver"], "true_receiver");
    if (j.contains("true_bias")) sc.true_bias = j["true_bias"].get<double>();
    if (j.contains("noise_sigma")) sc.noise_sigma = j["noise_sigma"].get<double>();
    if (j.contains("seed")) sc.seed = j["seed"].get<std::uint64_t>();
    validate(sc);
    return sc;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::BadInput, std::string("scenario JSON: ") + e.what());
  }
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::BadInput, path.string() + ": " + e.what());
  }
  try {
    return scenario_from_json(j);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

inline void save_scenario(const Scenario& sc, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << scenario_to_json(sc).dump(2) << '\n';
}

inline json verdict_to_json(const ConsistencyVerdict& v) {
  return {{"tag", std::string(to_string(v.tag))},
          {"kappa", v.kappa},
          {"band", v.band},
          {"gale_residual", v.gale_residual},
          {"borderline", v.borderline}};
}

/// SolveReport as one JSON object. y_star is in working-frame units; q in meters.
inline json report_to_json(const SolveReport& rep, std::optional<double> position_error_m = std::nullopt) {
  json j;
  j["method"] = rep.method;
  j["converged"] = rep.converged;
  j["fallback"] = rep.fallback;
  j["lambda_star"] = rep.lambda_star;
  j["bracket"] = {rep.bracket.first, rep.bracket.second};
  j["iterations"] = rep.iterations;
  j["y_star"] = detail::vector_to_json(rep.y_star);
  j["q"] = detail::vector_to_json(rep.fix.q_world);
  j["kappa_residual"] = rep.kappa_residual;
  j["secular_residual"] = rep.secular_residual;
  j["objective"] = rep.objective;
  j["qtq_direct"] = rep.fix.qtq_direct;
  j["qtq_identity"] = rep.fix.qtq_identity;
  j["gale_residual_y_star"] = rep.fix.gale_residual;
  j["verdict"] = verdict_to_json(rep.verdict);
  if (position_error_m) j["position_error_m"] = *position_error_m;
  return j;
}

}  // namespace edmgps::harness
