#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "edmgps/harness/pipeline.hpp"
#include "edmgps/harness/scenario.hpp"
#include "edmgps/rng.hpp"

namespace edmgps::harness {

struct BatchSpec {
  Index count = 0;
  std::vector<Index> ns{6};
  Index dim = 3;
  std::vector<NoiseModel> models{CleanNoise{}};
  std::uint64_t seed = 1;
  Geometry geometry;
  PipelineOptions pipeline;
  bool clamp = false;
  bool record_timing = false;  // off: wall_us column is 0 so reruns are byte-identical
  unsigned threads = 1;
};

/// One CSV row. Instance i uses n = ns[i % |ns|] and
/// model = models[(i / |ns|) % |models|].
struct InstanceResult {
  std::string label;
  Index n = 0;
  double kappa = 0.0;
  double band = 0.0;
  Verdict verdict = Verdict::SelfConsistent;
  bool oracle_faulty = false;
  bool oracle_borderline = false;  // oracle's rank decision is itself within tolerance noise
  double lambda_star = std::numeric_limits<double>::quiet_NaN();
  double pos_err_m = std::numeric_limits<double>::quiet_NaN();
  int iters = 0;
  std::string method;
  std::int64_t wall_us = 0;
  bool solved = false;
  std::string error;
};

struct Confusion {
  Index true_positive = 0;   // flagged faulty, oracle faulty
  Index false_positive = 0;  // flagged faulty, oracle consistent
  Index true_negative = 0;
  Index false_negative = 0;

  Index total() const { return true_positive + false_positive + true_negative + false_negative; }

  void add(bool predicted_faulty, bool oracle_faulty) {
    if (predicted_faulty) {
      (oracle_faulty ? true_positive : false_positive) += 1;
    } else {
      (oracle_faulty ? false_negative : true_negative) += 1;
    }
  }
};

struct GroupStats {
  Index n = 0;
  Index count = 0;
  Index failures = 0;
  double pos_err_mean_m = 0.0;
  double pos_err_p50_m = 0.0;
  double pos_err_p95_m = 0.0;
  double pos_err_max_m = 0.0;
  double mean_iterations = 0.0;
  Confusion confusion;
  Index separated_disagreements = 0;  // |kappa| > 10 band, oracle not borderline, yet verdict != oracle
};

struct BatchStats {
  Index count = 0;
  Index failures = 0;
  Confusion confusion;
  Index separated_disagreements = 0;
  double mean_iterations = 0.0;
  double pos_err_p50_m = 0.0;
  double wall_us_per_solve = 0.0;
  std::vector<GroupStats> per_n;
};

inline std::uint64_t instance_seed(std::uint64_t base, Index i) {
  return Rng::splitmix64(base + static_cast<std::uint64_t>(i) * 0x9E3779B97F4A7C15ull);
}

inline InstanceResult run_instance(const BatchSpec& spec, Index i) {
  const Index n = spec.ns[static_cast<std::size_t>(i) % spec.ns.size()];
  const NoiseModel& model =
      spec.models[(static_cast<std::size_t>(i) / spec.ns.size()) % spec.models.size()];
  const std::uint64_t seed = instance_seed(spec.seed, i);

  InstanceResult row;
  row.n = n;
  row.label = "n" + std::to_string(n) + "-" + describe(model) + "-" + std::to_string(i);

  Scenario sc = generate_scenario(n, spec.dim, spec.geometry, seed);
  sc = apply_noise(std::move(sc), model, Rng::splitmix64(seed ^ 0xA5A5A5A5A5A5A5A5ull), spec.clamp);
  sc.label = row.label;

  const auto start = std::chrono::steady_clock::now();
  const Prepared prep = prepare(sc, spec.pipeline);
  const ConsistencyVerdict verdict =
      self_consistency_test(prep.measurement.dm, prep.bundle, spec.pipeline.solve.consistency);
  row.kappa = verdict.kappa;
  row.band = verdict.band;
  row.verdict = verdict.tag;
  const EdmClass oracle = augmented_edm_check(prep.bundle, prep.measurement.dm, spec.pipeline.rank_tol);
  row.oracle_faulty = !oracle.is_edm_of_dim(prep.bundle.r);
  row.oracle_borderline = oracle.borderline;
  try {
    const SolveReport rep = solve_prepared(prep, spec.pipeline);
    row.lambda_star = rep.lambda_star;
    row.iters = rep.iterations;
    row.method = rep.method;
    row.solved = rep.converged;
    if (!rep.converged) row.error = "NoConvergence";
    if (sc.true_receiver) row.pos_err_m = (rep.q() - *sc.true_receiver).norm();
  } catch (const Error& err) {
    row.method = "error";
    row.error = std::string(to_string(err.kind()));
  }
  const auto stop = std::chrono::steady_clock::now();
  if (spec.record_timing) {
    row.wall_us = std::chrono::duration_cast<std::chrono::microseconds>(stop - start).count();
  }
  return row;
}

/// Runs every instance; results are stored by index so output order never
/// depends on scheduling.
inline std::vector<InstanceResult> run_instances(const BatchSpec& spec) {
  if (spec.ns.empty() || spec.models.empty()) throw Error(ErrorKind::BadInput, "empty n grid or noise grid");
  for (Index n : spec.ns) {
    if (n < spec.dim + 1) throw Error(ErrorKind::BadInput, "n grid entry below dim+1");
  }
  std::vector<InstanceResult> rows(static_cast<std::size_t>(spec.count));
  const unsigned threads = std::max(1u, spec.threads);
  if (threads == 1 || spec.count < 2) {
    for (Index i = 0; i < spec.count; ++i) rows[static_cast<std::size_t>(i)] = run_instance(spec, i);
    return rows;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (Index i = t; i < spec.count; i += threads) rows[static_cast<std::size_t>(i)] = run_instance(spec, i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

namespace detail {

inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size())));
  return v[std::min(v.size() - 1, rank == 0 ? 0 : rank - 1)];
}

}  // namespace detail

inline constexpr const char* kCsvHeader = "label,n,kappa,verdict,lambda_star,pos_err_m,iters,method,wall_us";

inline void write_csv(std::ostream& out, const std::vector<InstanceResult>& rows) {
  out << kCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.label << ',' << r.n << ',' << detail::fmt_double(r.kappa) << ',' << to_string(r.verdict) << ','
        << detail::fmt_double(r.lambda_star) << ',' << detail::fmt_double(r.pos_err_m) << ',' << r.iters << ','
        << r.method << ',' << r.wall_us << '\n';
  }
}

inline BatchStats summarize(const std::vector<InstanceResult>& rows) {
  BatchStats stats;
  stats.count = static_cast<Index>(rows.size());
  std::map<Index, std::vector<const InstanceResult*>> groups;
  for (const auto& r : rows) groups[r.n].push_back(&r);

  std::vector<double> all_err;
  double iter_sum = 0.0;
  double wall_sum = 0.0;
  for (const auto& [n, members] : groups) {
    GroupStats g;
    g.n = n;
    g.count = static_cast<Index>(members.size());
    std::vector<double> errs;
    double git = 0.0;
    for (const InstanceResult* r : members) {
      const bool predicted = r->verdict != Verdict::SelfConsistent;
      g.confusion.add(predicted, r->oracle_faulty);
      if (std::abs(r->kappa) > 10.0 * r->band && !r->oracle_borderline && predicted != r->oracle_faulty) ++g.separated_disagreements;
      if (!r->solved) ++g.failures;
      if (r->solved && !std::isnan(r->pos_err_m)) errs.push_back(r->pos_err_m);
      git += r->iters;
      wall_sum += static_cast<double>(r->wall_us);
    }
    g.mean_iterations = g.count ? git / static_cast<double>(g.count) : 0.0;
    if (!errs.empty()) {
      double sum = 0.0;
      for (double e : errs) sum += e;
      g.pos_err_mean_m = sum / static_cast<double>(errs.size());
      g.pos_err_p50_m = detail::percentile(errs, 0.50);
      g.pos_err_p95_m = detail::percentile(errs, 0.95);
      g.pos_err_max_m = *std::max_element(errs.begin(), errs.end());
    }
    all_err.insert(all_err.end(), errs.begin(), errs.end());
    iter_sum += git;

    stats.failures += g.failures;
    stats.separated_disagreements += g.separated_disagreements;
    stats.confusion.true_positive += g.confusion.true_positive;
    stats.confusion.false_positive += g.confusion.false_positive;
    stats.confusion.true_negative += g.confusion.true_negative;
    stats.confusion.false_negative += g.confusion.false_negative;
    stats.per_n.push_back(g);
  }
  if (stats.count) {
    stats.mean_iterations = iter_sum / static_cast<double>(stats.count);
    stats.wall_us_per_solve = wall_sum / static_cast<double>(stats.count);
  }
  stats.pos_err_p50_m = all_err.empty() ? 0.0 : detail::percentile(all_err, 0.50);
  return stats;
}

inline nlohmann::json stats_to_json(const BatchStats& s) {
  const auto confusion = [](const Confusion& c) {
    return nlohmann::json{{"true_positive", c.true_positive},
                          {"false_positive", c.false_positive},
                          {"true_negative", c.true_negative},
                          {"false_negative", c.false_negative}};
  };
  nlohmann::json j;
  j["count"] = s.count;
  j["failures"] = s.failures;
  j["confusion"] = confusion(s.confusion);
  j["separated_disagreements"] = s.separated_disagreements;
  j["mean_iterations"] = s.mean_iterations;
  j["pos_err_p50_m"] = s.pos_err_p50_m;
  j["wall_us_per_solve"] = s.wall_us_per_solve;
  j["per_n"] = nlohmann::json::array();
  for (const auto& g : s.per_n) {
    j["per_n"].push_back({{"n", g.n},
                          {"count", g.count},
                          {"failures", g.failures},
                          {"pos_err_mean_m", g.pos_err_mean_m},
                          {"pos_err_p50_m", g.pos_err_p50_m},
                          {"pos_err_p95_m", g.pos_err_p95_m},
                          {"pos_err_max_m", g.pos_err_max_m},
                          {"mean_iterations", g.mean_iterations},
                          {"confusion", confusion(g.confusion)},
                          {"separated_disagreements", g.separated_disagreements}});
  }
  return j;
}

inline std::filesystem::path summary_path(const std::filesystem::path& csv_path) {
  std::filesystem::path p = csv_path;
  p += ".summary.json";
  return p;
}

/// Writes `out_path` (CSV) and `out_path`.summary.json.
inline BatchStats run_batch(const BatchSpec& spec, const std::filesystem::path& out_path) {
  const auto rows = run_instances(spec);
  const BatchStats stats = summarize(rows);

  std::ofstream csv(out_path);
  if (!csv) throw Error(ErrorKind::Io, "cannot write " + out_path.string());
  write_csv(csv, rows);
  if (!csv) throw Error(ErrorKind::Io, "write failed for " + out_path.string());

  const auto sum_path = summary_path(out_path);
  std::ofstream sum(sum_path);
  if (!sum) throw Error(ErrorKind::Io, "cannot write " + sum_path.string());
  sum << stats_to_json(stats).dump(2) << '\n';
  return stats;
}

}  // namespace edmgps::harness
