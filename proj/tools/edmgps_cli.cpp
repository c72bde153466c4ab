// edmgps: consistency checks, projections and simulation batches for
// squared-pseudorange positioning.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "edmgps/edmgps.hpp"
#include "edmgps/harness/batch.hpp"
#include "edmgps/harness/json_io.hpp"
#include "edmgps/harness/pipeline.hpp"

namespace {

using namespace edmgps;
using namespace edmgps::harness;

struct CommonOpts {
  double tol = 1e-8;
  double gale_tol = 1e-8;
  double scale = kDefaultScale;
  bool json = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--tol", o.tol, "relative kappa tolerance band")->check(CLI::PositiveNumber);
  cmd->add_option("--gale-tol", o.gale_tol, "Gale residual threshold")->check(CLI::PositiveNumber);
  cmd->add_option("--scale", o.scale, "coordinate scale applied before factoring")->check(CLI::PositiveNumber);
  cmd->add_flag("--json", o.json, "emit a single JSON object on stdout");
}

PipelineOptions pipeline_options(const CommonOpts& o) {
  PipelineOptions p;
  p.scale = o.scale;
  p.solve.consistency.kappa_tol = o.tol;
  p.solve.consistency.gale_tol = o.gale_tol;
  return p;
}

Method method_or_throw(const std::string& name) {
  const auto m = parse_method(name);
  if (!m) throw Error(ErrorKind::BadInput, "unknown method '" + name + "'");
  return *m;
}

std::vector<Index> parse_index_list(const std::string& text) {
  std::vector<Index> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stol(item));
    } catch (const std::exception&) {
      throw Error(ErrorKind::BadInput, "bad integer '" + item + "' in list '" + text + "'");
    }
  }
  if (out.empty()) throw Error(ErrorKind::BadInput, "empty list");
  return out;
}

SingleFault parse_fault(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw Error(ErrorKind::BadInput, "--fault expects i,delta");
  try {
    return {std::stol(text.substr(0, comma)), std::stod(text.substr(comma + 1))};
  } catch (const std::exception&) {
    throw Error(ErrorKind::BadInput, "--fault expects i,delta, got '" + text + "'");
  }
}

int run_check(const std::string& file, const CommonOpts& o) {
  const Scenario sc = load_scenario(file);
  const PipelineOptions opts = pipeline_options(o);
  const Prepared prep = prepare(sc, opts);
  const ConsistencyVerdict v = self_consistency_test(prep.measurement.dm, prep.bundle, opts.solve.consistency);

  if (o.json) {
    nlohmann::json j = verdict_to_json(v);
    j["n"] = sc.n();
    j["embedding_dim"] = prep.bundle.r;
    if (prep.bundle.n() == 4) j["clock_bias_scaled"] = clock_bias_estimate(prep.measurement.dm, prep.bundle);
    std::cout << j.dump() << '\n';
  } else {
    std::printf("n=%ld r=%ld kappa=%.6e band=%.3e gale_residual=%.3e verdict=%s%s\n",
                static_cast<long>(sc.n()), static_cast<long>(prep.bundle.r), v.kappa, v.band, v.gale_residual,
                std::string(to_string(v.tag)).c_str(), v.borderline ? " (borderline)" : "");
  }
  return v.faulty() ? exit_codes::kFaulty : exit_codes::kOk;
}

int run_solve(const std::string& file, const std::string& method, const CommonOpts& o) {
  const Scenario sc = load_scenario(file);
  PipelineOptions opts = pipeline_options(o);
  opts.method = method_or_throw(method);
  const PipelineResult res = run_pipeline(sc, opts);
  const SolveReport& rep = res.report;

  if (o.json) {
    std::cout << report_to_json(rep, res.position_error_m).dump() << '\n';
  } else {
    std::printf("verdict=%s kappa=%.6e method=%s lambda*=%.9e iterations=%d\n",
                std::string(to_string(rep.verdict.tag)).c_str(), rep.verdict.kappa, rep.method.c_str(),
                rep.lambda_star, rep.iterations);
    std::printf("q = [");
    for (Index i = 0; i < rep.q().size(); ++i) std::printf(i ? ", %.6f" : "%.6f", rep.q()(i));
    std::printf("] m\n");
    std::printf("kappa(y*)=%.3e secular_residual=%.3e qtq_gap=%.3e\n", rep.kappa_residual, rep.secular_residual,
                rep.fix.identity_gap());
    if (res.position_error_m) std::printf("position_error=%.6e m\n", *res.position_error_m);
  }
  return rep.converged ? exit_codes::kOk : exit_codes::kNoConvergence;
}

struct SimulateOpts {
  std::string ns = "6";
  Index dim = 3;
  Index count = 1;
  std::optional<double> noise_sigma;
  std::optional<double> bias;
  std::optional<std::string> fault;
  std::uint64_t seed = 1;
  std::string out;
  std::string method = "auto";
  unsigned threads = 1;
  bool clamp = false;
  bool timing = false;
  bool emit_scenario = false;
};

BatchSpec batch_spec(const SimulateOpts& s, const CommonOpts& o) {
  BatchSpec spec;
  spec.count = s.count;
  spec.ns = parse_index_list(s.ns);
  spec.dim = s.dim;
  spec.seed = s.seed;
  spec.clamp = s.clamp;
  spec.record_timing = s.timing;
  spec.threads = s.threads;
  spec.pipeline = pipeline_options(o);
  spec.pipeline.method = method_or_throw(s.method);
  spec.models.clear();
  if (s.noise_sigma) spec.models.emplace_back(GaussianSq{*s.noise_sigma});
  if (s.bias) spec.models.emplace_back(ConstantBias{*s.bias});
  if (s.fault) spec.models.emplace_back(parse_fault(*s.fault));
  if (spec.models.empty()) spec.models.emplace_back(CleanNoise{});
  return spec;
}

int run_simulate(const SimulateOpts& s, const CommonOpts& o) {
  const BatchSpec spec = batch_spec(s, o);

  if (s.emit_scenario) {
    const Index n = spec.ns.front();
    const std::uint64_t seed = instance_seed(spec.seed, 0);
    Scenario sc = generate_scenario(n, spec.dim, spec.geometry, seed);
    sc = apply_noise(std::move(sc), spec.models.front(), Rng::splitmix64(seed ^ 0xA5A5A5A5A5A5A5A5ull), spec.clamp);
    if (s.out.empty()) {
      std::cout << scenario_to_json(sc).dump(2) << '\n';
    } else {
      save_scenario(sc, s.out);
    }
    return exit_codes::kOk;
  }

  const std::string out = s.out.empty() ? "batch.csv" : s.out;
  const BatchStats stats = run_batch(spec, out);
  std::cout << stats_to_json(stats).dump(2) << '\n';
  return exit_codes::kOk;
}

int run_bench(Index count, Index n, std::uint64_t seed, unsigned threads) {
  BatchSpec spec;
  spec.count = count;
  spec.ns = {n};
  spec.seed = seed;
  spec.threads = threads;
  spec.models = {GaussianSq{5.0}};
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = run_instances(spec);
  const auto t1 = std::chrono::steady_clock::now();
  const double secs = std::chrono::duration<double>(t1 - t0).count();
  const BatchStats stats = summarize(rows);
  std::printf("solves=%ld n=%ld elapsed=%.3f s per_solve=%.1f us failures=%ld median_err=%.3f m\n",
              static_cast<long>(count), static_cast<long>(n), secs,
              count ? 1e6 * secs / static_cast<double>(count) : 0.0, static_cast<long>(stats.failures),
              stats.pos_err_p50_m);
  return exit_codes::kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EDM-based pseudorange consistency checks and receiver positioning"};
  app.require_subcommand(1);

  CommonOpts common;
  std::string file;
  std::string method = "auto";

  auto* check = app.add_subcommand("check", "classify a scenario's measurements");
  check->add_option("file", file, "scenario JSON")->required();
  add_common(check, common);

  auto* solve = app.add_subcommand("solve", "project measurements and recover the receiver");
  solve->add_option("file", file, "scenario JSON")->required();
  solve->add_option("--method", method, "auto | secular | unconstrained | nlp");
  add_common(solve, common);

  SimulateOpts sim;
  auto* simulate = app.add_subcommand("simulate", "generate scenarios and run a batch");
  simulate->add_option("--n", sim.ns, "satellite count, or comma list for a grid");
  simulate->add_option("--dim", sim.dim, "ambient dimension")->check(CLI::PositiveNumber);
  simulate->add_option("--count", sim.count, "number of instances")->check(CLI::NonNegativeNumber);
  simulate->add_option("--noise-sigma", sim.noise_sigma, "Gaussian range noise sigma (m)");
  simulate->add_option("--bias", sim.bias, "constant bias added to every squared range (m^2)");
  simulate->add_option("--fault", sim.fault, "i,delta: add delta (m^2) to satellite i's squared range");
  simulate->add_option("--seed", sim.seed, "base seed");
  simulate->add_option("--out", sim.out, "CSV path (summary goes to PATH.summary.json)");
  simulate->add_option("--method", sim.method, "auto | secular | unconstrained | nlp");
  simulate->add_option("--threads", sim.threads, "worker threads")->check(CLI::PositiveNumber);
  simulate->add_flag("--clamp", sim.clamp, "clamp negative squares to zero instead of redrawing");
  simulate->add_flag("--timing", sim.timing, "record per-instance wall time in the CSV");
  simulate->add_flag("--emit-scenario", sim.emit_scenario, "write the first scenario as JSON instead");
  add_common(simulate, common);

  Index bench_count = 10000;
  Index bench_n = 6;
  std::uint64_t bench_seed = 1;
  unsigned bench_threads = 1;
  auto* bench = app.add_subcommand("bench", "time a batch of solves");
  bench->add_option("--count", bench_count)->check(CLI::NonNegativeNumber);
  bench->add_option("--n", bench_n)->check(CLI::PositiveNumber);
  bench->add_option("--seed", bench_seed);
  bench->add_option("--threads", bench_threads)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_codes::kBadInput;
  }

  try {
    if (*check) return run_check(file, common);
    if (*solve) return run_solve(file, method, common);
    if (*simulate) return run_simulate(sim, common);
    if (*bench) return run_bench(bench_count, bench_n, bench_seed, bench_threads);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_codes::kBadInput;
  }
  return exit_codes::kBadInput;
}
