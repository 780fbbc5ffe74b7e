// Experiment harness: problem instances per run, parallel runs, sweeps and
// CSV/JSON output.

#pragma once

#include "mirrorcbx/baselines.hpp"
#include "mirrorcbx/config.hpp"
#include "mirrorcbx/diagnostics.hpp"
#include "mirrorcbx/objectives.hpp"
#include "mirrorcbx/optimizer.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

namespace mirrorcbx {

struct ProblemInstance {
  Objective objective;
  int dim = 0;
  std::optional<Vector> target;
  std::optional<PhaseRetrievalProblem> phase;
  double noise_level = 0.0;
};

/// Builds the problem for one run; random instances draw from the problem channel.
inline ProblemInstance build_problem(const ProblemConfig& p, std::uint64_t seed, std::uint64_t run) {
  StreamEngine engine(RngStream{seed, run, 0, 0, Channel::problem});
  ProblemInstance out;
  out.dim = p.dim;
  out.target = p.target;
  if (p.kind == "ackley") {
    out.objective = make_ackley(p.shift, p.ackley);
    if (!out.target) out.target = p.shift;
  } else if (p.kind == "holder_table") {
    out.objective = make_holder_table(p.shift);
  } else if (p.kind == "quadratic") {
    const Vector c = p.shift;
    out.objective = Objective([c](ConstVecRef x) { return 0.5 * (x - c).squaredNorm(); },
                              [c](ConstVecRef x) -> Vector { return x - c; }, c);
    if (!out.target) out.target = c;
  } else if (p.kind == "linear") {
    out.objective = p.fidelity == "l1" ? l1_residual(p.a, p.b) : quadratic_fidelity(p.a, p.b);
  } else if (p.kind == "deconvolution") {
    const auto lin = make_deconvolution(p.dim, p.kernel_size, p.sigma_kappa, p.n_peaks, p.noise_factor, engine);
    out.objective = quadratic_fidelity(lin.a, lin.b);
    out.target = lin.ground_truth;
    out.noise_level = lin.noise_level;
  } else if (p.kind == "simplex_regression") {
    const auto lin = make_simplex_regression(p.dim, p.n_measurements, p.noise_factor, engine);
    out.objective = l1_residual(lin.a, lin.b);
    out.target = lin.ground_truth;
    out.noise_level = lin.noise_level;
  } else if (p.kind == "phase_retrieval") {
    out.phase = make_phase_retrieval(p.dim, p.n_measurements, p.noise_factor, engine);
    out.objective = lifted_objective(*out.phase);
    out.dim = p.dim + 1;
    out.target = lift(*out.phase, out.phase->ground_truth);
    out.noise_level = p.noise_factor * std::sqrt(static_cast<double>(p.dim));
  } else if (p.kind == "stiefel_ackley") {
    const Vector shift = flatten(sample_stiefel_uniform(p.n, p.p, engine));
    out.objective = make_ackley(shift, p.ackley);
    out.target = shift;
  } else {
    throw ConfigError("unknown problem kind '" + p.kind + "'");
  }
  return out;
}

struct RunOutcome {
  int run = 0;
  bool ok = false;
  std::string error;
  RunTrace trace;
  double final_distance = std::numeric_limits<double>::quiet_NaN();
  int l0 = 0;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<RunOutcome> runs;
  Summary summary;
};

namespace detail {

inline RunTrace descent_trace(const DescentTrace& d, int k_max, int stride,
                              const std::function<double(const Vector&)>& distance, double tol) {
  RunTrace t;
  double best = kInf;
  std::size_t next = 1;  // iterates[0] is x_0
  for (int k = 0; k <= k_max; ++k) {
    best = std::min(best, d.values[static_cast<std::size_t>(k)]);
    if (k == 0 || (k % stride != 0 && k != k_max)) continue;
    TraceRow row;
    row.iter = k;
    row.best_energy = best;
    row.alpha = std::numeric_limits<double>::quiet_NaN();
    if (distance) row.consensus_dist = distance(d.iterates[next]);
    ++next;
    t.rows.push_back(row);
  }
  t.final_consensus = d.final_point;
  t.best_point = d.final_point;
  t.best_energy = best;
  t.iterations = k_max;
  t.n_particles = 1;
  t.final_alpha = std::numeric_limits<double>::quiet_NaN();
  if (distance) t.success = distance(d.final_point) <= tol;
  return t;
}

inline int thread_count(int n_runs) {
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("MIRRORCBX_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) threads = std::min(threads, cap);
  }
  return std::max(1, std::min(threads, n_runs));
}

}  // namespace detail

/// One run of the configured method on its own problem instance.
inline RunOutcome run_single(const ExperimentConfig& c, int run_index) {
  const auto run_id = static_cast<std::uint64_t>(run_index);
  const ProblemInstance prob = build_problem(c.problem, c.seed, run_id);
  const OptimizerConfig& o = c.optimizer;

  std::function<double(const Vector&)> distance;
  if (prob.phase) {
    const PhaseRetrievalProblem phase = *prob.phase;
    if (o.method == MethodKind::wirtinger_flow)
      distance = [phase](const Vector& x) { return phase_error(phase, x); };
    else
      distance = [phase](const Vector& x) { return phase_error(phase, unlift(phase, x)); };
  } else if (prob.target) {
    const Vector target = *prob.target;
    const SuccessNorm norm = c.success_norm;
    distance = [target, norm](const Vector& x) { return criterion_distance(x, target, norm); };
  }

  RunOutcome out;
  out.run = run_index;
  try {
    if (o.method == MethodKind::wirtinger_flow) {
      if (!prob.phase) throw ConfigError("wirtinger_flow needs a phase_retrieval problem");
      WirtingerOptions wopt;
      wopt.stride = c.stride;
      const auto d = wirtinger_flow(prob.phase->frames, prob.phase->y, o.spec.params.tau, o.spec.params.k_max, wopt);
      out.trace = detail::descent_trace(d, o.spec.params.k_max, c.stride, distance, c.success_tol);
    } else if (o.method == MethodKind::mirror_descent) {
      if (!prob.objective.has_gradient()) throw ConfigError("mirror_descent needs a differentiable objective");
      const Ensemble x0 = make_ensemble(o.init, 1, prob.dim, c.seed, run_id);
      const auto d =
          lazy_mirror_descent(prob.objective, o.spec.map, o.spec.params.tau, x0.row(0).transpose(), o.spec.params.k_max, c.stride);
      out.trace = detail::descent_trace(d, o.spec.params.k_max, c.stride, distance, c.success_tol);
    } else {
      RecordOptions rec;
      rec.stride = c.stride;
      rec.distance = distance;
      rec.distance_tol = c.success_tol;
      if (c.record_lyapunov) {
        if (!prob.target) throw ConfigError("record.lyapunov needs a problem with a known target");
        rec.lyapunov_point = *prob.target;
      }
      if (c.record_mass_in_ball) rec.mass_predicate = [](ConstVecRef y) { return y.norm() <= 1.0; };
      const Ensemble x0 = make_ensemble(o.init, o.n_particles, prob.dim, c.seed, run_id);
      out.trace = mirrorcbx::run(prob.objective, o.spec, x0, c.seed, run_id, rec);
    }
    out.ok = true;
    if (distance) out.final_distance = distance(out.trace.final_consensus);
    Vector reported = out.trace.final_consensus;
    if (prob.phase && o.method != MethodKind::wirtinger_flow) reported = unlift(*prob.phase, reported);
    out.l0 = l0_norm(reported, c.zero_tol);
  } catch (const RuntimeFailure& e) {
    out.error = e.what();
  } catch (const ProjectionError& e) {
    out.error = e.what();
  } catch (const DomainError& e) {
    out.error = e.what();
  }
  return out;
}

inline Summary summarize(const ExperimentConfig& c, const std::vector<RunOutcome>& runs) {
  std::vector<RunTrace> ok;
  int hits = 0;
  double l0 = 0.0;
  for (const auto& r : runs) {
    if (!r.ok) continue;
    ok.push_back(r.trace);
    hits += r.trace.success ? 1 : 0;
    l0 += r.l0;
  }
  Summary s;
  if (!ok.empty()) s = aggregate(ok, c.zero_tol);
  s.n_runs = static_cast<int>(runs.size());
  s.n_failed = s.n_runs - static_cast<int>(ok.size());
  s.success_rate = static_cast<double>(hits) / static_cast<double>(s.n_runs);
  s.mean_l0 = ok.empty() ? std::numeric_limits<double>::quiet_NaN() : l0 / static_cast<double>(ok.size());
  return s;
}

/// All runs of one configuration, in parallel (MIRRORCBX_THREADS caps the pool).
inline ExperimentResult run_experiment(const ExperimentConfig& c) {
  ExperimentResult result;
  result.config = c;
  result.runs.resize(static_cast<std::size_t>(c.n_runs));
  std::atomic<int> next{0};
  std::exception_ptr fatal;
  std::mutex fatal_mutex;
  auto worker = [&] {
    for (int r = next++; r < c.n_runs; r = next++) {
      try {
        result.runs[static_cast<std::size_t>(r)] = run_single(c, r);
      } catch (...) {
        std::lock_guard<std::mutex> lock(fatal_mutex);
        if (!fatal) fatal = std::current_exception();
        next = c.n_runs;
      }
    }
  };
  const int threads = detail::thread_count(c.n_runs);
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (fatal) std::rethrow_exception(fatal);
  result.summary = summarize(c, result.runs);
  return result;
}

/// One experiment per value; value i runs with seed + i.
inline std::vector<ExperimentResult> run_sweep(const json& base, const std::filesystem::path& base_dir,
                                               const std::string& param, const std::vector<json>& values) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  const ExperimentConfig reference = parse_config(base, base_dir);
  std::vector<ExperimentResult> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    json j = base;
    set_json_path(j, param, values[i]);
    ExperimentConfig c = parse_config(j, base_dir);
    c.seed = reference.seed + i;
    out.push_back(run_experiment(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output

namespace detail {

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw RuntimeFailure("cannot write '" + path.string() + "'");
  return f;
}

}  // namespace detail

inline json summary_json(const ExperimentResult& r) {
  const Summary& s = r.summary;
  json curve = {{"iter", s.iters}, {"mean", json::array()}, {"median", json::array()}};
  for (double v : s.mean_curve) curve["mean"].push_back(detail::num(v));
  for (double v : s.median_curve) curve["median"].push_back(detail::num(v));
  json errors = json::array();
  for (const auto& run : r.runs)
    if (!run.ok) errors.push_back({{"run", run.run}, {"error", run.error}});
  return {{"experiment", r.config.experiment},
          {"n_runs", s.n_runs},
          {"n_failed", s.n_failed},
          {"success_rate", s.success_rate},
          {"mean_l0", detail::num(s.mean_l0)},
          {"curve", curve},
          {"failures", errors}};
}

/// trace.csv, runs.csv, curve.csv, summary.json and the resolved config.json.
inline void write_outputs(const ExperimentResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto f = detail::open_out(dir / "trace.csv");
    f << "run,iter,best_energy,consensus_dist,alpha,lyapunov\n";
    for (const auto& run : r.runs) {
      if (!run.ok) continue;
      for (const auto& row : run.trace.rows)
        f << run.run << ',' << row.iter << ',' << detail::fmt(row.best_energy) << ',' << detail::fmt(row.consensus_dist)
          << ',' << detail::fmt(row.alpha) << ',' << (std::isnan(row.lyapunov) ? "" : detail::fmt(row.lyapunov)) << '\n';
    }
  }
  if (r.config.record_mass_in_ball) {
    auto f = detail::open_out(dir / "mass.csv");
    f << "run,iter,mass_fraction\n";
    for (const auto& run : r.runs) {
      if (!run.ok) continue;
      for (const auto& row : run.trace.rows) f << run.run << ',' << row.iter << ',' << detail::fmt(row.mass_fraction) << '\n';
    }
  }
  {
    auto f = detail::open_out(dir / "runs.csv");
    f << "run,ok,success,final_distance,l0,best_energy,resample_events,error\n";
    for (const auto& run : r.runs) {
      std::string err = run.error;
      for (char& ch : err)
        if (ch == ',' || ch == '\n') ch = ';';
      f << run.run << ',' << run.ok << ',' << (run.ok && run.trace.success) << ',' << detail::fmt(run.final_distance) << ','
        << run.l0 << ',' << detail::fmt(run.trace.best_energy) << ',' << run.trace.resample_events << ',' << err << '\n';
    }
  }
  {
    auto f = detail::open_out(dir / "curve.csv");
    f << "iter,mean,median\n";
    for (std::size_t k = 0; k < r.summary.iters.size(); ++k)
      f << r.summary.iters[k] << ',' << detail::fmt(r.summary.mean_curve[k]) << ','
        << detail::fmt(r.summary.median_curve[k]) << '\n';
  }
  detail::open_out(dir / "summary.json") << summary_json(r).dump(2) << '\n';
  detail::open_out(dir / "config.json") << to_json(r.config).dump(2) << '\n';
}

inline void write_sweep(const std::vector<ExperimentResult>& results, const std::string& param,
                        const std::vector<json>& values, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto f = detail::open_out(dir / "sweep.csv");
  f << "value,seed,n_runs,n_failed,success_rate,mean_l0,final_mean_dist\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    const std::string value = values[i].is_string() ? values[i].get<std::string>() : values[i].dump();
    const double final_mean = r.summary.mean_curve.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                           : r.summary.mean_curve.back();
    f << value << ',' << r.config.seed << ',' << r.summary.n_runs << ',' << r.summary.n_failed << ','
      << detail::fmt(r.summary.success_rate) << ',' << detail::fmt(r.summary.mean_l0) << ',' << detail::fmt(final_mean)
      << '\n';
    write_outputs(r, dir / (param + "=" + value));
  }
}

}  // namespace mirrorcbx
