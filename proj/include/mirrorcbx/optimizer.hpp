// Optimizer driver: state initialization, one step for every optimizer kind,
// and the fixed-budget run loop that produces a RunTrace.

#pragma once

#include "mirrorcbx/core.hpp"
#include "mirrorcbx/dynamics.hpp"
#include "mirrorcbx/mirror_maps.hpp"
#include "mirrorcbx/variants.hpp"

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mirrorcbx {

enum class OptimizerKind {
  mirror_cbo,
  cbo,
  projected,
  penalized,
  drift_constrained,
  combination,
  hypersurface_sphere,
  hypersurface_stiefel,
};

inline constexpr std::string_view kind_name(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::mirror_cbo: return "mirror_cbo";
    case OptimizerKind::cbo: return "cbo";
    case OptimizerKind::projected: return "projected";
    case OptimizerKind::penalized: return "penalized";
    case OptimizerKind::drift_constrained: return "drift_constrained";
    case OptimizerKind::combination: return "combination";
    case OptimizerKind::hypersurface_sphere: return "hypersurface_sphere";
    case OptimizerKind::hypersurface_stiefel: return "hypersurface_stiefel";
  }
  return "unknown";
}

inline const std::vector<OptimizerKind>& all_optimizer_kinds() {
  static const std::vector<OptimizerKind> kinds = {
      OptimizerKind::mirror_cbo,        OptimizerKind::cbo,         OptimizerKind::projected,
      OptimizerKind::penalized,         OptimizerKind::drift_constrained, OptimizerKind::combination,
      OptimizerKind::hypersurface_sphere, OptimizerKind::hypersurface_stiefel};
  return kinds;
}

inline OptimizerKind parse_kind(std::string_view name) {
  for (auto k : all_optimizer_kinds())
    if (kind_name(k) == name) return k;
  throw ConfigError("unknown optimizer kind '" + std::string(name) + "'");
}

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::mirror_cbo;
  OptimizerParams params;
  MirrorMap map = maps::Quadratic{};
  // Constraint for projected, penalized, drift, combination and hypersurface kinds.
  ConstraintSet set = sets::WholeSpace{};
  int penalty_power = 2;
  double lambda = 0.0;   // penalized and drift-constrained strength
  double lambda1 = 0.0;  // combination: penalty inside the consensus
  double lambda2 = 0.0;  // combination: implicit constraint drift
  std::optional<PenaltySchedule> penalty_schedule;
  // Mirror kind only: treat the initial ensemble as dual particles.
  bool init_in_dual = false;

  void validate() const {
    params.validate();
    if (penalty_power != 1 && penalty_power != 2) throw ConfigError("penalty power must be 1 or 2");
    if (!(lambda >= 0.0 && lambda1 >= 0.0 && lambda2 >= 0.0)) throw ConfigError("penalty strengths must be >= 0");
    if (kind == OptimizerKind::hypersurface_sphere && !std::holds_alternative<sets::UnitSphere>(set))
      throw ConfigError("hypersurface_sphere needs the sphere set");
    if (kind == OptimizerKind::hypersurface_stiefel) {
      if (!std::holds_alternative<sets::Stiefel>(set)) throw ConfigError("hypersurface_stiefel needs a stiefel set");
      if (params.noise != NoiseKind::isotropic) throw ConfigError("hypersurface_stiefel supports isotropic noise only");
    }
    if ((kind == OptimizerKind::drift_constrained || kind == OptimizerKind::combination) &&
        !(std::holds_alternative<sets::Hyperplane>(set) || std::holds_alternative<sets::UnitSphere>(set) ||
          std::holds_alternative<Quadric>(set) || std::holds_alternative<sets::WholeSpace>(set)))
      throw ConfigError("drift and combination need a hyperplane, sphere or quadric set");
    if (params.discrepancy && params.discrepancy->target == DiscrepancyTarget::map_lambda &&
        !(kind == OptimizerKind::mirror_cbo && std::holds_alternative<maps::ElasticNet>(map)))
      throw ConfigError("discrepancy on the map lambda needs mirror_cbo with an elastic-net map");
    if (init_in_dual && kind != OptimizerKind::mirror_cbo) throw ConfigError("init_in_dual applies to mirror_cbo only");
  }

  bool is_mirror() const noexcept { return kind == OptimizerKind::mirror_cbo; }
};

// ---------------------------------------------------------------------------

namespace detail {

inline bool projects_each_step(OptimizerKind k) {
  return k == OptimizerKind::projected || k == OptimizerKind::hypersurface_sphere ||
         k == OptimizerKind::hypersurface_stiefel;
}

inline Ensemble project_rows(const ConstraintSet& set, const Ensemble& e) {
  Ensemble out(e.rows(), e.cols());
  for (Eigen::Index i = 0; i < e.rows(); ++i) out.row(i) = project(set, e.row(i).transpose()).transpose();
  return out;
}

inline int l0_count(ConstVecRef x) {
  int n = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) n += x[i] != 0.0 ? 1 : 0;
  return n;
}

}  // namespace detail

/// Energies the consensus is formed from; the objective itself unless the
/// kind adds penalty or sparsity terms.
inline Vector effective_energies(const OptimizerSpec& spec, const OptimizerState& state, const Vector& raw) {
  Vector eff = raw;
  switch (spec.kind) {
    case OptimizerKind::mirror_cbo:
    case OptimizerKind::cbo:
      if (state.l0_weight > 0.0)
        for (Eigen::Index i = 0; i < eff.size(); ++i)
          eff[i] += state.l0_weight * detail::l0_count(state.primal.row(i).transpose());
      break;
    case OptimizerKind::penalized:
      if (state.penalty_lambda > 0.0)
        for (Eigen::Index i = 0; i < eff.size(); ++i)
          eff[i] += state.penalty_lambda * penalty_value(spec.set, state.primal.row(i).transpose(), spec.penalty_power);
      break;
    case OptimizerKind::combination:
      if (spec.lambda1 > 0.0)
        for (Eigen::Index i = 0; i < eff.size(); ++i)
          eff[i] += spec.lambda1 * combination_penalty(spec.set, state.primal.row(i).transpose());
      break;
    default:
      break;
  }
  return eff;
}

inline void update_best(OptimizerState& state, const Vector& raw) {
  Eigen::Index best = 0;
  const double value = raw.minCoeff(&best);
  if (value < state.best_energy) {
    state.best_energy = value;
    state.best_point = state.primal.row(best).transpose();
  }
}

inline OptimizerState init_state(const OptimizerSpec& spec, const Ensemble& x0, const Objective& objective,
                                 std::uint64_t seed, std::uint64_t run = 0) {
  spec.validate();
  require_finite(x0, "initial ensemble");
  OptimizerState state;
  state.seed = seed;
  state.run = run;
  state.alpha = spec.params.alpha;
  state.map = spec.map;
  state.l0_weight = spec.params.l0_weight;
  state.penalty_lambda = spec.lambda;
  if (spec.params.resampling) state.sigma_indep = spec.params.resampling->sigma_indep;
  if (const auto* en = std::get_if<maps::ElasticNet>(&state.map)) state.map_lambda = en->lambda;

  if (spec.is_mirror()) {
    if (spec.init_in_dual) {
      state.dual = x0;
      state.primal = map_inverse_rows(state.map, state.dual);
    } else {
      state.primal = x0;
      state.dual = map_forward_rows(state.map, state.primal);
    }
  } else {
    state.primal = detail::projects_each_step(spec.kind) ? detail::project_rows(spec.set, x0) : x0;
    state.dual = state.primal;
  }

  const Vector raw = objective.batch_eval(state.primal);
  check_energies(raw, 0);
  state.energies = raw;
  update_best(state, raw);
  state.consensus = compute_consensus(state.primal, effective_energies(spec, state, raw), state.alpha);
  if (spec.params.resampling) record_consensus(state, state.consensus, spec.params.resampling->patience);
  return state;
}

/// Applies a changed elastic-net lambda to the map and recomputes the primal ensemble.
inline void set_map_lambda(OptimizerState& state, double lambda) {
  auto* en = std::get_if<maps::ElasticNet>(&state.map);
  if (en == nullptr) throw ConfigError("map lambda update needs an elastic-net map");
  state.map_lambda = lambda;
  en->lambda = lambda;
  state.primal = map_inverse_rows(state.map, state.dual);
}

/// One iteration: consensus from the current ensemble, particle update,
/// then scheduler, discrepancy update and resampling in that order.
inline void step(OptimizerState& state, const OptimizerSpec& spec, const Objective& objective) {
  const OptimizerParams& p = spec.params;
  const Vector raw = objective.batch_eval(state.primal);
  check_energies(raw, state.iter);
  state.energies = raw;
  update_best(state, raw);
  const Vector eff = effective_energies(spec, state, raw);
  const ConsensusField field = consensus_field(state, p, eff);
  const Eigen::Index n = state.primal.rows();
  const Eigen::Index d = state.primal.cols();

  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector x = state.primal.row(i).transpose();
    const Vector m = field.at(i);
    const Vector draw = particle_draw(state, i, d);
    switch (spec.kind) {
      case OptimizerKind::mirror_cbo: {
        const Vector r = x - m;
        const Vector y = state.dual.row(i).transpose();
        const Vector y_next = y - p.tau * r + p.sigma * noise(p.noise, r, p.tau, draw);
        state.dual.row(i) = y_next.transpose();
        break;
      }
      case OptimizerKind::cbo:
      case OptimizerKind::penalized:
        state.primal.row(i) = cbo_update(x, m, p, draw).transpose();
        break;
      case OptimizerKind::projected:
        state.primal.row(i) = project(spec.set, cbo_update(x, m, p, draw)).transpose();
        break;
      case OptimizerKind::drift_constrained:
        state.primal.row(i) =
            (std::holds_alternative<sets::WholeSpace>(spec.set) ? cbo_update(x, m, p, draw)
                                                               : drift_constrained_update(x, m, p, draw, spec.set,
                                                                                          spec.lambda))
                .transpose();
        break;
      case OptimizerKind::combination:
        state.primal.row(i) =
            (std::holds_alternative<sets::WholeSpace>(spec.set)
                 ? cbo_update(x, m, p, draw)
                 : combination_correction(cbo_update(x, m, p, draw), x, spec.set, p.tau, spec.lambda2))
                .transpose();
        break;
      case OptimizerKind::hypersurface_sphere:
        state.primal.row(i) = hypersurface_sphere_update(x, m, p, draw).transpose();
        break;
      case OptimizerKind::hypersurface_stiefel:
        state.primal.row(i) =
            hypersurface_stiefel_update(x, m, p, draw, std::get<sets::Stiefel>(spec.set)).transpose();
        break;
    }
  }
  if (spec.is_mirror()) {
    state.primal = map_inverse_rows(state.map, state.dual);
  }
  state.consensus = field.global;

  // Post-step routines.
  apply_scheduler(state, p, eff);
  if (spec.kind == OptimizerKind::penalized && spec.penalty_schedule)
    state.penalty_lambda =
        penalized_lambda_update(state.penalty_lambda, state.primal, spec.set, spec.penalty_power, *spec.penalty_schedule);
  if (p.discrepancy) {
    const double j_m = objective(state.consensus);
    if (p.discrepancy->target == DiscrepancyTarget::map_lambda) {
      set_map_lambda(state, discrepancy_update(state.map_lambda, j_m, *p.discrepancy));
    } else {
      state.l0_weight = discrepancy_update(state.l0_weight, j_m, *p.discrepancy);
    }
  }
  if (p.resampling) {
    record_consensus(state, state.consensus, p.resampling->patience);
    if (spec.is_mirror()) {
      if (resample_if_stalled(state, state.dual, *p.resampling, p.tau))
        state.primal = map_inverse_rows(state.map, state.dual);
    } else if (resample_if_stalled(state, state.primal, *p.resampling, p.tau)) {
      if (detail::projects_each_step(spec.kind)) state.primal = detail::project_rows(spec.set, state.primal);
    }
  }
  if (!spec.is_mirror()) state.dual = state.primal;
  ++state.iter;
  require_finite(state.primal, "optimizer step");
}

inline void mirrorcbo_step(OptimizerState& state, const OptimizerSpec& spec, const Objective& objective) {
  if (spec.kind != OptimizerKind::mirror_cbo) throw ConfigError("mirrorcbo_step needs a mirror_cbo spec");
  step(state, spec, objective);
}

inline void cbo_step(OptimizerState& state, const OptimizerSpec& spec, const Objective& objective) {
  if (spec.kind != OptimizerKind::cbo) throw ConfigError("cbo_step needs a cbo spec");
  step(state, spec, objective);
}

// ---------------------------------------------------------------------------
// Run loop

enum class SuccessNorm { l2, linf };

struct SuccessCriterion {
  Vector target;
  SuccessNorm norm = SuccessNorm::l2;
  double tol = 0.1;
};

inline double criterion_distance(const Vector& a, const Vector& b, SuccessNorm norm) {
  return norm == SuccessNorm::l2 ? (a - b).norm() : (a - b).lpNorm<Eigen::Infinity>();
}

struct TraceRow {
  int iter = 0;
  double best_energy = kInf;
  double consensus_dist = std::numeric_limits<double>::quiet_NaN();
  double alpha = 0.0;
  double lyapunov = std::numeric_limits<double>::quiet_NaN();
  double mass_fraction = std::numeric_limits<double>::quiet_NaN();
};

struct RunTrace {
  std::vector<TraceRow> rows;
  Vector final_consensus;
  Vector best_point;
  double best_energy = kInf;
  double final_alpha = 0.0;
  bool success = false;
  double wall_time = 0.0;
  int iterations = 0;
  int resample_events = 0;
  int n_particles = 0;
};

struct RecordOptions {
  int stride = 1;
  std::optional<SuccessCriterion> criterion;
  // Replaces the criterion distance when set; success is distance <= distance_tol.
  std::function<double(const Vector&)> distance;
  double distance_tol = 0.1;
  // Point x_hat for the Lyapunov functional; not recorded when unset.
  std::optional<Vector> lyapunov_point;
  // Predicate on dual particles for the mass fraction; not recorded when unset.
  std::function<bool(ConstVecRef)> mass_predicate;
  // Called after every step with the state, for custom diagnostics.
  std::function<void(const OptimizerState&)> observer;
};

inline double state_lyapunov(const OptimizerState& state, const OptimizerSpec& spec, const Vector& x_hat) {
  const MirrorMap quadratic = maps::Quadratic{};
  const MirrorMap& map = spec.is_mirror() ? state.map : quadratic;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < state.dual.rows(); ++i) {
    const double term = bregman_distance(map, x_hat, state.dual.row(i).transpose());
    if (!std::isfinite(term)) return kInf;
    acc += term;
  }
  return acc / static_cast<double>(state.dual.rows());
}

inline double state_mass_fraction(const OptimizerState& state, const std::function<bool(ConstVecRef)>& pred) {
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < state.dual.rows(); ++i) hits += pred(state.dual.row(i).transpose()) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(state.dual.rows());
}

/// Runs exactly params.k_max steps from x0 and summarizes the final state.
inline RunTrace run(const Objective& objective, const OptimizerSpec& spec, const Ensemble& x0, std::uint64_t seed,
                    std::uint64_t run_index = 0, const RecordOptions& options = {}) {
  if (options.stride < 1) throw ConfigError("record stride must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  OptimizerState state = init_state(spec, x0, objective, seed, run_index);
  RunTrace trace;
  trace.n_particles = static_cast<int>(x0.rows());

  for (int k = 0; k < spec.params.k_max; ++k) {
    try {
      step(state, spec, objective);
    } catch (const RuntimeFailure& e) {
      throw RuntimeFailure(std::string(e.what()) + " (step " + std::to_string(k) + ")");
    } catch (const ProjectionError& e) {
      throw ProjectionError(std::string(e.what()) + " (step " + std::to_string(k) + ")", e.residual());
    }
    if (options.observer) options.observer(state);
    if (state.iter % options.stride != 0 && k + 1 != spec.params.k_max) continue;
    TraceRow row;
    row.iter = state.iter;
    row.best_energy = state.best_energy;
    row.alpha = state.alpha;
    if (options.distance)
      row.consensus_dist = options.distance(state.consensus);
    else if (options.criterion)
      row.consensus_dist = criterion_distance(state.consensus, options.criterion->target, options.criterion->norm);
    if (options.lyapunov_point) row.lyapunov = state_lyapunov(state, spec, *options.lyapunov_point);
    if (options.mass_predicate) row.mass_fraction = state_mass_fraction(state, options.mass_predicate);
    trace.rows.push_back(row);
  }

  // Summary from the final ensemble.
  const Vector raw = objective.batch_eval(state.primal);
  check_energies(raw, state.iter);
  update_best(state, raw);
  trace.final_consensus = compute_consensus(state.primal, effective_energies(spec, state, raw), state.alpha);
  trace.best_point = state.best_point;
  trace.best_energy = state.best_energy;
  trace.final_alpha = state.alpha;
  trace.iterations = state.iter;
  trace.resample_events = state.resample_events;
  if (options.distance)
    trace.success = options.distance(trace.final_consensus) <= options.distance_tol;
  else if (options.criterion)
    trace.success = criterion_distance(trace.final_consensus, options.criterion->target, options.criterion->norm) <=
                    options.criterion->tol;
  trace.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

}  // namespace mirrorcbx
