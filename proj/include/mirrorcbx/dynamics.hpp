// Consensus computation, noise models, parameter schedulers and the
// post-step routines shared by all consensus optimizers.

#pragma once

#include "mirrorcbx/core.hpp"
#include "mirrorcbx/mirror_maps.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <span>
#include <vector>

namespace mirrorcbx {

// ---------------------------------------------------------------------------
// Consensus

namespace detail {

// Weighted mean over the rows listed in idx, summed in the listed order.
inline Vector consensus_over(const Ensemble& primal, const Vector& energies, double alpha,
                             std::span<const Eigen::Index> idx) {
  // Log-weights are rounded once and reused, so fused multiply-adds cannot
  // shift the maximum away from zero at very large alpha.
  std::vector<double> logw;
  logw.reserve(idx.size());
  double lmax = -kInf;
  for (Eigen::Index i : idx) {
    logw.push_back(-alpha * energies[i]);
    lmax = std::max(lmax, logw.back());
  }
  double total = 0.0;
  for (double l : logw) total += std::exp(l - lmax);
  const double lse = lmax + std::log(total);
  Vector m = Vector::Zero(primal.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) m += std::exp(logw[k] - lse) * primal.row(idx[k]).transpose();
  return m;
}

inline std::vector<Eigen::Index> all_indices(Eigen::Index n) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  return idx;
}

}  // namespace detail

/// Normalized Gibbs weights exp(-alpha J_i) / sum_j exp(-alpha J_j).
inline Vector consensus_weights(const Vector& energies, double alpha) {
  const Vector logw = -alpha * energies;
  const double lse = log_sum_exp(logw);
  return (logw.array() - lse).exp().matrix();
}

inline Vector compute_consensus(const Ensemble& primal, const Vector& energies, double alpha) {
  if (primal.rows() != energies.size()) throw DimensionError("consensus: one energy per particle required");
  const auto idx = detail::all_indices(primal.rows());
  return detail::consensus_over(primal, energies, alpha, idx);
}

/// Permutation bookkeeping for consensus on sub-ensembles.
struct BatchState {
  std::vector<Eigen::Index> permutation;
  std::size_t position = 0;
  std::uint64_t reshuffles = 0;
  int batch_size = 1;
};

/// Consensus over the next batch_size indices of a random permutation. The
/// permutation is redrawn once fewer than batch_size indices remain; the
/// selected indices are summed in ascending order.
inline Vector compute_consensus_partial(const Ensemble& primal, const Vector& energies, double alpha,
                                        BatchState& batch, std::uint64_t seed, std::uint64_t run = 0) {
  const Eigen::Index n = primal.rows();
  if (batch.batch_size < 1 || batch.batch_size > n) throw ConfigError("batch size must lie in [1, N]");
  const auto b = static_cast<std::size_t>(batch.batch_size);
  if (batch.permutation.size() != static_cast<std::size_t>(n) || batch.permutation.size() - batch.position < b) {
    batch.permutation = detail::all_indices(n);
    StreamEngine engine(RngStream{seed, run, 0, batch.reshuffles, Channel::batch});
    for (std::size_t i = batch.permutation.size(); i > 1; --i)
      std::swap(batch.permutation[i - 1], batch.permutation[engine.below(i)]);
    batch.position = 0;
    ++batch.reshuffles;
  }
  std::vector<Eigen::Index> chosen(batch.permutation.begin() + static_cast<std::ptrdiff_t>(batch.position),
                                   batch.permutation.begin() + static_cast<std::ptrdiff_t>(batch.position + b));
  batch.position += b;
  std::sort(chosen.begin(), chosen.end());
  return detail::consensus_over(primal, energies, alpha, chosen);
}

/// Per-particle consensus localized by a Gaussian kernel of width kernel_width.
inline Ensemble compute_polarized_consensus(const Ensemble& primal, const Vector& energies, double alpha,
                                            double kernel_width) {
  if (!(kernel_width > 0.0)) throw ConfigError("kernel width must be > 0");
  const Eigen::Index n = primal.rows();
  Ensemble out(n, primal.cols());
  Vector logw(n);
  const double inv = 1.0 / (2.0 * kernel_width * kernel_width);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i)
      logw[i] = -(primal.row(j) - primal.row(i)).squaredNorm() * inv - alpha * energies[i];
    const double lse = log_sum_exp(logw);
    Eigen::RowVectorXd m = Eigen::RowVectorXd::Zero(primal.cols());
    for (Eigen::Index i = 0; i < n; ++i) m += std::exp(logw[i] - lse) * primal.row(i);
    out.row(j) = m;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Noise

inline Vector isotropic_noise(ConstVecRef r, double tau, ConstVecRef draw) {
  return (std::sqrt(tau) * r.norm()) * draw;
}

inline Vector anisotropic_noise(ConstVecRef r, double tau, ConstVecRef draw) {
  return std::sqrt(tau) * r.cwiseProduct(draw);
}

inline Vector noise(NoiseKind kind, ConstVecRef r, double tau, ConstVecRef draw) {
  return kind == NoiseKind::isotropic ? isotropic_noise(r, tau, draw) : anisotropic_noise(r, tau, draw);
}

// ---------------------------------------------------------------------------
// Schedulers

inline double multiply_alpha(double alpha, double factor, double alpha_max) {
  return std::min(alpha * factor, alpha_max);
}

/// log of the effective sample size minus log(eta N); decreasing in alpha.
inline double ess_log_gap(const Vector& energies, double alpha, double eta) {
  const Vector a = -alpha * energies;
  const Vector b = -2.0 * alpha * energies;
  return 2.0 * log_sum_exp(a) - log_sum_exp(b) - std::log(eta * static_cast<double>(energies.size()));
}

/// Root of (sum e^{-alpha J})^2 - eta N sum e^{-2 alpha J} by bisection in
/// log(alpha) over [cfg.bracket_lo, cfg.alpha_max].
inline double ess_alpha(const Vector& energies, const EssScheduler& cfg) {
  if (!(cfg.eta > 0.0 && cfg.eta < 1.0)) throw ConfigError("ess scheduler needs 0 < eta < 1");
  double lo = std::log(cfg.bracket_lo);
  double hi = std::log(cfg.alpha_max);
  if (ess_log_gap(energies, cfg.alpha_max, cfg.eta) > 0.0) return cfg.alpha_max;
  if (ess_log_gap(energies, cfg.bracket_lo, cfg.eta) < 0.0) return cfg.bracket_lo;
  for (int it = 0; it < cfg.max_iter && hi - lo > cfg.tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (ess_log_gap(energies, std::exp(mid), cfg.eta) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return std::min(std::exp(0.5 * (lo + hi)), cfg.alpha_max);
}

inline double discrepancy_update(double lambda, double energy_at_consensus, const DiscrepancyConfig& cfg) {
  const double next = 2.0 * energy_at_consensus < cfg.delta * cfg.delta ? lambda * cfg.eta_incr : lambda * cfg.eta_decr;
  return std::clamp(next, cfg.lambda_min, cfg.lambda_max);
}

/// True when every one of the last patience+1 consensus increments is below tol.
inline bool consensus_stalled(const std::deque<Vector>& history, int patience, double tol) {
  const auto needed = static_cast<std::size_t>(patience) + 2;
  if (history.size() < needed) return false;
  double worst = 0.0;
  for (std::size_t j = 0; j <= static_cast<std::size_t>(patience); ++j) {
    const std::size_t k = history.size() - 1 - j;
    worst = std::max(worst, (history[k] - history[k - 1]).norm());
  }
  return worst < tol;
}

// ---------------------------------------------------------------------------
// State

struct OptimizerState {
  Ensemble dual;
  Ensemble primal;
  Vector energies;  // objective values of the primal particles at the last step
  Vector consensus;
  Vector best_point;
  double best_energy = kInf;
  int iter = 0;
  double alpha = 1.0;
  double sigma_indep = 0.0;
  double map_lambda = 0.0;
  double l0_weight = 0.0;
  double penalty_lambda = 0.0;
  std::deque<Vector> consensus_history;
  BatchState batch;
  std::uint64_t seed = 0;
  std::uint64_t run = 0;
  MirrorMap map = maps::Quadratic{};
  int resample_events = 0;
};

/// Pushes m and trims the buffer to what the stall test needs.
inline void record_consensus(OptimizerState& state, const Vector& m, int patience) {
  state.consensus_history.push_back(m);
  const auto keep = static_cast<std::size_t>(std::max(patience, 0)) + 2;
  while (state.consensus_history.size() > keep) state.consensus_history.pop_front();
}

/// Adds sigma_indep sqrt(tau) N(0, I) to every row of target when the
/// consensus has stalled, then shrinks sigma_indep. Returns whether it fired.
inline bool resample_if_stalled(OptimizerState& state, Ensemble& target, const ResamplingConfig& cfg, double tau) {
  if (!consensus_stalled(state.consensus_history, cfg.patience, cfg.tol)) return false;
  const double scale = state.sigma_indep * std::sqrt(tau);
  for (Eigen::Index i = 0; i < target.rows(); ++i) {
    const Vector z = gaussian_draw(RngStream{state.seed, state.run, static_cast<std::uint64_t>(i),
                                             static_cast<std::uint64_t>(state.iter), Channel::resample},
                                   target.cols());
    target.row(i) += scale * z.transpose();
  }
  state.sigma_indep *= cfg.factor;
  ++state.resample_events;
  return true;
}

/// Standard normal draw for particle i at the state's current iteration.
inline Vector particle_draw(const OptimizerState& state, Eigen::Index i, Eigen::Index d) {
  return gaussian_draw(
      RngStream{state.seed, state.run, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(state.iter),
                Channel::noise},
      d);
}

/// Consensus point for every particle: one shared row unless polarized.
struct ConsensusField {
  Vector global;
  std::optional<Ensemble> local;

  auto at(Eigen::Index i) const {
    return local ? Vector(local->row(i).transpose()) : global;
  }
};

inline ConsensusField consensus_field(OptimizerState& state, const OptimizerParams& params, const Vector& energies) {
  ConsensusField field;
  if (params.kernel_width) {
    field.local = compute_polarized_consensus(state.primal, energies, state.alpha, *params.kernel_width);
    field.global = compute_consensus(state.primal, energies, state.alpha);
    return field;
  }
  if (params.argmin_switch && state.alpha > 1e12) {
    Eigen::Index best = 0;
    energies.minCoeff(&best);
    field.global = state.primal.row(best).transpose();
    return field;
  }
  if (params.batching) {
    state.batch.batch_size = params.batching->batch_size;
    field.global = compute_consensus_partial(state.primal, energies, state.alpha, state.batch, state.seed, state.run);
    return field;
  }
  field.global = compute_consensus(state.primal, energies, state.alpha);
  return field;
}

inline void check_energies(const Vector& energies, int iter) {
  for (Eigen::Index i = 0; i < energies.size(); ++i) {
    if (std::isnan(energies[i]))
      throw RuntimeFailure("objective returned NaN for particle " + std::to_string(i) + " at iteration " +
                           std::to_string(iter));
  }
}

/// Scheduler update of alpha from the energies used in the step.
inline void apply_scheduler(OptimizerState& state, const OptimizerParams& params, const Vector& energies) {
  if (const auto* m = std::get_if<MultiplyScheduler>(&params.scheduler)) {
    state.alpha = multiply_alpha(state.alpha, m->factor, m->alpha_max);
  } else if (const auto* e = std::get_if<EssScheduler>(&params.scheduler)) {
    state.alpha = ess_alpha(energies, *e);
  }
}

}  // namespace mirrorcbx
