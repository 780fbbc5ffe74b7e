// Lyapunov functional, mass fractions, success rates and run aggregation.

#pragma once

#include "mirrorcbx/core.hpp"
#include "mirrorcbx/mirror_maps.hpp"
#include "mirrorcbx/objectives.hpp"
#include "mirrorcbx/optimizer.hpp"

#include <algorithm>
#include <functional>
#include <vector>

namespace mirrorcbx {

/// (1/N) sum_n D_phi^{y_n}(x_hat, grad phi^*(y_n)); +infinity if any term is.
inline double lyapunov_V(const Ensemble& dual, const MirrorMap& map, ConstVecRef x_hat) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < dual.rows(); ++i) {
    const double term = bregman_distance(map, x_hat, dual.row(i).transpose());
    if (!std::isfinite(term)) return kInf;
    acc += term;
  }
  return acc / static_cast<double>(dual.rows());
}

inline double mass_fraction(const Ensemble& dual, const std::function<bool(ConstVecRef)>& predicate) {
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < dual.rows(); ++i) hits += predicate(dual.row(i).transpose()) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(dual.rows());
}

inline double success_rate(const std::vector<Vector>& final_points, const SuccessCriterion& criterion) {
  if (final_points.empty()) throw ConfigError("success rate needs at least one run");
  if (!(criterion.tol > 0.0)) throw ConfigError("success tolerance must be > 0");
  std::size_t hits = 0;
  for (const auto& x : final_points)
    hits += criterion_distance(x, criterion.target, criterion.norm) <= criterion.tol ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(final_points.size());
}

struct Summary {
  int n_runs = 0;
  int n_failed = 0;
  double success_rate = 0.0;
  double mean_l0 = 0.0;
  std::vector<int> iters;
  std::vector<double> mean_curve;    // pointwise mean of consensus_dist
  std::vector<double> median_curve;  // pointwise median of consensus_dist
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  return 0.5 * (upper + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

/// Pointwise curves, success rate and mean |m|_0 over runs of equal length.
inline Summary aggregate(const std::vector<RunTrace>& traces, double zero_tol = 0.0) {
  if (traces.empty()) throw ConfigError("aggregate needs at least one run");
  const std::size_t len = traces.front().rows.size();
  for (const auto& t : traces)
    if (t.rows.size() != len) throw ConfigError("aggregate: traces have unequal length");
  Summary s;
  s.n_runs = static_cast<int>(traces.size());
  double hits = 0.0;
  double l0 = 0.0;
  for (const auto& t : traces) {
    hits += t.success ? 1.0 : 0.0;
    l0 += l0_norm(t.final_consensus, zero_tol);
  }
  s.success_rate = hits / s.n_runs;
  s.mean_l0 = l0 / s.n_runs;
  for (std::size_t k = 0; k < len; ++k) {
    std::vector<double> column;
    column.reserve(traces.size());
    for (const auto& t : traces) column.push_back(t.rows[k].consensus_dist);
    double mean = 0.0;
    for (double v : column) mean += v;
    s.iters.push_back(traces.front().rows[k].iter);
    s.mean_curve.push_back(mean / static_cast<double>(column.size()));
    s.median_curve.push_back(median_of(column));
  }
  return s;
}

}  // namespace mirrorcbx
