// Gradient-based reference methods: lazy mirror descent, projected gradient
// descent, spectral initialization and Wirtinger flow with backtracking.

#pragma once

#include "mirrorcbx/core.hpp"
#include "mirrorcbx/mirror_maps.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace mirrorcbx {

struct DescentTrace {
  std::vector<Vector> iterates;  // strided; always holds x_0 and the final iterate
  std::vector<double> values;    // objective at every iterate, x_0 included
  std::vector<double> steps;     // step size used by every update
  Vector final_point;
};

namespace detail {

inline void require_finite_gradient(const Vector& g, int k) {
  if (!g.allFinite()) throw RuntimeFailure("gradient is not finite at iteration " + std::to_string(k));
}

inline void record(DescentTrace& t, const Vector& x, double value, int k, int k_max, int stride) {
  t.values.push_back(value);
  if (k % stride == 0 || k == k_max) t.iterates.push_back(x);
}

}  // namespace detail

/// y_{k+1} = y_k - tau grad J(x_k), x_{k+1} = grad phi^*(y_{k+1}), y_0 = forward(x_0).
inline DescentTrace lazy_mirror_descent(const Objective& objective, const MirrorMap& map, double tau, ConstVecRef x0,
                                        int k_max, int stride = 1) {
  if (!(tau >= 0.0) || k_max < 0 || stride < 1) throw ConfigError("mirror descent needs tau >= 0, k_max >= 0, stride >= 1");
  DescentTrace t;
  Vector y = map_forward(map, x0);
  Vector x = x0;
  detail::record(t, x, objective(x), 0, k_max, stride);
  for (int k = 1; k <= k_max; ++k) {
    const Vector g = objective.gradient(x);
    detail::require_finite_gradient(g, k - 1);
    y -= tau * g;
    x = map_inverse(map, y);
    t.steps.push_back(tau);
    detail::record(t, x, objective(x), k, k_max, stride);
  }
  t.final_point = x;
  return t;
}

/// x_{k+1} = proj(x_k - tau grad J(x_k))
inline DescentTrace projected_gradient_descent(const Objective& objective, const ConstraintSet& set, double tau,
                                               ConstVecRef x0, int k_max, int stride = 1) {
  if (!(tau >= 0.0) || k_max < 0 || stride < 1) throw ConfigError("projected descent needs tau >= 0, k_max >= 0, stride >= 1");
  DescentTrace t;
  Vector x = x0;
  detail::record(t, x, objective(x), 0, k_max, stride);
  for (int k = 1; k <= k_max; ++k) {
    const Vector g = objective.gradient(x);
    detail::require_finite_gradient(g, k - 1);
    x = project(set, x - tau * g);
    t.steps.push_back(tau);
    detail::record(t, x, objective(x), k, k_max, stride);
  }
  t.final_point = x;
  return t;
}

/// Top eigenvector of a symmetric positive semidefinite matrix by power
/// iteration from the normalized all-ones vector.
inline Vector power_iteration(const Matrix& y, int max_iter = 200, double rel_tol = 1e-10) {
  Vector v = Vector::Ones(y.rows()).normalized();
  double eigenvalue = v.dot(y * v);
  for (int it = 0; it < max_iter; ++it) {
    Vector w = y * v;
    const double nw = w.norm();
    if (nw == 0.0) break;
    v = w / nw;
    const double next = v.dot(y * v);
    const bool done = std::abs(next - eigenvalue) <= rel_tol * std::abs(next);
    eigenvalue = next;
    if (done) break;
  }
  return v;
}

/// lambda v with lambda = d sum y / sum |f_m|^2 and v the top eigenvector of
/// (1/M) sum y_m f_m f_m^T. Frames are the rows of `frames`.
inline Vector spectral_init(const Matrix& frames, const Vector& y) {
  if (frames.rows() < 1 || frames.rows() != y.size()) throw DimensionError("spectral init: one measurement per frame");
  const auto m = static_cast<double>(frames.rows());
  const auto d = static_cast<double>(frames.cols());
  const double lambda = d * y.sum() / frames.squaredNorm();
  const Matrix weighted = frames.transpose() * y.asDiagonal() * frames / m;
  return lambda * power_iteration(weighted);
}

/// J(z) = (1/2M) sum (<f_m, z>^2 - y_m)^2 with its exact gradient
/// (2/M) sum (<f_m, z>^2 - y_m) <f_m, z> f_m.
inline Objective wirtinger_objective(const Matrix& frames, const Vector& y) {
  if (frames.rows() != y.size()) throw DimensionError("wirtinger objective: one measurement per frame");
  const auto m = static_cast<double>(frames.rows());
  return Objective(
      [frames, y, m](ConstVecRef z) { return ((frames * z).array().square() - y.array()).square().sum() / (2.0 * m); },
      [frames, y, m](ConstVecRef z) -> Vector {
        const Vector fz = frames * z;
        const Vector w = (fz.array().square() - y.array()) * fz.array();
        return (2.0 / m) * (frames.transpose() * w);
      });
}

struct WirtingerOptions {
  double armijo = 0.1;
  double shrink = 0.2;
  int trials = 50;
  int stride = 1;
};

/// Gradient descent from the spectral initialization with backtracking on the
/// sufficient-decrease test J(z - tau g) < J(z) - armijo tau |g|^2. When no
/// trial passes, the last (smallest) trial step is taken.
inline DescentTrace wirtinger_flow(const Matrix& frames, const Vector& y, double tau0, int k_max,
                                   const WirtingerOptions& opt = {}) {
  if (!(tau0 > 0.0) || k_max < 0) throw ConfigError("wirtinger flow needs tau0 > 0 and k_max >= 0");
  const Objective objective = wirtinger_objective(frames, y);
  DescentTrace t;
  Vector z = spectral_init(frames, y);
  double value = objective(z);
  detail::record(t, z, value, 0, k_max, opt.stride);
  for (int k = 1; k <= k_max; ++k) {
    const Vector g = objective.gradient(z);
    detail::require_finite_gradient(g, k - 1);
    const double g2 = g.squaredNorm();
    double tau = tau0;
    Vector trial = z - tau * g;
    double trial_value = objective(trial);
    for (int j = 1; j < opt.trials && !(trial_value < value - opt.armijo * tau * g2); ++j) {
      tau *= opt.shrink;
      trial = z - tau * g;
      trial_value = objective(trial);
    }
    z = std::move(trial);
    value = trial_value;
    t.steps.push_back(tau);
    detail::record(t, z, value, k, k_max, opt.stride);
  }
  t.final_point = z;
  return t;
}

}  // namespace mirrorcbx
