// Constrained and auxiliary consensus updates: projected, penalized,
// drift-constrained, combination and hypersurface stepping, plus the dual
// reformulation of elastic-net regularized linear problems.
//
// The functions here act on one particle given its consensus point and its
// Gaussian draw; the loop over the ensemble lives in optimizer.hpp.

#pragma once

#include "mirrorcbx/core.hpp"
#include "mirrorcbx/dynamics.hpp"
#include "mirrorcbx/mirror_maps.hpp"

#include <cmath>
#include <utility>

namespace mirrorcbx {

// ---------------------------------------------------------------------------
// Constraint functions

/// Residual vector g(x) whose zero set is the constraint set. Used by the
/// penalized objective G_p = sum |g_i|^p.
inline Vector constraint_residuals(const ConstraintSet& set, ConstVecRef x) {
  return std::visit(
      [&](const auto& s) -> Vector {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, sets::WholeSpace>) {
          return Vector(0);
        } else if constexpr (std::is_same_v<T, sets::Hyperplane>) {
          return Vector::Constant(1, (s.normal.dot(x) - s.offset) / s.normal.norm());
        } else if constexpr (std::is_same_v<T, sets::UnitSphere>) {
          return Vector::Constant(1, x.norm() - 1.0);
        } else if constexpr (std::is_same_v<T, Quadric>) {
          return Vector::Constant(1, s.value(x));
        } else if constexpr (std::is_same_v<T, sets::LinfSphere>) {
          return Vector::Constant(1, x.cwiseAbs().maxCoeff() - 1.0);
        } else if constexpr (std::is_same_v<T, sets::Stiefel>) {
          const Matrix m = unflatten(x, s.n, s.p);
          const Matrix gram = m.transpose() * m - Matrix::Identity(s.p, s.p);
          Vector out(s.p * (s.p + 1) / 2);
          Eigen::Index k = 0;
          for (int j = 0; j < s.p; ++j)
            for (int i = 0; i <= j; ++i) out[k++] = gram(i, j);
          return out;
        } else {
          return Vector::Constant(1, std::max(0.0, x.norm() - 1.0));
        }
      },
      set);
}

inline double penalty_value(const ConstraintSet& set, ConstVecRef x, int power) {
  const Vector g = constraint_residuals(set, x);
  return power == 1 ? g.lpNorm<1>() : g.squaredNorm();
}

/// J + lambda * sum |g_i|^p.
inline Objective penalized_objective(const Objective& objective, ConstraintSet set, int power, double lambda) {
  if (power != 1 && power != 2) throw ConfigError("penalty power must be 1 or 2");
  if (!(lambda >= 0.0)) throw ConfigError("penalty lambda must be >= 0");
  if (lambda == 0.0) return objective;
  return Objective([objective, set = std::move(set), power, lambda](ConstVecRef x) {
    return objective(x) + lambda * penalty_value(set, x, power);
  });
}

struct PenaltySchedule {
  double factor = 1.5;
  double tol = 1e-3;
  double lambda_max = 1e8;
};

/// Multiplies lambda by the schedule factor while the mean violation
/// (1/N) sum_i G_p(x_i) exceeds the tolerance.
inline double penalized_lambda_update(double lambda, const Ensemble& ensemble, const ConstraintSet& set, int power,
                                      const PenaltySchedule& schedule) {
  double mean = 0.0;
  for (Eigen::Index i = 0; i < ensemble.rows(); ++i) mean += penalty_value(set, ensemble.row(i).transpose(), power);
  mean /= static_cast<double>(ensemble.rows());
  if (mean > schedule.tol) return std::min(lambda * schedule.factor, schedule.lambda_max);
  return lambda;
}

/// Scalar constraint g with gradient and Hessian, for the sets that admit a
/// single smooth defining function.
struct ScalarConstraint {
  double g = 0.0;
  Vector grad;
  Matrix hess;
};

inline ScalarConstraint scalar_constraint(const ConstraintSet& set, ConstVecRef x) {
  const Eigen::Index d = x.size();
  if (const auto* h = std::get_if<sets::Hyperplane>(&set)) {
    const double nn = h->normal.norm();
    return {(h->normal.dot(x) - h->offset) / nn, h->normal / nn, Matrix::Zero(d, d)};
  }
  if (std::holds_alternative<sets::UnitSphere>(set)) {
    const double r = x.norm();
    if (r == 0.0) throw RuntimeFailure("sphere constraint gradient undefined at the origin");
    const Vector u = x / r;
    return {r - 1.0, u, (Matrix::Identity(d, d) - u * u.transpose()) / r};
  }
  if (const auto* q = std::get_if<Quadric>(&set)) {
    return {q->value(x), q->gradient(x), 2.0 * q->q()};
  }
  throw ConfigError("constraint needs a hyperplane, sphere or quadric set");
}

// ---------------------------------------------------------------------------
// Per-particle updates

/// Explicit Euler-Maruyama predictor x - tau (x - m) + sigma noise.
inline Vector cbo_update(ConstVecRef x, ConstVecRef m, const OptimizerParams& p, ConstVecRef draw) {
  const Vector r = x - m;
  return x - p.tau * r + p.sigma * noise(p.noise, r, p.tau, draw);
}

/// Semi-implicit drift-constrained update with G = g^2:
/// x - (I + tau lambda Hess G)^{-1} (tau (x - m) + tau lambda grad G - sigma noise).
/// Written as predictor - tau lambda grad G + M^{-1}(tau lambda Hess G v) so
/// that lambda = 0 reproduces the plain predictor exactly.
inline Vector drift_constrained_update(ConstVecRef x, ConstVecRef m, const OptimizerParams& p, ConstVecRef draw,
                                       const ConstraintSet& set, double lambda) {
  Vector base = cbo_update(x, m, p, draw);
  if (lambda == 0.0) return base;
  const ScalarConstraint c = scalar_constraint(set, x);
  const Vector grad_g2 = 2.0 * c.g * c.grad;
  const Matrix hess_g2 = 2.0 * c.grad * c.grad.transpose() + 2.0 * c.g * c.hess;
  const Vector r = x - m;
  const Vector v = p.tau * r + p.tau * lambda * grad_g2 - p.sigma * noise(p.noise, r, p.tau, draw);
  const Eigen::Index d = x.size();
  const Matrix system = Matrix::Identity(d, d) + p.tau * lambda * hess_g2;
  Eigen::PartialPivLU<Matrix> lu(system);
  const double cond = lu.rcond();
  if (!(cond > 1e-14)) throw RuntimeFailure("drift-constrained system is singular");
  base -= p.tau * lambda * grad_g2;
  base += lu.solve(p.tau * lambda * (hess_g2 * v));
  return base;
}

/// Implicit constraint correction after the predictor v, with g evaluated at
/// the previous position. The sphere is treated as the quadric |x|^2 - 1.
inline Vector combination_correction(Vector v, ConstVecRef x_prev, const ConstraintSet& set, double tau,
                                     double lambda2) {
  if (lambda2 == 0.0) return v;
  if (const auto* h = std::get_if<sets::Hyperplane>(&set)) {
    const double nn = h->normal.norm();
    const double g = (h->normal.dot(x_prev) - h->offset) / nn;
    return v - (2.0 * tau * lambda2 * g / nn) * h->normal;
  }
  if (std::holds_alternative<sets::UnitSphere>(set)) {
    const double g = x_prev.squaredNorm() - 1.0;
    const double denom = 1.0 + 4.0 * tau * lambda2 * g;
    if (std::abs(denom) < 1e-14) throw RuntimeFailure("combination update: singular implicit factor");
    return v / denom;
  }
  if (const auto* q = std::get_if<Quadric>(&set)) {
    const double g = q->value(x_prev);
    const Eigen::Index d = v.size();
    const Matrix system = Matrix::Identity(d, d) + 4.0 * tau * lambda2 * g * q->q();
    Eigen::PartialPivLU<Matrix> lu(system);
    if (!(lu.rcond() > 1e-14)) throw RuntimeFailure("combination update: singular implicit matrix");
    return lu.solve(v - 2.0 * tau * lambda2 * g * q->n());
  }
  throw ConfigError("combination needs a hyperplane, sphere or quadric set");
}

/// G_2 term added to the energies from which the combination consensus is formed.
inline double combination_penalty(const ConstraintSet& set, ConstVecRef x) {
  if (const auto* h = std::get_if<sets::Hyperplane>(&set)) {
    const double g = (h->normal.dot(x) - h->offset) / h->normal.norm();
    return g * g;
  }
  if (std::holds_alternative<sets::UnitSphere>(set)) {
    const double g = x.squaredNorm() - 1.0;
    return g * g;
  }
  if (const auto* q = std::get_if<Quadric>(&set)) {
    const double g = q->value(x);
    return g * g;
  }
  throw ConfigError("combination needs a hyperplane, sphere or quadric set");
}

/// Tangent projector of the unit sphere at x / |x|.
inline Vector sphere_tangent(ConstVecRef x, ConstVecRef v) {
  const Vector u = x / x.norm();
  return v - u.dot(v) * u;
}

/// One Euler-Maruyama step of the tangential dynamics on the unit sphere,
/// renormalized afterwards. The anisotropic form uses the noise
/// P(x) diag(x - m) dW with Ito correction -(sigma^2/2) sum_i r_i^2 (1 - u_i^2) u.
inline Vector hypersurface_sphere_update(ConstVecRef x, ConstVecRef m, const OptimizerParams& p, ConstVecRef draw) {
  const double nx = x.norm();
  if (nx == 0.0) throw RuntimeFailure("hypersurface step: particle at the origin");
  const Vector u = x / nx;
  const Vector r = x - m;
  const auto d = static_cast<double>(x.size());
  const double sqrt_tau = std::sqrt(p.tau);
  Vector next = x - p.tau * sphere_tangent(x, r);
  if (p.noise == NoiseKind::isotropic) {
    next += (p.sigma * sqrt_tau * r.norm()) * sphere_tangent(x, draw);
    next -= (p.tau * 0.5 * p.sigma * p.sigma * r.squaredNorm() * (d - 1.0) / nx) * u;
  } else {
    next += (p.sigma * sqrt_tau) * sphere_tangent(x, r.cwiseProduct(draw));
    const double ito = (r.array().square() * (1.0 - u.array().square())).sum();
    next -= (p.tau * 0.5 * p.sigma * p.sigma * ito / nx) * u;
  }
  const double nn = next.norm();
  if (!(nn > 0.0) || !std::isfinite(nn)) throw RuntimeFailure("hypersurface step left the sphere's neighborhood");
  return next / nn;
}

/// P(X) Z = Z - (X Z^T X + X X^T Z) / 2.
inline Matrix stiefel_tangent(const Matrix& x, const Matrix& z) {
  return z - 0.5 * (x * z.transpose() * x + x * (x.transpose() * z));
}

/// Stiefel analogue of the sphere step with grad gamma -> X and the Laplacian
/// term (2n - p - 1) / 2, isotropic noise, followed by projection.
inline Vector hypersurface_stiefel_update(ConstVecRef x, ConstVecRef m, const OptimizerParams& p, ConstVecRef draw,
                                          const sets::Stiefel& shape) {
  if (p.noise != NoiseKind::isotropic) throw ConfigError("hypersurface stiefel stepping supports isotropic noise only");
  const Matrix xm = unflatten(x, shape.n, shape.p);
  const Matrix diff = xm - unflatten(m, shape.n, shape.p);
  const Matrix z = unflatten(draw, shape.n, shape.p);
  const double laplace = (2.0 * shape.n - shape.p - 1.0) / 2.0;
  const double rn = diff.norm();
  Matrix next = xm - p.tau * stiefel_tangent(xm, diff);
  next += (p.sigma * std::sqrt(p.tau) * rn) * stiefel_tangent(xm, z);
  next -= (p.tau * 0.5 * p.sigma * p.sigma * rn * rn * laplace) * xm;
  return flatten(project_stiefel(next));
}

// ---------------------------------------------------------------------------
// Dual problem

/// Objective over the dual variable v of min lambda |x|_1 + |x|^2/2 subject to
/// A x = b, and the map back to the primal solution.
struct DualizedProblem {
  Objective objective;
  std::function<Vector(ConstVecRef)> recover;
};

/// (lambda / 2) |y - Proj_{B_inf}(y)|^2
inline double dual_conjugate(ConstVecRef y, double lambda) {
  const Vector excess = y - y.cwiseMax(-1.0).cwiseMin(1.0);
  return 0.5 * lambda * excess.squaredNorm();
}

inline DualizedProblem dualized_problem(const Matrix& a, const Vector& b, double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("dualized problem needs lambda > 0");
  if (a.rows() != b.size()) throw DimensionError("dualized problem: A and b disagree");
  DualizedProblem out;
  out.objective = Objective(
      [a, b, lambda](ConstVecRef v) { return -b.dot(v) + dual_conjugate(a.transpose() * v, lambda); },
      [a, b, lambda](ConstVecRef v) -> Vector {
        const Vector y = a.transpose() * v;
        const Vector excess = y - y.cwiseMax(-1.0).cwiseMin(1.0);
        return -b + lambda * (a * excess);
      });
  out.recover = [a, lambda](ConstVecRef v) -> Vector { return lambda * shrink(a.transpose() * v, 1.0); };
  return out;
}

}  // namespace mirrorcbx
