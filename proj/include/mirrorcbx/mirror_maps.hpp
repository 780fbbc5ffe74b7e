// Distance generating functions phi: subgradient selection, the inverse map
// grad phi^*, phi itself and Bregman distances, plus the projections that
// serve as grad phi^* for indicator-constrained maps.

#pragma once

#include "mirrorcbx/core.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mirrorcbx {

// ---------------------------------------------------------------------------
// Elementary maps

/// Componentwise soft threshold, the proximal map of lambda * |.|_1.
inline Vector shrink(ConstVecRef y, double lambda) {
  if (!(lambda >= 0.0)) throw DomainError("shrink: lambda must be >= 0");
  Vector out(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double v = y[i];
    out[i] = v > lambda ? v - lambda : (v < -lambda ? v + lambda : 0.0);
  }
  return out;
}

inline double log_sum_exp(ConstVecRef v) {
  const double vmax = v.maxCoeff();
  if (!std::isfinite(vmax)) return vmax;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) acc += std::exp(v[i] - vmax);
  return vmax + std::log(acc);
}

/// Softmax with max subtraction.
inline Vector simplex_inverse(ConstVecRef y) {
  const double ymax = y.maxCoeff();
  Vector out(y.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    out[i] = std::exp(y[i] - ymax);
    total += out[i];
  }
  return out / total;
}

// ---------------------------------------------------------------------------
// Projections

inline Vector project_hyperplane(ConstVecRef z, ConstVecRef normal, double offset) {
  const double nn = normal.squaredNorm();
  if (!(nn > 0.0)) throw ProjectionError("hyperplane normal must be nonzero");
  return z - ((normal.dot(z) - offset) / nn) * normal;
}

/// z / |z|; the origin maps to e_1.
inline Vector project_sphere(ConstVecRef z) {
  const double nz = z.norm();
  if (nz == 0.0) {
    Vector e = Vector::Zero(z.size());
    e[0] = 1.0;
    return e;
  }
  return z / nz;
}

inline Vector project_ball(ConstVecRef z) {
  const double nz = z.norm();
  return nz <= 1.0 ? Vector(z) : Vector(z / nz);
}

/// Clip to [-1, 1]^d, then push every maximal-magnitude component to its
/// sign. The origin maps to the all-ones corner.
inline Vector project_linf_sphere(ConstVecRef z) {
  Vector clipped = z.cwiseMax(-1.0).cwiseMin(1.0);
  const double m = clipped.cwiseAbs().maxCoeff();
  if (m == 0.0) return Vector::Ones(z.size());
  for (Eigen::Index i = 0; i < clipped.size(); ++i) {
    if (std::abs(clipped[i]) == m) clipped[i] = clipped[i] > 0.0 ? 1.0 : -1.0;
  }
  return clipped;
}

/// Nearest matrix with orthonormal columns: U V^T from the thin SVD.
inline Matrix project_stiefel(const Matrix& x) {
  if (x.rows() < x.cols() || x.cols() < 1) throw DimensionError("stiefel projection needs n >= p >= 1");
  Eigen::JacobiSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  if (!(s.minCoeff() >= 1e-12 * s.maxCoeff()) || s.maxCoeff() == 0.0)
    throw ProjectionError("stiefel projection: rank-deficient input", s.minCoeff());
  return svd.matrixU() * svd.matrixV().transpose();
}

inline Matrix unflatten(ConstVecRef v, Eigen::Index n, Eigen::Index p) {
  if (v.size() != n * p) throw DimensionError("flattened size does not match n * p");
  return Eigen::Map<const Matrix>(v.data(), n, p);
}

inline Vector flatten(const Matrix& x) { return Eigen::Map<const Vector>(x.data(), x.size()); }

/// Level set { x : <x, Q x> + <n, x> + c = 0 } with Q symmetrized on
/// construction. The eigendecomposition of Q is cached for projections.
class Quadric {
 public:
  Quadric(Matrix q, Vector n, double c, double tol = 1e-8, int max_iter = 50)
      : q_(0.5 * (q + q.transpose())), n_(std::move(n)), c_(c), tol_(tol), max_iter_(max_iter) {
    if (q_.rows() != q_.cols() || q_.rows() != n_.size()) throw DimensionError("quadric: Q and n disagree");
    if (!(tol_ > 0.0)) throw ConfigError("quadric: tol must be > 0");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(q_);
    basis_ = eig.eigenvectors();
    eigenvalues_ = eig.eigenvalues();
  }

  double value(ConstVecRef x) const { return x.dot(q_ * x) + n_.dot(x) + c_; }
  Vector gradient(ConstVecRef x) const { return 2.0 * (q_ * x) + n_; }

  const Matrix& q() const noexcept { return q_; }
  const Vector& n() const noexcept { return n_; }
  double c() const noexcept { return c_; }
  double tol() const noexcept { return tol_; }
  int max_iter() const noexcept { return max_iter_; }
  Eigen::Index dim() const noexcept { return n_.size(); }

  Vector project(ConstVecRef z) const;

 private:
  Matrix q_;
  Vector n_;
  double c_;
  double tol_;
  int max_iter_;
  Matrix basis_;
  Vector eigenvalues_;
};

// Nearest-point projection. The stationarity condition p - z + t grad g(p) = 0
// gives p(t) = (I + 2tQ)^{-1}(z - t n). In the eigenbasis of Q the residual
// f(t) = g(p(t)) is strictly decreasing on the interval where I + 2tQ is
// positive definite, which contains t = 0 and the multiplier of the nearest
// point. The root is bracketed and polished with safeguarded Newton. When the
// root sits on a pole (z symmetric with respect to an eigen-direction) the
// free component is solved from the scalar quadratic at the pole. Constraint
// gradient steps polish or rescue whatever remains.
inline Vector Quadric::project(ConstVecRef z) const {
  if (z.size() != dim()) throw DimensionError("quadric projection: dimension mismatch");
  if (std::abs(value(z)) <= tol_) return z;

  const Vector zt = basis_.transpose() * z;
  const Vector nt = basis_.transpose() * n_;
  const Eigen::Index d = dim();
  const double scale = std::max(1e-300, eigenvalues_.cwiseAbs().maxCoeff());

  auto point = [&](double t) {
    Vector p(d);
    for (Eigen::Index i = 0; i < d; ++i) p[i] = (zt[i] - t * nt[i]) / (1.0 + 2.0 * t * eigenvalues_[i]);
    return p;
  };
  auto residual = [&](const Vector& p) {
    double acc = c_;
    for (Eigen::Index i = 0; i < d; ++i) acc += eigenvalues_[i] * p[i] * p[i] + nt[i] * p[i];
    return acc;
  };
  auto slope = [&](double t, const Vector& p) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      const double gi = 2.0 * eigenvalues_[i] * p[i] + nt[i];
      acc -= gi * gi / (1.0 + 2.0 * t * eigenvalues_[i]);
    }
    return acc;
  };

  double lo = -kInf;
  double hi = kInf;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double l = eigenvalues_[i];
    if (l > 1e-14 * scale) lo = std::max(lo, -0.5 / l);
    if (l < -1e-14 * scale) hi = std::min(hi, -0.5 / l);
  }

  std::vector<Vector> candidates;
  const double f0 = residual(zt);
  const bool upward = f0 > 0.0;  // f decreasing: root lies at t > 0 iff f(0) > 0
  const double end = upward ? hi : lo;

  // Bracket the root between 0 and the interval end.
  double a = 0.0;
  double fa = f0;
  double b = 0.0;
  bool bracketed = false;
  for (int k = 1; k <= 200 && !bracketed; ++k) {
    double t;
    if (std::isfinite(end)) {
      t = end - end * std::ldexp(1.0, -k);
      if (t == end) break;
    } else {
      t = (upward ? 1.0 : -1.0) * std::ldexp(1.0, k - 20);
      if (!std::isfinite(t)) break;
    }
    const double ft = residual(point(t));
    if (!std::isfinite(ft) || (upward ? ft <= 0.0 : ft >= 0.0)) {
      b = t;
      bracketed = std::isfinite(ft);
      if (!bracketed) {
        // Overflowed while crossing; the sign change is between a and t.
        bracketed = true;
      }
    } else {
      a = t;
      fa = ft;
    }
  }

  if (bracketed) {
    // Safeguarded Newton on [a, b] with f(a) on the side of f(0).
    double lo_t = std::min(a, b);
    double hi_t = std::max(a, b);
    double t = a;
    (void)fa;
    for (int it = 0; it < max_iter_ + 100; ++it) {
      const Vector p = point(t);
      const double ft = residual(p);
      if (std::abs(ft) <= 0.01 * tol_) break;
      // maintain bracket: f decreasing, so f > 0 means root is to the right
      if (ft > 0.0)
        lo_t = t;
      else
        hi_t = t;
      const double df = slope(t, p);
      double next = (df != 0.0 && std::isfinite(df)) ? t - ft / df : 0.5 * (lo_t + hi_t);
      if (!(next > lo_t && next < hi_t)) next = 0.5 * (lo_t + hi_t);
      if (next == t || hi_t - lo_t <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(t)) {
        t = next;
        break;
      }
      t = next;
    }
    candidates.push_back(basis_ * point(t));
  } else if (std::isfinite(end)) {
    // Root on the pole: components whose denominators vanish are free.
    Vector p = Vector::Zero(d);
    Eigen::Index free_idx = -1;
    double rest = c_;
    for (Eigen::Index i = 0; i < d; ++i) {
      const double denom = 1.0 + 2.0 * end * eigenvalues_[i];
      if (std::abs(denom) < 1e-10) {
        if (free_idx < 0) free_idx = i;
        continue;
      }
      p[i] = (zt[i] - end * nt[i]) / denom;
      rest += eigenvalues_[i] * p[i] * p[i] + nt[i] * p[i];
    }
    if (free_idx >= 0) {
      const double qa = eigenvalues_[free_idx];
      const double qb = nt[free_idx];
      const double disc = qb * qb - 4.0 * qa * rest;
      if (disc >= 0.0 && qa != 0.0) {
        const double sq = std::sqrt(disc);
        for (double s : {(-qb + sq) / (2.0 * qa), (-qb - sq) / (2.0 * qa)}) {
          p[free_idx] = s;
          candidates.push_back(basis_ * p);
        }
      }
    }
  }

  // Constraint-gradient polishing / fallback.
  auto polish = [&](Vector p) {
    for (int it = 0; it < max_iter_; ++it) {
      const double gv = value(p);
      if (std::abs(gv) <= tol_) break;
      const Vector gr = gradient(p);
      const double gn = gr.squaredNorm();
      if (!(gn > 0.0)) break;
      p -= (gv / gn) * gr;
    }
    return p;
  };
  for (auto& cand : candidates) {
    if (std::abs(value(cand)) > tol_) cand = polish(cand);
  }
  if (candidates.empty()) candidates.push_back(polish(Vector(z)));

  double best_dist = kInf;
  double best_residual = kInf;
  const Vector* best = nullptr;
  for (const auto& cand : candidates) {
    const double r = std::abs(value(cand));
    best_residual = std::min(best_residual, r);
    if (r > tol_ || !cand.allFinite()) continue;
    const double dist = (cand - z).squaredNorm();
    if (dist < best_dist) {
      best_dist = dist;
      best = &cand;
    }
  }
  if (best == nullptr) throw ProjectionError("quadric projection did not converge", best_residual);
  return *best;
}

inline Vector project_quadric(ConstVecRef z, const Quadric& quadric) { return quadric.project(z); }

// ---------------------------------------------------------------------------
// Constraint sets

namespace sets {

struct WholeSpace {};
struct Hyperplane {
  Vector normal;
  double offset = 0.0;
};
struct UnitSphere {};
struct LinfSphere {};
/// Matrices n x p with orthonormal columns, flattened column-major.
struct Stiefel {
  int n = 1;
  int p = 1;
};
struct UnitBall {};

}  // namespace sets

using ConstraintSet =
    std::variant<sets::WholeSpace, sets::Hyperplane, sets::UnitSphere, Quadric, sets::LinfSphere, sets::Stiefel,
                 sets::UnitBall>;

inline Vector project(const ConstraintSet& set, ConstVecRef z) {
  return std::visit(
      [&](const auto& s) -> Vector {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, sets::WholeSpace>) {
          return z;
        } else if constexpr (std::is_same_v<T, sets::Hyperplane>) {
          return project_hyperplane(z, s.normal, s.offset);
        } else if constexpr (std::is_same_v<T, sets::UnitSphere>) {
          return project_sphere(z);
        } else if constexpr (std::is_same_v<T, Quadric>) {
          return s.project(z);
        } else if constexpr (std::is_same_v<T, sets::LinfSphere>) {
          return project_linf_sphere(z);
        } else if constexpr (std::is_same_v<T, sets::Stiefel>) {
          return flatten(project_stiefel(unflatten(z, s.n, s.p)));
        } else {
          return project_ball(z);
        }
      },
      set);
}

/// Distance-like measure of how far x is from satisfying the set's equation.
inline double constraint_violation(const ConstraintSet& set, ConstVecRef x) {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, sets::WholeSpace>) {
          return 0.0;
        } else if constexpr (std::is_same_v<T, sets::Hyperplane>) {
          return std::abs(s.normal.dot(x) - s.offset) / s.normal.norm();
        } else if constexpr (std::is_same_v<T, sets::UnitSphere>) {
          return std::abs(x.norm() - 1.0);
        } else if constexpr (std::is_same_v<T, Quadric>) {
          return std::abs(s.value(x));
        } else if constexpr (std::is_same_v<T, sets::LinfSphere>) {
          return std::abs(x.cwiseAbs().maxCoeff() - 1.0);
        } else if constexpr (std::is_same_v<T, sets::Stiefel>) {
          const Matrix m = unflatten(x, s.n, s.p);
          return (m.transpose() * m - Matrix::Identity(s.p, s.p)).norm();
        } else {
          return std::max(0.0, x.norm() - 1.0);
        }
      },
      set);
}

inline bool on_set(const ConstraintSet& set, ConstVecRef x, double tol = 1e-8) {
  return constraint_violation(set, x) <= tol * (1.0 + x.norm());
}

// ---------------------------------------------------------------------------
// Mirror maps

namespace maps {

/// phi = |x|^2 / 2
struct Quadratic {};

/// phi = <x, H x> / 2 with H symmetric positive definite.
struct Preconditioned {
  Matrix h;
  Eigen::LLT<Matrix> llt;

  explicit Preconditioned(Matrix h_in) : h(0.5 * (h_in + h_in.transpose())), llt(h) {
    if (llt.info() != Eigen::Success) throw ConfigError("preconditioner must be symmetric positive definite");
  }
};

/// phi = |x|^2 / 2 + lambda |x|_1
struct ElasticNet {
  double lambda = 1.0;
};

/// phi = sum x log x restricted to the probability simplex.
struct NegLogEntropy {};

/// phi = |x|^2 / 2 + indicator of a constraint set.
struct Indicator {
  ConstraintSet set;
};

/// phi = |x|^2 / 2 + indicator of the closed unit ball.
struct Ball {};

}  // namespace maps

using MirrorMap =
    std::variant<maps::Quadratic, maps::Preconditioned, maps::ElasticNet, maps::NegLogEntropy, maps::Indicator,
                 maps::Ball>;

namespace detail {

inline bool on_simplex(ConstVecRef x, double tol = 1e-8) {
  return x.minCoeff() >= -tol && std::abs(x.sum() - 1.0) <= tol;
}

}  // namespace detail

/// grad phi^*
inline Vector map_inverse(const MirrorMap& map, ConstVecRef y) {
  return std::visit(
      [&](const auto& m) -> Vector {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, maps::Quadratic>) {
          return y;
        } else if constexpr (std::is_same_v<T, maps::Preconditioned>) {
          return m.llt.solve(y);
        } else if constexpr (std::is_same_v<T, maps::ElasticNet>) {
          return shrink(y, m.lambda);
        } else if constexpr (std::is_same_v<T, maps::NegLogEntropy>) {
          return simplex_inverse(y);
        } else if constexpr (std::is_same_v<T, maps::Indicator>) {
          return project(m.set, y);
        } else {
          return project_ball(y);
        }
      },
      map);
}

/// One element of the subdifferential of phi at a feasible x.
inline Vector map_forward(const MirrorMap& map, ConstVecRef x) {
  return std::visit(
      [&](const auto& m) -> Vector {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, maps::Quadratic>) {
          return x;
        } else if constexpr (std::is_same_v<T, maps::Preconditioned>) {
          return m.h * x;
        } else if constexpr (std::is_same_v<T, maps::ElasticNet>) {
          Vector out(x.size());
          for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double s = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
            out[i] = x[i] + m.lambda * s;
          }
          return out;
        } else if constexpr (std::is_same_v<T, maps::NegLogEntropy>) {
          if (!detail::on_simplex(x) || x.minCoeff() <= 0.0)
            throw DomainError("neg-log-entropy forward map needs a point in the open simplex");
          return (x.array().log() + 1.0).matrix();
        } else if constexpr (std::is_same_v<T, maps::Indicator>) {
          if (!on_set(m.set, x)) throw DomainError("indicator forward map called off the constraint set");
          return x;
        } else {
          if (x.norm() > 1.0 + 1e-8) throw DomainError("ball forward map called outside the unit ball");
          return x;
        }
      },
      map);
}

/// phi(x); +infinity off the domain.
inline double phi_value(const MirrorMap& map, ConstVecRef x) {
  return std::visit(
      [&](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, maps::Quadratic>) {
          return 0.5 * x.squaredNorm();
        } else if constexpr (std::is_same_v<T, maps::Preconditioned>) {
          return 0.5 * x.dot(m.h * x);
        } else if constexpr (std::is_same_v<T, maps::ElasticNet>) {
          return 0.5 * x.squaredNorm() + m.lambda * x.lpNorm<1>();
        } else if constexpr (std::is_same_v<T, maps::NegLogEntropy>) {
          if (!detail::on_simplex(x)) return kInf;
          double acc = 0.0;
          for (Eigen::Index i = 0; i < x.size(); ++i)
            if (x[i] > 0.0) acc += x[i] * std::log(x[i]);
          return acc;
        } else if constexpr (std::is_same_v<T, maps::Indicator>) {
          return on_set(m.set, x) ? 0.5 * x.squaredNorm() : kInf;
        } else {
          return x.norm() <= 1.0 + 1e-8 ? 0.5 * x.squaredNorm() : kInf;
        }
      },
      map);
}

/// D_phi^y(x_hat, grad phi^*(y)) = phi(x_hat) - phi(x) - <y, x_hat - x> with
/// x = grad phi^*(y). Returns +infinity when x_hat is outside dom phi.
inline double bregman_distance(const MirrorMap& map, ConstVecRef x_hat, ConstVecRef y) {
  const double phi_hat = phi_value(map, x_hat);
  if (!std::isfinite(phi_hat)) return kInf;
  return std::visit(
      [&](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, maps::Quadratic>) {
          return 0.5 * (y - x_hat).squaredNorm();
        } else if constexpr (std::is_same_v<T, maps::Preconditioned>) {
          const Vector diff = x_hat - m.llt.solve(y);
          return 0.5 * diff.dot(m.h * diff);
        } else if constexpr (std::is_same_v<T, maps::NegLogEntropy>) {
          // Kullback-Leibler divergence against softmax(y), via log-softmax.
          const double lse = log_sum_exp(y);
          double acc = 0.0;
          for (Eigen::Index i = 0; i < x_hat.size(); ++i)
            if (x_hat[i] > 0.0) acc += x_hat[i] * (std::log(x_hat[i]) - (y[i] - lse));
          return std::max(0.0, acc);
        } else {
          const Vector x = map_inverse(map, y);
          const double d = phi_hat - phi_value(map, x) - y.dot(x_hat - x);
          return std::max(0.0, d);
        }
      },
      map);
}

/// Applies grad phi^* to every row.
inline Ensemble map_inverse_rows(const MirrorMap& map, const Ensemble& dual) {
  if (std::holds_alternative<maps::Quadratic>(map)) return dual;
  Ensemble out(dual.rows(), dual.cols());
  for (Eigen::Index i = 0; i < dual.rows(); ++i) out.row(i) = map_inverse(map, dual.row(i).transpose()).transpose();
  return out;
}

inline Ensemble map_forward_rows(const MirrorMap& map, const Ensemble& primal) {
  Ensemble out(primal.rows(), primal.cols());
  for (Eigen::Index i = 0; i < primal.rows(); ++i)
    out.row(i) = map_forward(map, primal.row(i).transpose()).transpose();
  return out;
}

}  // namespace mirrorcbx
