// Benchmark functions and synthetic inverse problems.

#pragma once

#include "mirrorcbx/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace mirrorcbx {

// ---------------------------------------------------------------------------
// Test functions

/// -a exp(-(b / sqrt d) |x - s|) - exp(mean cos(2 pi c (x - s))) + e + a
inline double ackley(ConstVecRef x, double a, double b, double c, ConstVecRef shift) {
  if (x.size() != shift.size()) throw DimensionError("ackley: shift has the wrong dimension");
  const auto d = static_cast<double>(x.size());
  const Vector z = x - shift;
  double cos_sum = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) cos_sum += std::cos(2.0 * std::numbers::pi * c * z[i]);
  return -a * std::exp(-(b / std::sqrt(d)) * z.norm()) - std::exp(cos_sum / d) + std::numbers::e + a;
}

struct AckleyParams {
  double a = 20.0;
  double b = 0.1;
  double c = 1.0;
};

inline Objective make_ackley(Vector shift, AckleyParams p = {}) {
  Vector minimizer = shift;
  return Objective([shift = std::move(shift), p](ConstVecRef x) { return ackley(x, p.a, p.b, p.c, shift); }, {},
                   std::move(minimizer));
}

/// -(1/pi) |sin z_1 cos z_2| exp(1 - |z|), z = x - shift, d = 2.
inline double holder_table(ConstVecRef x, ConstVecRef shift) {
  if (x.size() != 2 || shift.size() != 2) throw DimensionError("holder table is defined for d = 2");
  const Vector z = x - shift;
  return -(1.0 / std::numbers::pi) * std::abs(std::sin(z[0]) * std::cos(z[1])) * std::exp(1.0 - z.norm());
}

inline Objective make_holder_table(Vector shift) {
  if (shift.size() != 2) throw DimensionError("holder table is defined for d = 2");
  return Objective([shift = std::move(shift)](ConstVecRef x) { return holder_table(x, shift); });
}

/// J(x) = |Ax - b|^2 / 2 with gradient A^T (Ax - b).
inline Objective quadratic_fidelity(Matrix a, Vector b) {
  if (a.rows() != b.size()) throw DimensionError("quadratic fidelity: A and b disagree");
  Matrix at = a.transpose();
  return Objective([a, b](ConstVecRef x) { return 0.5 * (a * x - b).squaredNorm(); },
                   [a, at, b](ConstVecRef x) -> Vector { return at * (a * x - b); });
}

/// J(x) = |Ax - b|_1
inline Objective l1_residual(Matrix a, Vector b) {
  if (a.rows() != b.size()) throw DimensionError("l1 residual: A and b disagree");
  return Objective([a = std::move(a), b = std::move(b)](ConstVecRef x) { return (a * x - b).lpNorm<1>(); });
}

// ---------------------------------------------------------------------------
// Linear inverse problems

struct LinearInverseProblem {
  Matrix a;
  Vector b;
  double noise_level = 0.0;  // |epsilon|
  std::optional<Vector> ground_truth;
};

/// Gaussian direction scaled to the requested norm; zero when norm is 0.
inline Vector scaled_noise(Eigen::Index n, double norm, StreamEngine& engine) {
  if (norm == 0.0) return Vector::Zero(n);
  Vector e = engine.normal_vector(n);
  return e * (norm / e.norm());
}

/// kappa_j = exp(-j^2 / (2 sigma_kappa)), j = 0..K-1.
inline Vector deconvolution_kernel(int k, double sigma_kappa) {
  Vector kappa(k);
  for (int j = 0; j < k; ++j) kappa[j] = std::exp(-static_cast<double>(j * j) / (2.0 * sigma_kappa));
  return kappa;
}

/// Lower-triangular banded convolution matrix with zero boundary: (Ax)_i = sum_j kappa_j x_{i-j}.
inline Matrix convolution_matrix(int d, const Vector& kappa) {
  Matrix a = Matrix::Zero(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < kappa.size() && j <= i; ++j) a(i, i - j) = kappa[j];
  return a;
}

inline LinearInverseProblem make_deconvolution(int d, int k, double sigma_kappa, int n_peaks, double noise_factor,
                                               StreamEngine& engine) {
  if (d < 1 || k < 1 || k > d) throw ConfigError("deconvolution needs 1 <= K <= d");
  if (n_peaks < 0 || n_peaks > d) throw ConfigError("deconvolution needs 0 <= n_peaks <= d");
  if (!(sigma_kappa > 0.0) || !(noise_factor >= 0.0)) throw ConfigError("deconvolution needs sigma_kappa > 0 and noise_factor >= 0");
  LinearInverseProblem out;
  out.a = convolution_matrix(d, deconvolution_kernel(k, sigma_kappa));
  std::vector<int> positions(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) positions[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < n_peaks; ++i) {
    const auto j = static_cast<std::size_t>(i) + engine.below(static_cast<std::uint64_t>(d - i));
    std::swap(positions[static_cast<std::size_t>(i)], positions[j]);
  }
  Vector x = Vector::Zero(d);
  for (int i = 0; i < n_peaks; ++i) {
    double amp = 0.0;
    while (amp == 0.0) amp = engine.uniform();
    x[positions[static_cast<std::size_t>(i)]] = amp;
  }
  out.noise_level = noise_factor * d;
  out.b = out.a * x + scaled_noise(d, out.noise_level, engine);
  out.ground_truth = std::move(x);
  return out;
}

/// Regression on the simplex: A has standard normal entries, the ground truth
/// is exponential samples normalized to sum one, |epsilon| = delta sqrt(d_tilde).
inline LinearInverseProblem make_simplex_regression(int d, int d_tilde, double noise_factor, StreamEngine& engine) {
  if (d < 1 || d_tilde < 1) throw ConfigError("simplex regression needs d, d_tilde >= 1");
  if (!(noise_factor >= 0.0)) throw ConfigError("simplex regression needs noise_factor >= 0");
  LinearInverseProblem out;
  out.a.resize(d_tilde, d);
  for (int i = 0; i < d_tilde; ++i)
    for (int j = 0; j < d; ++j) out.a(i, j) = engine.normal();
  Vector x(d);
  for (int j = 0; j < d; ++j) x[j] = engine.exponential();
  x /= x.sum();
  out.noise_level = noise_factor * std::sqrt(static_cast<double>(d_tilde));
  out.b = out.a * x + scaled_noise(d_tilde, out.noise_level, engine);
  out.ground_truth = std::move(x);
  return out;
}

// ---------------------------------------------------------------------------
// Phase retrieval

struct PhaseRetrievalProblem {
  Matrix frames;  // M x d, one frame vector per row
  Vector y;
  double frame_bound = 0.0;
  double radius = 0.0;
  Vector ground_truth;
};

inline double frame_lower_bound(const Matrix& frames) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(frames.transpose() * frames, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

/// Frames and ground truth uniform on the unit sphere of R^d;
/// y_m = <f_m, x>^2 + epsilon_m with |epsilon| = noise_factor sqrt(d).
inline PhaseRetrievalProblem make_phase_retrieval(int d, int m, double noise_factor, StreamEngine& engine) {
  if (d < 1 || m < d) throw ConfigError("phase retrieval needs M >= d >= 1");
  if (!(noise_factor >= 0.0)) throw ConfigError("phase retrieval needs noise_factor >= 0");
  PhaseRetrievalProblem out;
  out.frames.resize(m, d);
  for (int i = 0; i < m; ++i) {
    Vector f = engine.normal_vector(d);
    out.frames.row(i) = (f / f.norm()).transpose();
  }
  Vector x = engine.normal_vector(d);
  out.ground_truth = x / x.norm();
  out.y = (out.frames * out.ground_truth).array().square().matrix();
  out.y += scaled_noise(m, noise_factor * std::sqrt(static_cast<double>(d)), engine);
  out.frame_bound = frame_lower_bound(out.frames);
  if (!(out.frame_bound > 0.0)) throw DomainError("phase retrieval: frames do not span R^d");
  out.radius = std::sqrt(out.y.lpNorm<1>() / out.frame_bound);
  return out;
}

/// (x | sqrt(R^2 - |x|^2)) / R on the unit sphere of R^{d+1}.
inline Vector lift(const PhaseRetrievalProblem& p, ConstVecRef x) {
  const double r2 = p.radius * p.radius;
  const double x2 = x.squaredNorm();
  if (x2 > r2) throw DomainError("lift: |x| exceeds the lifting radius");
  Vector out(x.size() + 1);
  out.head(x.size()) = x / p.radius;
  out[x.size()] = std::sqrt(r2 - x2) / p.radius;
  return out;
}

/// R times the first d coordinates.
inline Vector unlift(const PhaseRetrievalProblem& p, ConstVecRef lifted) {
  return p.radius * lifted.head(lifted.size() - 1);
}

/// sum_m (<(f_m | 0), x>^2 - y_m / R^2)^2 over R^{d+1}.
inline Objective lifted_objective(const PhaseRetrievalProblem& p) {
  const Eigen::Index d = p.frames.cols();
  const Vector target = p.y / (p.radius * p.radius);
  return Objective([frames = p.frames, target, d](ConstVecRef x) {
    if (x.size() != d + 1) throw DimensionError("lifted objective expects d + 1 coordinates");
    return ((frames * x.head(d)).array().square() - target.array()).square().sum();
  });
}

/// min(|x - x_true|, |x + x_true|) for x in R^d.
inline double phase_error(const PhaseRetrievalProblem& p, ConstVecRef x) {
  return std::min((x - p.ground_truth).norm(), (x + p.ground_truth).norm());
}

/// Success of a lifted point after unlifting and sign alignment.
inline bool phase_success(const PhaseRetrievalProblem& p, ConstVecRef lifted, double tol) {
  return phase_error(p, unlift(p, lifted)) <= tol;
}

// ---------------------------------------------------------------------------
// Sparsity

inline int l0_norm(ConstVecRef x, double zero_tol = 0.0) {
  if (!(zero_tol >= 0.0)) throw DomainError("zero_tol must be >= 0");
  int n = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) n += std::abs(x[i]) > zero_tol ? 1 : 0;
  return n;
}

/// 1 - |x|_0 / d
inline double sparsity(ConstVecRef x, double zero_tol = 0.0) {
  return 1.0 - static_cast<double>(l0_norm(x, zero_tol)) / static_cast<double>(x.size());
}

}  // namespace mirrorcbx
