// Core value types shared by every optimizer: ensembles, the counter-based
// random stream, the objective abstraction and the hyperparameter bundle.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace mirrorcbx {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// One particle per row; rows are contiguous so a particle can be handed to an
// objective without copying.
using Ensemble = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstVecRef = Eigen::Ref<const Eigen::VectorXd>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user-supplied parameters or configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the domain of a map (negative threshold, point off a constraint set, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A projection could not be computed (rank deficiency, no root, degenerate constraint).
class ProjectionError : public Error {
 public:
  explicit ProjectionError(const std::string& what, double residual = kInf)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Failure while stepping an optimizer (NaN energies, singular systems).
class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Random numbers
//
// Every Gaussian vector is a pure function of (seed, run, particle, iteration,
// channel). Parallel schedules, evaluation order and whether other particles
// drew cannot change a draw.

enum class Channel : std::uint64_t {
  noise = 1,
  resample = 2,
  init = 3,
  problem = 4,
  batch = 5,
};

struct RngStream {
  std::uint64_t seed = 0;
  std::uint64_t run = 0;
  std::uint64_t particle = 0;
  std::uint64_t iteration = 0;
  Channel channel = Channel::noise;
};

namespace detail {

constexpr std::uint64_t splitmix_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t stream_key(const RngStream& s) noexcept {
  std::uint64_t h = splitmix_mix(s.seed + 0x9e3779b97f4a7c15ULL);
  h = splitmix_mix(h ^ (s.run * 0xd1b54a32d192ed03ULL + 0x1ULL));
  h = splitmix_mix(h ^ (s.particle * 0xaef17502108ef2d9ULL + 0x2ULL));
  h = splitmix_mix(h ^ (s.iteration * 0xdb4f0b9175ae2165ULL + 0x3ULL));
  h = splitmix_mix(h ^ (static_cast<std::uint64_t>(s.channel) * 0x4f1bbcdcbfa53e0bULL));
  return h;
}

}  // namespace detail

/// Sequential generator over one stream key (splitmix64 over a counter).
/// Satisfies UniformRandomBitGenerator, but the sampling helpers below are
/// used instead of <random> distributions so results do not depend on the
/// standard library implementation.
class StreamEngine {
 public:
  using result_type = std::uint64_t;

  explicit StreamEngine(const RngStream& stream) : state_(detail::stream_key(stream)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return detail::splitmix_mix(state_);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // Box-Muller; 1 - u keeps the logarithm argument in (0, 1].
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double exponential() noexcept { return -std::log(1.0 - uniform()); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>((*this)()) * n) >> 64);
  }

  Vector normal_vector(Eigen::Index d) {
    Vector out(d);
    for (Eigen::Index i = 0; i < d; ++i) out[i] = normal();
    return out;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// d i.i.d. standard normals determined entirely by the stream coordinates.
inline Vector gaussian_draw(const RngStream& stream, Eigen::Index d) {
  StreamEngine engine(stream);
  return engine.normal_vector(d);
}

// ---------------------------------------------------------------------------
// Objectives

class Objective {
 public:
  using Eval = std::function<double(ConstVecRef)>;
  using Gradient = std::function<Vector(ConstVecRef)>;

  Objective() = default;
  explicit Objective(Eval eval, Gradient gradient = {}, std::optional<Vector> known_minimizer = {})
      : eval_(std::move(eval)),
        gradient_(std::move(gradient)),
        known_minimizer_(std::move(known_minimizer)) {}

  double operator()(ConstVecRef x) const { return eval_(x); }
  double eval(ConstVecRef x) const { return eval_(x); }

  /// Row-wise evaluation; goes through exactly the same code path as eval().
  Vector batch_eval(const Ensemble& ensemble) const {
    Vector out(ensemble.rows());
    for (Eigen::Index i = 0; i < ensemble.rows(); ++i) out[i] = eval_(ensemble.row(i).transpose());
    return out;
  }

  bool has_gradient() const noexcept { return static_cast<bool>(gradient_); }
  Vector gradient(ConstVecRef x) const {
    if (!gradient_) throw ConfigError("objective has no gradient");
    return gradient_(x);
  }

  const std::optional<Vector>& known_minimizer() const noexcept { return known_minimizer_; }
  void set_known_minimizer(Vector x) { known_minimizer_ = std::move(x); }

  explicit operator bool() const noexcept { return static_cast<bool>(eval_); }

 private:
  Eval eval_;
  Gradient gradient_;
  std::optional<Vector> known_minimizer_;
};

// ---------------------------------------------------------------------------
// Hyperparameters

enum class NoiseKind { isotropic, anisotropic };

struct MultiplyScheduler {
  double factor = 1.05;
  double alpha_max = 1e12;
};

struct EssScheduler {
  double eta = 0.5;
  double alpha_max = 1e7;
  double bracket_lo = 1e-8;
  double tol = 1e-10;
  int max_iter = 100;
};

using Scheduler = std::variant<std::monostate, MultiplyScheduler, EssScheduler>;

struct ResamplingConfig {
  double sigma_indep = 1.0;
  int patience = 10;
  double factor = 1.0;  // eta_indep
  double tol = 1e-4;
};

struct BatchingConfig {
  int batch_size = 1;
};

/// Which scalar the discrepancy principle adjusts.
enum class DiscrepancyTarget { map_lambda, l0_weight };

struct DiscrepancyConfig {
  double delta = 1.0;
  double eta_incr = 0.9;
  double eta_decr = 1.1;
  double lambda_min = 0.0;
  double lambda_max = kInf;
  DiscrepancyTarget target = DiscrepancyTarget::map_lambda;
};

struct OptimizerParams {
  double tau = 0.1;
  double alpha = 1.0;
  double sigma = 1.0;
  NoiseKind noise = NoiseKind::isotropic;
  int k_max = 100;
  Scheduler scheduler;
  std::optional<ResamplingConfig> resampling;
  std::optional<BatchingConfig> batching;
  std::optional<DiscrepancyConfig> discrepancy;
  double l0_weight = 0.0;
  // Replace the weighted consensus by the best particle once alpha exceeds 1e12.
  bool argmin_switch = false;
  // Gaussian kernel width for the polarized consensus; global consensus when unset.
  std::optional<double> kernel_width;

  void validate() const {
    if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
    if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0");
    if (!(sigma >= 0.0)) throw ConfigError("sigma must be >= 0");
    if (k_max < 0) throw ConfigError("k_max must be >= 0");
    if (!(l0_weight >= 0.0)) throw ConfigError("l0_weight must be >= 0");
    if (const auto* m = std::get_if<MultiplyScheduler>(&scheduler)) {
      if (!(m->factor > 0.0) || !(m->alpha_max > 0.0))
        throw ConfigError("multiply scheduler needs factor > 0 and alpha_max > 0");
    }
    if (const auto* e = std::get_if<EssScheduler>(&scheduler)) {
      if (!(e->eta > 0.0 && e->eta < 1.0)) throw ConfigError("ess scheduler needs 0 < eta < 1");
      if (!(e->alpha_max > e->bracket_lo)) throw ConfigError("ess scheduler bracket is empty");
    }
    if (resampling) {
      if (resampling->patience < 0) throw ConfigError("resampling patience must be >= 0");
      if (!(resampling->sigma_indep >= 0.0)) throw ConfigError("resampling sigma must be >= 0");
    }
    if (batching && batching->batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (kernel_width && !(*kernel_width > 0.0)) throw ConfigError("kernel width must be > 0");
    if (batching && kernel_width) throw ConfigError("batching and polarized consensus cannot be combined");
    if (discrepancy) {
      if (!(discrepancy->delta > 0.0)) throw ConfigError("discrepancy delta must be > 0");
      if (discrepancy->eta_incr > 1.0 || discrepancy->eta_decr < 1.0)
        throw ConfigError("discrepancy factors need eta_incr <= 1 <= eta_decr");
      if (discrepancy->lambda_min > discrepancy->lambda_max)
        throw ConfigError("discrepancy range is empty");
    }
  }
};

// ---------------------------------------------------------------------------
// Ensembles

inline bool all_finite(const Ensemble& e) { return e.allFinite(); }

inline void require_finite(const Ensemble& e, const char* what) {
  for (Eigen::Index i = 0; i < e.rows(); ++i) {
    if (!e.row(i).allFinite())
      throw RuntimeFailure(std::string(what) + ": non-finite entry in particle " + std::to_string(i));
  }
}

namespace init {

struct Normal {
  double mean = 0.0;
  double std = 1.0;
};
struct Uniform {
  double lo = 0.0;
  double hi = 1.0;
};
/// Exponential samples normalized to sum one.
struct Simplex {};
struct Sphere {
  double center = 0.0;  // applied to every coordinate
  double radius = 1.0;
};
/// Uniform on St(n, p), flattened column-major; requires d == n * p.
struct Stiefel {
  int n = 1;
  int p = 1;
};
/// Uniform direction with radius uniform in [r_min, r_max]; with antithetic
/// set, odd particles mirror their even predecessor through the origin.
struct Annulus {
  double r_min = 1.0;
  double r_max = 2.0;
  bool antithetic = true;
};
struct Explicit {
  Ensemble data;
};

}  // namespace init

using InitSpec = std::variant<init::Normal, init::Uniform, init::Simplex, init::Sphere, init::Stiefel,
                              init::Annulus, init::Explicit>;

/// Uniform sample on St(n, p) as Z (Z^T Z)^{-1/2}, Z Gaussian.
inline Matrix sample_stiefel_uniform(int n, int p, StreamEngine& engine) {
  if (n < p || p < 1) throw DimensionError("stiefel sampling needs n >= p >= 1");
  for (int attempt = 0; attempt < 2; ++attempt) {
    Matrix z(n, p);
    for (int j = 0; j < p; ++j)
      for (int i = 0; i < n; ++i) z(i, j) = engine.normal();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(z.transpose() * z);
    const Vector& ev = eig.eigenvalues();
    if (ev.minCoeff() <= 1e-12 * std::max(1.0, ev.maxCoeff())) continue;
    const Matrix inv_sqrt =
        eig.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
    return z * inv_sqrt;
  }
  throw RuntimeFailure("stiefel sampling: Z^T Z singular twice");
}

inline Ensemble make_ensemble(const InitSpec& spec, Eigen::Index n_particles, Eigen::Index dim,
                              std::uint64_t seed, std::uint64_t run = 0) {
  if (n_particles < 1 || dim < 1) throw ConfigError("ensemble needs N >= 1 and d >= 1");
  Ensemble out(n_particles, dim);
  auto engine_for = [&](Eigen::Index i) {
    return StreamEngine(RngStream{seed, run, static_cast<std::uint64_t>(i), 0, Channel::init});
  };

  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, init::Normal>) {
          if (!(s.std > 0.0)) throw ConfigError("normal init needs std > 0");
          for (Eigen::Index i = 0; i < n_particles; ++i) {
            auto eng = engine_for(i);
            for (Eigen::Index j = 0; j < dim; ++j) out(i, j) = s.mean + s.std * eng.normal();
          }
        } else if constexpr (std::is_same_v<T, init::Uniform>) {
          if (!(s.lo < s.hi)) throw ConfigError("uniform init needs lo < hi");
          for (Eigen::Index i = 0; i < n_particles; ++i) {
            auto eng = engine_for(i);
            for (Eigen::Index j = 0; j < dim; ++j) out(i, j) = eng.uniform(s.lo, s.hi);
          }
        } else if constexpr (std::is_same_v<T, init::Simplex>) {
          for (Eigen::Index i = 0; i < n_particles; ++i) {
            auto eng = engine_for(i);
            double total = 0.0;
            for (Eigen::Index j = 0; j < dim; ++j) {
              out(i, j) = eng.exponential();
              total += out(i, j);
            }
            out.row(i) /= total;
          }
        } else if constexpr (std::is_same_v<T, init::Sphere>) {
          if (!(s.radius > 0.0)) throw ConfigError("sphere init needs radius > 0");
          for (Eigen::Index i = 0; i < n_particles; ++i) {
            auto eng = engine_for(i);
            Vector z = eng.normal_vector(dim);
            double nz = z.norm();
            while (nz == 0.0) {
              z = eng.normal_vector(dim);
              nz = z.norm();
            }
            out.row(i) = (s.center + (s.radius / nz) * z.array()).matrix().transpose();
          }
        } else if constexpr (std::is_same_v<T, init::Stiefel>) {
          if (static_cast<Eigen::Index>(s.n) * s.p != dim || s.n < s.p || s.p < 1)
            throw DimensionError("stiefel init needs d == n * p and n >= p >= 1");
          for (Eigen::Index i = 0; i < n_particles; ++i) {
            auto eng = engine_for(i);
            const Matrix x = sample_stiefel_uniform(s.n, s.p, eng);
            out.row(i) = Eigen::Map<const Vector>(x.data(), dim).transpose();
          }
        } else if constexpr (std::is_same_v<T, init::Annulus>) {
          if (!(s.r_min >= 0.0 && s.r_min <= s.r_max)) throw ConfigError("annulus needs 0 <= r_min <= r_max");
          if (s.antithetic && n_particles % 2 != 0) throw ConfigError("antithetic annulus needs even N");
          const Eigen::Index step = s.antithetic ? 2 : 1;
          for (Eigen::Index i = 0; i < n_particles; i += step) {
            auto eng = engine_for(i);
            Vector z = eng.normal_vector(dim);
            const double radius = eng.uniform(s.r_min, s.r_max);
            z *= radius / z.norm();
            out.row(i) = z.transpose();
            if (s.antithetic) out.row(i + 1) = -z.transpose();
          }
        } else if constexpr (std::is_same_v<T, init::Explicit>) {
          if (s.data.rows() != n_particles || s.data.cols() != dim)
            throw DimensionError("explicit init has the wrong shape");
          out = s.data;
        }
      },
      spec);
  require_finite(out, "make_ensemble");
  return out;
}

}  // namespace mirrorcbx
