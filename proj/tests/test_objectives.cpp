#include "mirrorcbx/objectives.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace mirrorcbx;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// Plain loop re-implementation used as an independent oracle.
double ackley_reference(const std::vector<double>& x, const std::vector<double>& shift, double a, double b, double c) {
  const double d = static_cast<double>(x.size());
  double sq = 0.0;
  double cs = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = x[i] - shift[i];
    sq += z * z;
    cs += std::cos(2.0 * M_PI * c * z);
  }
  return -a * std::exp(-b * std::sqrt(sq / d)) - std::exp(cs / d) + std::exp(1.0) + a;
}

}  // namespace

TEST(Ackley, ZeroAtShiftAndSymmetric) {
  const Vector shift = vec({0.4, -1.0, 2.5});
  const Objective j = make_ackley(shift);
  EXPECT_NEAR(j(shift), 0.0, 1e-14);
  StreamEngine eng({1, 0, 0, 0, Channel::init});
  for (int t = 0; t < 100; ++t) {
    const Vector v = eng.normal_vector(3);
    EXPECT_NEAR(j(shift + v), j(shift - v), 1e-13);
  }
  ASSERT_TRUE(j.known_minimizer().has_value());
  EXPECT_EQ(*j.known_minimizer(), shift);
}

TEST(Ackley, MatchesReferenceImplementation) {
  const Objective j = make_ackley(Vector::Constant(3, 0.4));
  EXPECT_NEAR(j(Vector::Zero(3)), ackley_reference({0, 0, 0}, {0.4, 0.4, 0.4}, 20, 0.1, 1), 1e-13);
  StreamEngine eng({2, 0, 0, 0, Channel::init});
  for (int t = 0; t < 200; ++t) {
    const Vector x = eng.normal_vector(3) * 2.0;
    const std::vector<double> xs(x.data(), x.data() + 3);
    EXPECT_NEAR(ackley(x, 20, 0.1, 2, Vector::Constant(3, 0.4)), ackley_reference(xs, {0.4, 0.4, 0.4}, 20, 0.1, 2),
                1e-12);
  }
}

TEST(Ackley, SampledMinimumIsShift) {
  const Vector shift = vec({0.4, 0.4, 0.4});
  StreamEngine eng({3, 0, 0, 0, Channel::init});
  double lowest = kInf;
  for (int t = 0; t < 1000000; ++t) {
    Vector x(3);
    for (int i = 0; i < 3; ++i) x[i] = shift[i] - 3.0 + 6.0 * eng.uniform();
    lowest = std::min(lowest, ackley(x, 20, 0.1, 1, shift));
  }
  EXPECT_GE(lowest, -1e-12);
  EXPECT_THROW(ackley(Vector::Zero(2), 20, 0.1, 1, shift), DimensionError);
}

TEST(HolderTable, ClosedFormValues) {
  const Vector shift = vec({0.3, -0.2});
  const Objective j = make_holder_table(shift);
  EXPECT_NEAR(j(shift + vec({std::numbers::pi / 2, 0.0})), -std::exp(1.0 - std::numbers::pi / 2) / std::numbers::pi,
              1e-15);
  EXPECT_NEAR(j(shift + vec({std::numbers::pi / 2, 0.0})), -0.179869, 1e-6);
  EXPECT_EQ(j(shift + vec({0.0, 1.7})), 0.0);
  StreamEngine eng({4, 0, 0, 0, Channel::init});
  for (int t = 0; t < 1000; ++t) EXPECT_LE(j(eng.normal_vector(2) * 3.0), 0.0);
  EXPECT_THROW(make_holder_table(Vector::Zero(3)), DimensionError);
}

TEST(Fidelity, ExactRegularizationInstance) {
  Matrix a(1, 2);
  a << 2.0, 1.0;
  const Vector b = vec({1.0});
  EXPECT_EQ(quadratic_fidelity(a, b)(vec({0.5, 0.0})), 0.0);
  EXPECT_EQ(l1_residual(a, b)(vec({0.5, 0.0})), 0.0);
  EXPECT_DOUBLE_EQ(quadratic_fidelity(a, b)(vec({1.0, 1.0})), 2.0);
  EXPECT_DOUBLE_EQ(l1_residual(a, b)(vec({1.0, 1.0})), 2.0);
}

TEST(Fidelity, GradientMatchesFiniteDifferences) {
  StreamEngine eng({5, 0, 0, 0, Channel::init});
  for (int t = 0; t < 10; ++t) {
    Matrix a(4, 3);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = eng.normal();
    const Objective j = quadratic_fidelity(a, eng.normal_vector(4));
    const Vector x = eng.normal_vector(3);
    const Vector g = j.gradient(x);
    Vector fd(3);
    const double h = 1e-5;
    for (int i = 0; i < 3; ++i) {
      Vector e = Vector::Zero(3);
      e[i] = h;
      fd[i] = (j(x + e) - j(x - e)) / (2 * h);
    }
    EXPECT_LE((g - fd).norm(), 1e-6 * std::max(1.0, g.norm()));
  }
}

TEST(Deconvolution, KernelAndBandStructure) {
  const Vector kappa = deconvolution_kernel(10, 2.5);
  EXPECT_EQ(kappa[0], 1.0);
  EXPECT_DOUBLE_EQ(kappa[1], std::exp(-1.0 / 5.0));
  const Matrix a = convolution_matrix(30, kappa);
  for (int i = 0; i < 30; ++i) {
    const Vector response = a * Vector::Unit(30, i);
    for (int r = 0; r < 30; ++r) {
      const int j = r - i;
      EXPECT_EQ(response[r], (j >= 0 && j < 10) ? kappa[j] : 0.0) << "impulse " << i << " row " << r;
    }
  }
}

TEST(Deconvolution, ProblemConstruction) {
  StreamEngine eng({6, 0, 0, 0, Channel::problem});
  for (int t = 0; t < 20; ++t) {
    const LinearInverseProblem p = make_deconvolution(50, 8, 2.5, 3, 0.0, eng);
    ASSERT_TRUE(p.ground_truth.has_value());
    EXPECT_EQ(l0_norm(*p.ground_truth), 3);
    EXPECT_LE(p.ground_truth->maxCoeff(), 1.0);
    EXPECT_EQ(quadratic_fidelity(p.a, p.b)(*p.ground_truth), 0.0);
  }
  const LinearInverseProblem noisy = make_deconvolution(50, 8, 2.5, 3, 0.01, eng);
  EXPECT_NEAR((noisy.b - noisy.a * *noisy.ground_truth).norm(), 0.5, 1e-12);
  EXPECT_THROW(make_deconvolution(5, 3, 2.5, 6, 0.0, eng), ConfigError);
  EXPECT_THROW(make_deconvolution(5, 6, 2.5, 1, 0.0, eng), ConfigError);
}

TEST(SimplexRegression, GroundTruthOnSimplex) {
  StreamEngine eng({7, 0, 0, 0, Channel::problem});
  const LinearInverseProblem p = make_simplex_regression(20, 40, 0.2, eng);
  EXPECT_NEAR(p.ground_truth->sum(), 1.0, 1e-12);
  EXPECT_GT(p.ground_truth->minCoeff(), 0.0);
  EXPECT_NEAR((p.b - p.a * *p.ground_truth).norm(), 0.2 * std::sqrt(40.0), 1e-12);
}

TEST(PhaseRetrieval, LiftAndConsistency) {
  StreamEngine eng({8, 0, 0, 0, Channel::problem});
  const PhaseRetrievalProblem p = make_phase_retrieval(8, 32, 0.0, eng);
  EXPECT_NEAR(p.ground_truth.norm(), 1.0, 1e-12);
  for (Eigen::Index i = 0; i < p.frames.rows(); ++i) EXPECT_NEAR(p.frames.row(i).norm(), 1.0, 1e-12);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(p.frames.transpose() * p.frames);
  EXPECT_NEAR(p.frame_bound, eig.eigenvalues()[0], 1e-10);
  EXPECT_DOUBLE_EQ(p.radius, std::sqrt(p.y.sum() / p.frame_bound));
  EXPECT_GE(p.radius, 1.0);  // |y|_1 >= A_lb |x|^2

  const Objective j = lifted_objective(p);
  EXPECT_LE(j(lift(p, p.ground_truth)), 1e-10);
  EXPECT_LE(j(lift(p, -p.ground_truth)), 1e-10);
  for (int t = 0; t < 20; ++t) {
    const Vector x = eng.normal_vector(8) * 0.3;
    EXPECT_NEAR(lift(p, x).norm(), 1.0, 1e-12);
    EXPECT_LE((unlift(p, lift(p, x)) - x).norm(), 1e-12);
  }
  EXPECT_TRUE(phase_success(p, lift(p, -p.ground_truth), 1e-12));
  EXPECT_FALSE(phase_success(p, lift(p, Vector::Zero(8)), 0.5));
  EXPECT_THROW(lift(p, Vector::Constant(8, 10.0 * p.radius)), DomainError);
  EXPECT_THROW(make_phase_retrieval(8, 4, 0.0, eng), ConfigError);
}

TEST(Sparsity, Counting) {
  EXPECT_EQ(sparsity(Vector::Zero(5)), 1.0);
  EXPECT_EQ(sparsity(Vector::Ones(5)), 0.0);
  EXPECT_EQ(l0_norm(vec({1.0, 0.0, 0.0, 2.0})), 2);
  EXPECT_EQ(sparsity(vec({1.0, 0.0, 0.0, 2.0})), 0.5);
  EXPECT_EQ(l0_norm(vec({1e-9, -1e-9, 0.5}), 1e-8), 1);
  EXPECT_THROW(l0_norm(Vector::Zero(2), -1.0), DomainError);
}

TEST(Objectives, BatchMatchesScalar) {
  const Ensemble e = make_ensemble(init::Normal{}, 30, 2, 3);
  for (const Objective& j : {make_ackley(Vector::Zero(2)), make_holder_table(Vector::Zero(2))}) {
    const Vector b = j.batch_eval(e);
    for (Eigen::Index i = 0; i < e.rows(); ++i) EXPECT_EQ(b[i], j(e.row(i).transpose()));
  }
}
