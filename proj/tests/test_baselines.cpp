#include "mirrorcbx/baselines.hpp"
#include "mirrorcbx/objectives.hpp"

#include <gtest/gtest.h>

using namespace mirrorcbx;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Objective half_square() {
  return Objective([](ConstVecRef x) { return 0.5 * x.squaredNorm(); }, [](ConstVecRef x) -> Vector { return x; });
}

Objective random_fidelity(int rows, int cols, StreamEngine& eng) {
  Matrix a(rows, cols);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = eng.normal();
  return quadratic_fidelity(a, eng.normal_vector(rows));
}

}  // namespace

TEST(MirrorDescent, QuadraticMapIsGradientDescent) {
  const DescentTrace t = lazy_mirror_descent(half_square(), maps::Quadratic{}, 0.1, vec({1.0}), 50);
  ASSERT_EQ(t.iterates.size(), 51u);
  ASSERT_EQ(t.values.size(), 51u);
  for (int k = 0; k <= 50; ++k) EXPECT_NEAR(t.iterates[k][0], std::pow(0.9, k), 1e-14);
  EXPECT_EQ(t.steps.size(), 50u);
}

TEST(MirrorDescent, LinearizedBregmanFindsSparseSolution) {
  Matrix a(1, 2);
  a << 2.0, 1.0;
  const DescentTrace t =
      lazy_mirror_descent(quadratic_fidelity(a, vec({1.0})), maps::ElasticNet{1.0}, 0.1, Vector::Zero(2), 10000, 1000);
  EXPECT_LE((t.final_point - vec({0.5, 0.0})).norm(), 1e-4);
  EXPECT_EQ(t.final_point[1], 0.0);
  EXPECT_EQ(t.iterates.size(), 11u);
  EXPECT_EQ(t.values.size(), 10001u);
}

TEST(MirrorDescent, ExponentiatedGradientStaysOnSimplex) {
  StreamEngine eng({1, 0, 0, 0, Channel::problem});
  const Objective j = random_fidelity(8, 5, eng);
  const DescentTrace t = lazy_mirror_descent(j, maps::NegLogEntropy{}, 0.05, Vector::Constant(5, 0.2), 200);
  for (const Vector& x : t.iterates) {
    EXPECT_NEAR(x.sum(), 1.0, 1e-12);
    EXPECT_GT(x.minCoeff(), 0.0);
  }
}

TEST(MirrorDescent, NanGradientAborts) {
  const Objective j([](ConstVecRef x) { return x.sum(); },
                    [](ConstVecRef x) -> Vector { return Vector::Constant(x.size(), std::nan("")); });
  EXPECT_THROW(lazy_mirror_descent(j, maps::Quadratic{}, 0.1, vec({1.0}), 3), RuntimeFailure);
  EXPECT_THROW(lazy_mirror_descent(half_square(), maps::Quadratic{}, -0.1, vec({1.0}), 3), ConfigError);
}

TEST(ProjectedGradient, SubspaceMatchesIndicatorMirrorDescent) {
  StreamEngine eng({2, 0, 0, 0, Channel::problem});
  for (int t = 0; t < 5; ++t) {
    const Objective j = random_fidelity(6, 4, eng);
    const Vector n = eng.normal_vector(4);
    const Vector x0 = project_hyperplane(eng.normal_vector(4), n, 0.0);
    const DescentTrace md = lazy_mirror_descent(j, maps::Indicator{sets::Hyperplane{n, 0.0}}, 0.02, x0, 100);
    const DescentTrace pgd = projected_gradient_descent(j, sets::Hyperplane{n, 0.0}, 0.02, x0, 100);
    ASSERT_EQ(md.iterates.size(), pgd.iterates.size());
    for (std::size_t k = 0; k < md.iterates.size(); ++k) EXPECT_LE((md.iterates[k] - pgd.iterates[k]).norm(), 1e-12);
  }
}

TEST(ProjectedGradient, ZeroStepAndSphere) {
  StreamEngine eng({3, 0, 0, 0, Channel::problem});
  const Objective j = random_fidelity(5, 3, eng);
  const Vector x0 = project_sphere(eng.normal_vector(3));
  const DescentTrace still = projected_gradient_descent(j, sets::UnitSphere{}, 0.0, x0, 10);
  for (const Vector& x : still.iterates) EXPECT_LE((x - x0).norm(), 1e-15);
  const DescentTrace moving = projected_gradient_descent(j, sets::UnitSphere{}, 0.05, x0, 100);
  for (const Vector& x : moving.iterates) EXPECT_NEAR(x.norm(), 1.0, 1e-12);
}

TEST(SpectralInit, RankOneFrame) {
  Matrix f(1, 3);
  f << 1.0, 0.0, 0.0;
  const Vector z = spectral_init(f, vec({1.0}));
  EXPECT_NEAR(std::abs(z[0]), 3.0, 1e-12);
  EXPECT_NEAR(z.tail(2).norm(), 0.0, 1e-12);
  EXPECT_THROW(spectral_init(f, vec({1.0, 2.0})), DimensionError);
}

TEST(SpectralInit, UnitFramesScale) {
  StreamEngine eng({4, 0, 0, 0, Channel::problem});
  const PhaseRetrievalProblem p = make_phase_retrieval(4, 12, 0.0, eng);
  const Vector z = spectral_init(p.frames, p.y);
  EXPECT_NEAR(z.norm(), 4.0 * p.y.sum() / 12.0, 1e-10);
}

TEST(SpectralInit, NormCloseToSignal) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    StreamEngine eng({100 + s, 0, 0, 0, Channel::problem});
    const PhaseRetrievalProblem p = make_phase_retrieval(16, 128, 0.0, eng);
    EXPECT_LE(std::abs(spectral_init(p.frames, p.y).norm() - 1.0), 0.3) << "instance " << s;
  }
}

TEST(Wirtinger, GradientMatchesFiniteDifferences) {
  StreamEngine eng({5, 0, 0, 0, Channel::problem});
  const PhaseRetrievalProblem p = make_phase_retrieval(6, 24, 0.0, eng);
  const Objective j = wirtinger_objective(p.frames, p.y);
  for (int t = 0; t < 10; ++t) {
    const Vector z = eng.normal_vector(6);
    const Vector g = j.gradient(z);
    Vector fd(6);
    const double h = 1e-5;
    for (int i = 0; i < 6; ++i) {
      Vector e = Vector::Zero(6);
      e[i] = h;
      fd[i] = (j(z + e) - j(z - e)) / (2 * h);
    }
    EXPECT_LE((g - fd).norm(), 1e-6 * g.norm());
  }
}

TEST(Wirtinger, StationaryAtSolution) {
  StreamEngine eng({6, 0, 0, 0, Channel::problem});
  const PhaseRetrievalProblem p = make_phase_retrieval(6, 24, 0.0, eng);
  const Objective j = wirtinger_objective(p.frames, p.y);
  EXPECT_EQ(j(p.ground_truth), 0.0);
  EXPECT_EQ(j.gradient(p.ground_truth).norm(), 0.0);
}

TEST(Wirtinger, RecoversSignalAndDescends) {
  int hits = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    StreamEngine eng({200 + s, 0, 0, 0, Channel::problem});
    const PhaseRetrievalProblem p = make_phase_retrieval(16, 64, 0.0, eng);
    const DescentTrace t = wirtinger_flow(p.frames, p.y, 10.0, 2000, WirtingerOptions{0.1, 0.2, 50, 100});
    for (std::size_t k = 1; k < t.values.size(); ++k) EXPECT_LE(t.values[k], t.values[k - 1]);
    hits += phase_error(p, t.final_point) <= 1e-5 ? 1 : 0;
  }
  EXPECT_GE(hits, 15);
}
