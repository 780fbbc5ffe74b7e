#include "mirrorcbx/objectives.hpp"
#include "mirrorcbx/optimizer.hpp"

#include <gtest/gtest.h>

using namespace mirrorcbx;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

OptimizerSpec base_spec(OptimizerKind kind) {
  OptimizerSpec spec;
  spec.kind = kind;
  spec.params.tau = 0.1;
  spec.params.sigma = 1.0;
  spec.params.alpha = 10.0;
  spec.params.noise = NoiseKind::anisotropic;
  spec.params.scheduler = MultiplyScheduler{1.05, 1e8};
  return spec;
}

RunTrace run_kind(const OptimizerSpec& spec, const Ensemble& x0, int k_max) {
  OptimizerSpec s = spec;
  s.params.k_max = k_max;
  RecordOptions rec;
  rec.criterion = SuccessCriterion{Vector::Constant(x0.cols(), 0.4), SuccessNorm::l2, 0.1};
  return run(make_ackley(Vector::Constant(x0.cols(), 0.4)), s, x0, 17, 0, rec);
}

void expect_identical(const RunTrace& a, const RunTrace& b) {
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    EXPECT_EQ(a.rows[k].consensus_dist, b.rows[k].consensus_dist) << "row " << k;
    EXPECT_EQ(a.rows[k].best_energy, b.rows[k].best_energy) << "row " << k;
  }
  EXPECT_EQ(a.final_consensus, b.final_consensus);
}

Matrix matrix_from(ConstVecRef v, int n, int p) { return unflatten(v, n, p); }

}  // namespace

TEST(CboStep, MatchesQuadraticMirrorBitExact) {
  const Ensemble x0 = make_ensemble(init::Normal{}, 20, 4, 3);
  expect_identical(run_kind(base_spec(OptimizerKind::cbo), x0, 60), run_kind(base_spec(OptimizerKind::mirror_cbo), x0, 60));
}

TEST(CboStep, CollapsedEnsembleIsFixedPoint) {
  OptimizerSpec spec = base_spec(OptimizerKind::cbo);
  const Objective obj = make_ackley(Vector::Zero(2));
  Ensemble x0(5, 2);
  x0.rowwise() = vec({0.3, -0.7}).transpose();
  OptimizerState state = init_state(spec, x0, obj, 1);
  cbo_step(state, spec, obj);
  EXPECT_LE((state.primal - x0).norm(), 1e-15);
}

TEST(CboStep, TwoParticleArgmin) {
  OptimizerSpec spec = base_spec(OptimizerKind::cbo);
  spec.params.sigma = 0.0;
  spec.params.tau = 0.5;
  spec.params.alpha = 1e15;
  const Objective obj([](ConstVecRef x) { return x[0] * x[0]; });
  Ensemble x0(2, 1);
  x0 << 0.0, 1.0;
  OptimizerState state = init_state(spec, x0, obj, 1);
  cbo_step(state, spec, obj);
  EXPECT_EQ(state.primal(0, 0), 0.0);
  EXPECT_EQ(state.primal(1, 0), 0.5);
}

TEST(VariantReduction, ZeroStrengthIsCbo) {
  const Ensemble x0 = make_ensemble(init::Normal{}, 20, 3, 8);
  const RunTrace cbo = run_kind(base_spec(OptimizerKind::cbo), x0, 40);

  OptimizerSpec pen = base_spec(OptimizerKind::penalized);
  pen.set = sets::UnitSphere{};
  expect_identical(cbo, run_kind(pen, x0, 40));

  OptimizerSpec drift = base_spec(OptimizerKind::drift_constrained);
  drift.set = sets::Hyperplane{vec({1.0, 1.0, 1.0}), 1.0};
  expect_identical(cbo, run_kind(drift, x0, 40));

  OptimizerSpec combo = base_spec(OptimizerKind::combination);
  combo.set = sets::UnitSphere{};
  expect_identical(cbo, run_kind(combo, x0, 40));

  OptimizerSpec proj = base_spec(OptimizerKind::projected);
  expect_identical(cbo, run_kind(proj, x0, 40));

  OptimizerSpec drift_free = base_spec(OptimizerKind::drift_constrained);
  drift_free.lambda = 5.0;
  expect_identical(cbo, run_kind(drift_free, x0, 40));
}

TEST(ProjectedCbo, SubspaceMatchesIndicatorMirror) {
  const Vector n = vec({1.0, -2.0, 0.5});
  OptimizerSpec proj = base_spec(OptimizerKind::projected);
  proj.set = sets::Hyperplane{n, 0.0};
  OptimizerSpec mirror = base_spec(OptimizerKind::mirror_cbo);
  mirror.map = maps::Indicator{sets::Hyperplane{n, 0.0}};
  Ensemble x0 = make_ensemble(init::Normal{}, 20, 3, 9);
  for (Eigen::Index i = 0; i < x0.rows(); ++i) x0.row(i) = project_hyperplane(x0.row(i).transpose(), n, 0.0).transpose();
  const Objective obj = make_ackley(Vector::Constant(3, 0.4));
  OptimizerState a = init_state(proj, x0, obj, 4);
  OptimizerState b = init_state(mirror, x0, obj, 4);
  for (int k = 0; k < 50; ++k) {
    step(a, proj, obj);
    step(b, mirror, obj);
    EXPECT_LE((a.primal - b.primal).cwiseAbs().maxCoeff(), 1e-10) << "step " << k;
  }
}

TEST(ProjectedCbo, SphereFeasibleEveryStep) {
  OptimizerSpec spec = base_spec(OptimizerKind::projected);
  spec.set = sets::UnitSphere{};
  spec.params.resampling = ResamplingConfig{0.5, 1, 1.0, kInf};
  const Objective obj = make_ackley(Vector::Constant(5, 1.0 / std::sqrt(5.0)));
  OptimizerState state = init_state(spec, make_ensemble(init::Normal{}, 20, 5, 2), obj, 2);
  for (int k = 0; k < 30; ++k) {
    step(state, spec, obj);
    for (Eigen::Index i = 0; i < state.primal.rows(); ++i) EXPECT_NEAR(state.primal.row(i).norm(), 1.0, 1e-10);
  }
  EXPECT_GT(state.resample_events, 0);
}

TEST(ProjectedCbo, ZeroStepKeepsEnsemble) {
  OptimizerSpec spec = base_spec(OptimizerKind::projected);
  spec.set = sets::UnitSphere{};
  spec.params.tau = 1e-300;
  spec.params.sigma = 0.0;
  const Objective obj = make_ackley(Vector::Zero(3));
  OptimizerState state = init_state(spec, make_ensemble(init::Sphere{}, 10, 3, 2), obj, 2);
  const Ensemble before = state.primal;
  step(state, spec, obj);
  EXPECT_LE((state.primal - before).norm(), 1e-14);
}

TEST(Penalized, ObjectiveFormula) {
  const Objective j([](ConstVecRef x) { return x.sum(); });
  const Objective same = penalized_objective(j, sets::UnitSphere{}, 2, 0.0);
  const Objective pen = penalized_objective(j, sets::UnitSphere{}, 2, 3.0);
  const Vector x = vec({2.0, 0.0});
  EXPECT_EQ(same(x), j(x));
  EXPECT_DOUBLE_EQ(pen(x) - j(x), 3.0);
  EXPECT_DOUBLE_EQ(pen(vec({0.6, 0.8})), j(vec({0.6, 0.8})));
  EXPECT_DOUBLE_EQ(penalized_objective(j, sets::UnitSphere{}, 1, 3.0)(vec({3.0, 0.0})) - 3.0, 6.0);
}

TEST(Penalized, LambdaSchedule) {
  const PenaltySchedule schedule;
  Ensemble on(2, 2);
  on << 1.0, 0.0, 0.0, 1.0;
  Ensemble off(2, 2);
  off << 2.0, 0.0, 0.0, 1.0;
  EXPECT_EQ(penalized_lambda_update(4.0, on, sets::UnitSphere{}, 2, schedule), 4.0);
  EXPECT_EQ(penalized_lambda_update(4.0, off, sets::UnitSphere{}, 2, schedule), 6.0);
  EXPECT_EQ(penalized_lambda_update(9e7, off, sets::UnitSphere{}, 2, schedule), 1e8);
}

TEST(Penalized, HugeLambdaConcentratesOnFeasible) {
  const Objective j = make_ackley(Vector::Zero(3));
  const ConstraintSet set = sets::UnitSphere{};
  Ensemble e = make_ensemble(init::Normal{0.0, 2.0}, 20, 3, 3);
  for (Eigen::Index i = 0; i < 10; ++i) e.row(i) = project_sphere(e.row(i).transpose()).transpose();
  const Objective pen = penalized_objective(j, set, 2, 1e12);
  const Vector w = consensus_weights(pen.batch_eval(e), 1.0);
  EXPECT_GE(w.head(10).sum(), 1.0 - 1e-6);
}

TEST(DriftConstrained, OnConstraintStaysOn) {
  const Vector n = vec({1.0, 1.0, 1.0});
  const ConstraintSet set = sets::Hyperplane{n, 1.0};
  OptimizerParams p;
  p.tau = 0.1;
  p.sigma = 0.0;
  StreamEngine eng({4, 0, 0, 0, Channel::init});
  for (int t = 0; t < 20; ++t) {
    const Vector x = project_hyperplane(eng.normal_vector(3), n, 1.0);
    const Vector m = project_hyperplane(eng.normal_vector(3), n, 1.0);
    const Vector next = drift_constrained_update(x, m, p, eng.normal_vector(3), set, 50.0);
    EXPECT_NEAR(n.dot(next), 1.0, 1e-10);
  }
}

TEST(DriftConstrained, ReducesViolation) {
  OptimizerParams p;
  p.tau = 0.1;
  p.sigma = 0.0;
  const std::vector<ConstraintSet> all = {sets::Hyperplane{vec({1.0, 2.0}), 1.0}, sets::UnitSphere{},
                                          Quadric(Matrix::Identity(2, 2), Vector::Zero(2), -1.0)};
  for (const auto& set : all) {
    for (const Vector& x : {vec({2.0, 1.5}), vec({0.2, -0.1})}) {
      const Vector next = drift_constrained_update(x, x, p, Vector::Zero(2), set, 1.0);
      EXPECT_LT(std::abs(scalar_constraint(set, next).g), std::abs(scalar_constraint(set, x).g));
    }
  }
}

TEST(DriftConstrained, SphereDerivatives) {
  const Vector x = vec({0.3, -1.2, 0.8});
  const ScalarConstraint c = scalar_constraint(sets::UnitSphere{}, x);
  const double h = 1e-6;
  for (int i = 0; i < 3; ++i) {
    Vector e = Vector::Zero(3);
    e[i] = h;
    EXPECT_NEAR(c.grad[i], ((x + e).norm() - (x - e).norm()) / (2 * h), 1e-8);
    const Vector fd = (scalar_constraint(sets::UnitSphere{}, x + e).grad - scalar_constraint(sets::UnitSphere{}, x - e).grad) / (2 * h);
    EXPECT_LE((c.hess.col(i) - fd).norm(), 1e-7);
  }
}

TEST(Combination, ClosedForms) {
  const Vector v = vec({0.5, -0.4, 1.1});
  EXPECT_EQ(combination_correction(v, vec({0.6, 0.8, 0.0}), sets::UnitSphere{}, 0.1, 3.0), v);
  EXPECT_EQ(combination_correction(v, vec({2.0, 0.0, 0.0}), sets::UnitSphere{}, 0.1, 0.0), v);
  const Vector x_prev = vec({1.3, 0.2, -0.5});
  const Vector sphere = combination_correction(v, x_prev, sets::UnitSphere{}, 0.1, 3.0);
  const Vector quadric =
      combination_correction(v, x_prev, Quadric(Matrix::Identity(3, 3), Vector::Zero(3), -1.0), 0.1, 3.0);
  EXPECT_LE((sphere - quadric).norm(), 1e-14);
  const Vector n = vec({1.0, 1.0, 1.0});
  const Vector plane = combination_correction(v, x_prev, sets::Hyperplane{n, 1.0}, 0.1, 3.0);
  const double g = (n.dot(x_prev) - 1.0) / std::sqrt(3.0);
  EXPECT_LE((plane - (v - 2.0 * 0.1 * 3.0 * g * n / std::sqrt(3.0))).norm(), 1e-14);
}

TEST(HypersurfaceSphere, StaysOnSphere) {
  for (NoiseKind kind : {NoiseKind::isotropic, NoiseKind::anisotropic}) {
    OptimizerSpec spec = base_spec(OptimizerKind::hypersurface_sphere);
    spec.set = sets::UnitSphere{};
    spec.params.noise = kind;
    const Objective obj = make_ackley(Vector::Constant(6, 1.0 / std::sqrt(6.0)));
    OptimizerState state = init_state(spec, make_ensemble(init::Sphere{}, 20, 6, 2), obj, 2);
    for (int k = 0; k < 30; ++k) {
      step(state, spec, obj);
      for (Eigen::Index i = 0; i < state.primal.rows(); ++i) EXPECT_LE(std::abs(state.primal.row(i).norm() - 1.0), 1e-12);
    }
  }
}

TEST(HypersurfaceSphere, ZeroDriftAndTangency) {
  OptimizerParams p;
  p.sigma = 0.0;
  const Vector x = project_sphere(vec({1.0, 2.0, -0.5}));
  EXPECT_LE((hypersurface_sphere_update(x, x, p, vec({1.0, 1.0, 1.0})) - x).norm(), 1e-14);
  StreamEngine eng({5, 0, 0, 0, Channel::init});
  for (int t = 0; t < 50; ++t) {
    const Vector u = project_sphere(eng.normal_vector(4));
    const Vector m = eng.normal_vector(4);
    EXPECT_LE(std::abs(sphere_tangent(u, u - m).dot(u)), 1e-12);
  }
}

TEST(HypersurfaceStiefel, OrthonormalAfterEveryStep) {
  OptimizerSpec spec = base_spec(OptimizerKind::hypersurface_stiefel);
  spec.params.noise = NoiseKind::isotropic;
  spec.set = sets::Stiefel{5, 2};
  StreamEngine eng({6, 0, 0, 0, Channel::problem});
  const Objective obj = make_ackley(flatten(sample_stiefel_uniform(5, 2, eng)));
  OptimizerState state = init_state(spec, make_ensemble(init::Stiefel{5, 2}, 15, 10, 2), obj, 2);
  for (int k = 0; k < 30; ++k) {
    step(state, spec, obj);
    for (Eigen::Index i = 0; i < state.primal.rows(); ++i) {
      const Matrix x = matrix_from(state.primal.row(i).transpose(), 5, 2);
      EXPECT_LE((x.transpose() * x - Matrix::Identity(2, 2)).norm(), 1e-10);
    }
  }
}

TEST(HypersurfaceStiefel, TangentIsSkew) {
  StreamEngine eng({7, 0, 0, 0, Channel::init});
  for (int t = 0; t < 50; ++t) {
    const Matrix x = sample_stiefel_uniform(6, 3, eng);
    Matrix z(6, 3);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = eng.normal();
    const Matrix pz = stiefel_tangent(x, z);
    EXPECT_LE((x.transpose() * pz + pz.transpose() * x).norm(), 1e-10);
  }
}

TEST(HypersurfaceStiefel, ZeroDriftAndValidation) {
  OptimizerParams p;
  p.sigma = 0.0;
  StreamEngine eng({8, 0, 0, 0, Channel::init});
  const Vector x = flatten(sample_stiefel_uniform(4, 2, eng));
  EXPECT_LE((hypersurface_stiefel_update(x, x, p, Vector::Ones(8), sets::Stiefel{4, 2}) - x).norm(), 1e-12);
  p.noise = NoiseKind::anisotropic;
  EXPECT_THROW(hypersurface_stiefel_update(x, x, p, Vector::Ones(8), sets::Stiefel{4, 2}), ConfigError);
  OptimizerSpec spec = base_spec(OptimizerKind::hypersurface_stiefel);
  spec.set = sets::Stiefel{4, 2};
  EXPECT_THROW(spec.validate(), ConfigError);  // anisotropic
}

TEST(Dualized, ConjugateTerm) {
  Matrix a(1, 2);
  a << 2.0, 1.0;
  const DualizedProblem dp = dualized_problem(a, vec({1.0}), 1.0);
  EXPECT_DOUBLE_EQ(dp.objective(vec({0.3})), -0.3);  // A^T v = (0.6, 0.3) inside the box
  EXPECT_DOUBLE_EQ(dual_conjugate(vec({2.0, 0.0}), 1.0), 0.5);
  EXPECT_THROW(dualized_problem(a, vec({1.0}), 0.0), ConfigError);
}

TEST(Dualized, DualDescentRecoversSparseSolution) {
  Matrix a(1, 2);
  a << 2.0, 1.0;
  const DualizedProblem dp = dualized_problem(a, vec({1.0}), 1.0);
  Vector v = Vector::Zero(1);
  for (int k = 0; k < 2000; ++k) v -= 0.1 * dp.objective.gradient(v);
  EXPECT_LE((dp.recover(v) - vec({0.5, 0.0})).norm(), 1e-3);
}

TEST(Variants, ValidationRejectsMismatchedSets) {
  OptimizerSpec spec = base_spec(OptimizerKind::hypersurface_sphere);
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = base_spec(OptimizerKind::drift_constrained);
  spec.set = sets::LinfSphere{};
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = base_spec(OptimizerKind::penalized);
  spec.penalty_power = 3;
  EXPECT_THROW(spec.validate(), ConfigError);
}
