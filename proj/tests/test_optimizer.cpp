#include <cmath>
#include <random>

#include <Eigen/Cholesky>
#include <gtest/gtest.h>

#include "geolearn/optimizer.hpp"

namespace geolearn {
namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

KappaEstimator trained(EstimatorMode mode, const Matrix& c, int draws, std::uint64_t seed) {
  KappaEstimator est = KappaEstimator::make(c.rows(), mode, 0.9, 1e-8);
  const NoiseModel n = full_noise(SpdMatrix(c));
  Rng rng(seed);
  for (int i = 0; i < draws; ++i) est.update(sample_noise_gradient(n, Vector::Zero(c.rows()), rng));
  return est;
}

Matrix test_covariance() {
  Matrix c(2, 2);
  c << 2.0, 0.6, 0.6, 0.5;
  return c;
}

TEST(Estimator, ConstantGradientsCollapseToFloor) {
  KappaEstimator est = KappaEstimator::make(3, EstimatorMode::Full, 0.99, 1e-6);
  const Vector g = vec({1.0, -2.0, 0.5});
  for (int i = 0; i < 5000; ++i) est.update(g);
  EXPECT_LT((est.kappa() - 1e-6 * Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((est.mean - g).norm(), 1e-12);
}

TEST(Estimator, TimeAverageRecoversNoiseCovariance) {
  const Matrix c = test_covariance();
  const NoiseModel n = full_noise(SpdMatrix(c));
  for (EstimatorMode mode : {EstimatorMode::Full, EstimatorMode::Diagonal}) {
    KappaEstimator est = KappaEstimator::make(2, mode, 0.99, 1e-8);
    Rng rng(17);
    Matrix avg = Matrix::Zero(2, 2);
    const int burn = 2000, draws = 200000;
    for (int i = 0; i < burn + draws; ++i) {
      est.update(vec({1.0, 1.0}) + sample_noise_gradient(n, Vector::Zero(2), rng));
      if (i >= burn) avg += est.kappa();
    }
    avg /= draws;
    for (Index i = 0; i < 2; ++i) EXPECT_NEAR(avg(i, i), c(i, i), 0.1 * c(i, i));
    if (mode == EstimatorMode::Full)
      EXPECT_NEAR(avg(0, 1), c(0, 1), 0.1 * c(0, 1));
    else
      EXPECT_EQ(est.cov(0, 1), 0.0);
  }
}

TEST(Estimator, WarmupLength) {
  EXPECT_EQ(KappaEstimator::make(1, EstimatorMode::Diagonal, 0.99).warmup_steps(), 100);
  EXPECT_EQ(KappaEstimator::make(1, EstimatorMode::Diagonal, 0.9).warmup_steps(), 10);
  EXPECT_EQ(KappaEstimator::make(1, EstimatorMode::Diagonal, 0.0).warmup_steps(), 1);
  KappaEstimator est = KappaEstimator::make(1, EstimatorMode::Diagonal, 0.9);
  for (int i = 0; i < 9; ++i) est.update(vec({1.0}));
  EXPECT_FALSE(est.warmed_up());
  est.update(vec({1.0}));
  EXPECT_TRUE(est.warmed_up());
}

TEST(Estimator, ZeroDecayKeepsOnlyTheFloor) {
  KappaEstimator est = KappaEstimator::make(2, EstimatorMode::Full, 0.0, 1e-4);
  Rng rng(2);
  std::normal_distribution<double> nd;
  for (int i = 0; i < 50; ++i) est.update(vec({nd(rng), nd(rng)}));
  EXPECT_EQ(est.kappa(), 1e-4 * Matrix::Identity(2, 2));
}

TEST(Estimator, RejectsBadParameters) {
  EXPECT_THROW(KappaEstimator::make(0), Error);
  EXPECT_THROW(KappaEstimator::make(2, EstimatorMode::Diagonal, 1.0), Error);
  EXPECT_THROW(KappaEstimator::make(2, EstimatorMode::Diagonal, 0.9, 0.0), Error);
  EXPECT_THROW(KappaEstimator::make(65, EstimatorMode::Full), Error);
  KappaEstimator est = KappaEstimator::make(2);
  EXPECT_THROW(est.update(vec({1.0})), Error);
}

TEST(OptStep, ZeroGradientIsFixedPoint) {
  const KappaEstimator est = trained(EstimatorMode::Full, test_covariance(), 100, 1);
  const Vector q = vec({0.3, -0.7});
  for (const MetricSpec& spec : {MetricSpec{PowerLaw{0.5}}, MetricSpec{PowerLaw{1.0}}, MetricSpec{Interp123{0.1, 0.5}}})
    EXPECT_EQ(opt_step(q, Vector::Zero(2), est, spec, 0.3), q);
}

TEST(OptStep, FlatSpecIsPlainGradientDescent) {
  const KappaEstimator est = trained(EstimatorMode::Diagonal, test_covariance(), 100, 2);
  const Vector q = vec({1.0, 2.0}), g = vec({0.4, -0.1});
  EXPECT_EQ(opt_step(q, g, est, PowerLaw{0.0}, 0.05), q - 0.05 * g);
}

TEST(OptStep, WarmupFallsBackToPlainStep) {
  const KappaEstimator est = trained(EstimatorMode::Diagonal, test_covariance(), 5, 3);
  const Vector q = vec({1.0, 2.0}), g = vec({0.4, -0.1});
  EXPECT_EQ(opt_step(q, g, est, PowerLaw{1.0}, 0.05), q - 0.05 * g);
}

TEST(OptStep, DiagonalSquareRootPreconditioner) {
  const KappaEstimator est = trained(EstimatorMode::Diagonal, test_covariance(), 300, 4);
  const Vector q = vec({1.0, 2.0}), g = vec({0.4, -0.1});
  const Vector next = opt_step(q, g, est, PowerLaw{0.5}, 0.05);
  for (Index i = 0; i < 2; ++i)
    EXPECT_NEAR(next[i], q[i] - 0.05 * g[i] / std::sqrt(est.cov(i, i) + est.epsilon_floor), 1e-12);
}

TEST(OptStep, FullNaturalStepInvertsKappa) {
  const KappaEstimator est = trained(EstimatorMode::Full, test_covariance(), 300, 5);
  const Vector q = vec({1.0, 2.0}), g = vec({0.4, -0.1});
  const Vector expect = q - 0.05 * est.kappa().ldlt().solve(g);
  EXPECT_LT((opt_step(q, g, est, PowerLaw{1.0}, 0.05) - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(OptStep, MetricEigenvaluesPerMode) {
  const KappaEstimator d = trained(EstimatorMode::Diagonal, test_covariance(), 300, 6);
  const Vector ld = metric_eigenvalues(d, PowerLaw{1.0});
  for (Index i = 0; i < 2; ++i) EXPECT_DOUBLE_EQ(ld[i], d.cov(i, i) + d.epsilon_floor);
  const KappaEstimator f = trained(EstimatorMode::Full, test_covariance(), 300, 6);
  const Vector lf = metric_eigenvalues(f, PowerLaw{0.5});
  const Eigen::SelfAdjointEigenSolver<Matrix> es(f.kappa());
  for (Index i = 0; i < 2; ++i) EXPECT_NEAR(lf[i], std::sqrt(es.eigenvalues()[i]), 1e-12);
}

OptRun quadratic_run(double gamma, double target) {
  OptRun run{quadratic_1d(1.0), isotropic_noise(1, 0.0)};
  run.gamma = gamma;
  run.steps = 1000;
  run.q0 = vec({1.0});
  run.target_grad_norm = target;
  return run;
}

TEST(Benchmark, NoiselessDescentIsMonotone) {
  Matrix h(2, 2);
  h << 3.0, 0.5, 0.5, 1.0;
  OptRun run{quadratic(SpdMatrix(h), Vector::Zero(2)), isotropic_noise(2, 0.0)};
  run.gamma = 0.2;
  run.steps = 300;
  run.q0 = vec({2.0, -1.0});
  const ConvergenceRecord rec = run_benchmark(run);
  ASSERT_EQ(rec.rows.size(), 301u);
  for (std::size_t i = 1; i < rec.rows.size(); ++i) EXPECT_LE(rec.rows[i].loss, rec.rows[i - 1].loss);
  EXPECT_LT(rec.rows.back().loss, 1e-20);
}

TEST(Benchmark, StepsToTargetMatchesGeometricDecay) {
  const ConvergenceRecord rec = run_benchmark(quadratic_run(0.1, 1e-3));
  int expect = 0;
  for (double q = 1.0; q >= 1e-3; q *= 0.9) ++expect;
  ASSERT_TRUE(rec.steps_to_target.has_value());
  EXPECT_EQ(*rec.steps_to_target, expect);
  EXPECT_EQ(rec.rows.front().step, 0);
  EXPECT_EQ(rec.rows.back().step, expect);
  EXPECT_LT(rec.rows.back().grad_norm, 1e-3);
  EXPECT_EQ(rec.rows.back().metric_eigenvalues.size(), 1);
}

TEST(Benchmark, RecordCadence) {
  OptRun run = quadratic_run(0.01, 0.0);
  run.steps = 95;
  run.record_every = 10;
  const ConvergenceRecord rec = run_benchmark(run);
  ASSERT_EQ(rec.rows.size(), 11u);
  EXPECT_EQ(rec.rows[5].step, 50);
  EXPECT_EQ(rec.rows.back().step, 95);
  EXPECT_FALSE(rec.steps_to_target.has_value());
}

TEST(Benchmark, SeedDeterminism) {
  OptRun run{double_well(1.0, 1.0), isotropic_noise(1, 0.5)};
  run.spec = PowerLaw{0.5};
  run.steps = 500;
  run.seed = 11;
  run.q0 = vec({0.3});
  const ConvergenceRecord a = run_benchmark(run), b = run_benchmark(run);
  EXPECT_EQ(a.final_state, b.final_state);
  run.seed = 12;
  EXPECT_NE(run_benchmark(run).final_state, a.final_state);
}

TEST(Benchmark, BestFixedGamma) {
  const std::vector<double> gammas{0.05, 0.1, 0.5, 2.5};
  const GammaSearch s = best_fixed_gamma(quadratic_run(0.1, 1e-3), gammas);
  EXPECT_EQ(s.best_gamma, 0.5);
  ASSERT_TRUE(s.best_steps.has_value());
  EXPECT_EQ(*s.best_steps, 10);
  ASSERT_EQ(s.tried.size(), 4u);
  EXPECT_FALSE(s.tried[3].second.has_value());
}

TEST(Phase, NumericalSlopeMatchesClosedForm) {
  for (double e : {1e-3, 0.1, 1.0})
    for (double z : {1e-2, 1.0, 10.0})
      for (double l : log_grid(1e-8, 1e8, 33))
        EXPECT_NEAR(alpha_eff(l, Interp123{e, z}), alpha_eff_exact(l, e, z), 1e-6) << e << ' ' << z << ' ' << l;
}

TEST(Phase, PowerLawSlopeIsExponent) {
  for (double a : {0.0, 0.3, 0.5, 1.0})
    for (double l : {1e-3, 1.0, 1e3}) EXPECT_NEAR(alpha_eff(l, PowerLaw{a}), a, 1e-9);
}

TEST(Phase, EfficientRegimeAtSmallProduct) {
  EXPECT_NEAR(alpha_eff_exact(1.0, 1e-3, 1e-3), 0.5, 1e-5);
  EXPECT_EQ(classify_alpha(alpha_eff(1.0, Interp123{1e-3, 1e-3})), Regime::Efficient);
}

TEST(Phase, Limits) {
  EXPECT_LT(alpha_eff_exact(1e-12, 1.0, 1.0), 1e-11);
  EXPECT_GT(alpha_eff_exact(1e12, 1.0, 1.0), 1.0 - 1e-11);
  EXPECT_EQ(classify_alpha(alpha_eff(1e-8, Interp123{1.0, 1.0})), Regime::Flat);
  EXPECT_EQ(classify_alpha(alpha_eff(1e8, Interp123{1.0, 1.0})), Regime::Natural);
}

TEST(Phase, MonotoneInNoiseEigenvalue) {
  for (double e : {1e-3, 1.0})
    for (double z : {1e-3, 1.0}) {
      double prev = -1.0;
      for (double l : log_grid(1e-10, 1e10, 200)) {
        const double a = alpha_eff_exact(l, e, z);
        EXPECT_GE(a, prev);
        prev = a;
      }
    }
}

TEST(Phase, JointRescalingInvariance) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> ln(-5.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double l = std::exp(ln(rng)), e = std::exp(ln(rng)), z = std::exp(ln(rng)), c = std::exp(ln(rng));
    const double a = alpha_eff_exact(l, e, z);
    EXPECT_NEAR(alpha_eff_exact(c * l, e * std::sqrt(c), z / std::sqrt(c)), a, 1e-12);
    EXPECT_NEAR(alpha_eff(c * l, Interp123{e * std::sqrt(c), z / std::sqrt(c)}), alpha_eff(l, Interp123{e, z}), 1e-7);
  }
}

TEST(Phase, ClassificationBands) {
  EXPECT_EQ(classify_alpha(0.05), Regime::Flat);
  EXPECT_EQ(classify_alpha(0.45), Regime::Efficient);
  EXPECT_EQ(classify_alpha(0.95), Regime::Natural);
  EXPECT_EQ(classify_alpha(0.25), Regime::Crossover);
  EXPECT_EQ(classify_alpha(0.75), Regime::Crossover);
  EXPECT_EQ(to_string(Regime::Efficient), "alpha_half");
}

TEST(Phase, LogGridEndpointsAndRatio) {
  const std::vector<double> g = log_grid(1e-3, 1e3, 7);
  ASSERT_EQ(g.size(), 7u);
  EXPECT_NEAR(g.front(), 1e-3, 1e-18);
  EXPECT_NEAR(g.back(), 1e3, 1e-10);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_NEAR(g[i] / g[i - 1], 10.0, 1e-12);
  EXPECT_THROW(log_grid(0.0, 1.0, 5), Error);
  EXPECT_THROW(log_grid(1.0, 2.0, 1), Error);
}

TEST(Phase, BandExtentMatchesClosedFormCount) {
  const std::vector<double> eps{1e-3}, zetas{1e-3};
  const std::vector<double> lambdas = log_grid(1e-10, 1e10, 201);
  const std::vector<PhasePoint> sweep = phase_sweep(eps, zetas, lambdas);
  ASSERT_EQ(sweep.size(), 201u);
  std::size_t count = 0;
  double lo = 0.0, hi = 0.0;
  for (double l : lambdas)
    if (std::abs(alpha_eff_exact(l, 1e-3, 1e-3) - 0.5) <= 0.1) {
      if (count++ == 0) lo = l;
      hi = l;
    }
  const BandExtent b = band_extent(sweep, Regime::Efficient);
  EXPECT_EQ(b.points, count);
  EXPECT_DOUBLE_EQ(b.lo, lo);
  EXPECT_DOUBLE_EQ(b.hi, hi);
  EXPECT_NEAR(b.decades, std::log10(hi / lo), 1e-12);
  EXPECT_GT(b.decades, 8.0);
  EXPECT_EQ(band_extent(sweep, Regime::Crossover).decades > 0.0, true);
}

TEST(Phase, SweepRejectsNonPositiveInputs) {
  const std::vector<double> ok{1.0}, bad{0.0};
  EXPECT_THROW(phase_sweep(bad, ok, ok), Error);
  EXPECT_THROW(phase_sweep(ok, ok, bad), Error);
}

TEST(Reparametrization, NaturalStepIsCoordinateFree) {
  Matrix h(2, 2);
  h << 2.0, 0.4, 0.4, 1.0;
  Matrix t(2, 2);
  t << 1.5, 0.3, -0.2, 0.8;
  const NoiseModel noise = full_noise(SpdMatrix(test_covariance()));
  const ReparamResult r =
      reparametrization_check(quadratic(SpdMatrix(h), Vector::Zero(2)), noise, t, vec({1.0, -1.0}), PowerLaw{1.0},
                              0.02, 200, 300, 21);
  EXPECT_EQ(r.steps, 300);
  EXPECT_LT(r.max_deviation, 1e-6);
}

TEST(Reparametrization, FlatStepDependsOnCoordinates) {
  Matrix h(2, 2);
  h << 2.0, 0.4, 0.4, 1.0;
  Matrix t(2, 2);
  t << 1.5, 0.3, -0.2, 0.8;
  const NoiseModel noise = full_noise(SpdMatrix(test_covariance()));
  const ReparamResult r = reparametrization_check(quadratic(SpdMatrix(h), Vector::Zero(2)), noise, t, vec({1.0, -1.0}),
                                                  PowerLaw{0.0}, 0.02, 200, 300, 21);
  EXPECT_GT(r.max_deviation, 1e-3);
}

}  // namespace
}  // namespace geolearn
