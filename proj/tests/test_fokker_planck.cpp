#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "geolearn/fokker_planck.hpp"

namespace geolearn {
namespace {

double gaussian(double x, double mean, double var) {
  return std::exp(-(x - mean) * (x - mean) / (2.0 * var)) / std::sqrt(2.0 * std::numbers::pi * var);
}

GridDensity gaussian_density(const GridSpec& grid, double var, double mean = 0.0) {
  return density_from(grid, [&](const Vector& q) { return gaussian(q[0], mean, var); });
}

// L1 between the coordinate density P sqrt(g) and a continuous density sampled at cell centres.
double l1_to(const GridDensity& p, const std::function<double(double)>& f) {
  double d = 0.0;
  for (Index i = 0; i < p.size(); ++i)
    d += std::abs(p[i] * p.weight(i) - f(p.grid.coordinate(0, i))) * p.grid.spacing(0);
  return d;
}

GridDensity heat_run(Index cells, double t_end, double s2, double gamma, double sigma) {
  const GridSpec grid = GridSpec::line(-8.0, 8.0, cells);
  const FokkerPlanckSolver solver(grid, constant_landscape(1), isotropic_noise(1, sigma), PowerLaw{0.0}, gamma);
  const auto steps = static_cast<std::int64_t>(std::ceil(t_end / solver.stability_bound()));
  const double dt = t_end / static_cast<double>(steps);
  GridDensity p = gaussian_density(grid, s2);
  for (std::int64_t s = 0; s < steps; ++s) p = solver.step(p, dt);
  return p;
}

TEST(FpStep, NoNoiseNoForceLeavesDensityUnchanged) {
  const GridSpec grid = GridSpec::line(-3.0, 3.0, 64);
  const GridDensity p = gaussian_density(grid, 0.5, 0.3);
  const GridDensity next = fp_step(p, constant_landscape(1, 4.0), isotropic_noise(1, 0.0), PowerLaw{0.0}, 1.0, 0.1);
  EXPECT_EQ(next.values, p.values);
}

TEST(FpStep, HeatKernelVarianceGrowth) {
  const double s2 = 0.25, gamma = 0.8, sigma = 1.5, t = 1.0;
  const GridDensity p = heat_run(800, t, s2, gamma, sigma);
  const auto [mean, var] = axis_moments(p);
  EXPECT_NEAR(mean, 0.0, 1e-12);
  const double expect = s2 + gamma * gamma * sigma * sigma * t;
  EXPECT_NEAR(var, expect, 2e-3 * expect);
}

TEST(FpStep, SecondOrderSpatialConvergence) {
  const double s2 = 0.25, gamma = 1.0, sigma = 1.0, t = 0.5;
  const auto exact = [&](double x) { return gaussian(x, 0.0, s2 + gamma * gamma * sigma * sigma * t); };
  const double coarse = l1_to(heat_run(100, t, s2, gamma, sigma), exact);
  const double fine = l1_to(heat_run(200, t, s2, gamma, sigma), exact);
  const double ratio = coarse / fine;
  EXPECT_GT(ratio, 3.0);
  EXPECT_LT(ratio, 5.0);
}

TEST(FpStep, RejectsStepAboveExplicitBound) {
  const GridSpec grid = GridSpec::line(-3.0, 3.0, 64);
  const FokkerPlanckSolver solver(grid, quadratic_1d(1.0), isotropic_noise(1, 1.0), PowerLaw{1.0}, 1.0);
  const double h = grid.spacing(0);
  EXPECT_LE(solver.stability_bound(), 0.4 * h * h + 1e-15);
  try {
    solver.step(solver.uniform(), 2.0 * solver.stability_bound());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::StabilityViolation);
  }
}

TEST(FpStep, MassConservedOverManySteps) {
  // cell Peclet number below 2, so the central fluxes never need clamping
  const GridSpec grid = GridSpec::line(-3.0, 3.0, 512);
  const FokkerPlanckSolver solver(grid, double_well(1.0, 1.5), isotropic_noise(1, 1.0), PowerLaw{1.0}, 0.7);
  GridDensity p = solver.density([](const Vector& q) { return q[0] > 0.0 ? 1.0 : 0.0; });
  const double dt = solver.stability_bound();
  for (int s = 0; s < 10000; ++s) {
    const StepOutcome out = solver.advance(p, dt);
    ASSERT_GE(out.min_before_clamp, 0.0);
    p = out.density;
  }
  EXPECT_LT(std::abs(total_mass(p) - 1.0), 1e-9);
}

TEST(FpStep, PositivityAtHalfBound) {
  const GridSpec grid = GridSpec::line(-4.0, 4.0, 128);
  const FokkerPlanckSolver solver(grid, quadratic_1d(2.0, 1.0), isotropic_noise(1, 0.8), PowerLaw{0.5}, 1.0);
  GridDensity p = solver.density([](const Vector& q) { return std::abs(q[0] + 2.0) < 0.05 ? 1.0 : 0.0; });
  const double dt = 0.5 * solver.stability_bound();
  for (int s = 0; s < 2000; ++s) {
    const StepOutcome out = solver.advance(p, dt);
    ASSERT_GE(out.min_before_clamp, -1e-12) << s;
    EXPECT_FALSE(out.clamped);
    p = out.density;
  }
}

TEST(FpStep, ConvergesToBoltzmann) {
  const GridSpec grid = GridSpec::line(-5.0, 5.0, 200);
  const double gamma = 1.0, k = 1.5;
  const FokkerPlanckSolver solver(grid, quadratic_1d(k), isotropic_noise(1, 0.6), PowerLaw{1.0}, gamma);
  const auto traj = solver.evolve(solver.uniform(), solver.stability_bound(),
                                  static_cast<std::int64_t>(std::ceil(8.0 / solver.stability_bound())), 0);
  // exp(-2U/gamma) = Gaussian with variance gamma / (2k)
  EXPECT_LT(l1_to(traj.back(), [&](double x) { return gaussian(x, 0.0, gamma / (2.0 * k)); }), 1e-3);
}

TEST(FpStep, BoltzmannIsNearlyStationary) {
  const GridSpec grid = GridSpec::line(-6.0, 6.0, 512);
  const double gamma = 1.0;
  const auto land = quadratic_1d(1.0);
  const FokkerPlanckSolver solver(grid, land, isotropic_noise(1, 1.0), PowerLaw{1.0}, gamma);
  const GridDensity p = stationary_boltzmann(land, gamma, grid);
  const GridDensity next = solver.step(p, solver.stability_bound());
  const double h = grid.spacing(0);
  EXPECT_LT(l1_distance(next, p), 1e-6 * (h * h / (0.02 * 0.02)));
}

TEST(FpStep, EquationFormsCoincideForUnitGeometry) {
  const GridSpec grid = GridSpec::line(-3.0, 3.0, 48);
  const auto land = double_well(0.8, 1.0);
  const auto noise = isotropic_noise(1, 1.0);
  const GridDensity p = gaussian_density(grid, 0.6, 0.4);
  const double dt = FokkerPlanckSolver(grid, land, noise, PowerLaw{1.0}, 0.9).stability_bound();
  const auto general = fp_step(p, land, noise, PowerLaw{1.0}, 0.9, dt, FpOptions{EquationForm::General});
  const auto covariant = fp_step(p, land, noise, PowerLaw{1.0}, 0.9, dt, FpOptions{EquationForm::Covariant});
  const auto flat = fp_step(p, land, noise, PowerLaw{1.0}, 0.9, dt, FpOptions{EquationForm::Flat, 1.0});
  EXPECT_EQ(general.values, covariant.values);
  EXPECT_EQ(general.values, flat.values);
}

TEST(FpStep, SemiImplicitConservesAndRelaxes) {
  const GridSpec grid = GridSpec::line(-5.0, 5.0, 200);
  const double gamma = 1.0;
  FpOptions opt;
  opt.scheme = TimeScheme::SemiImplicit;
  const FokkerPlanckSolver solver(grid, quadratic_1d(1.0), isotropic_noise(1, 1.0), PowerLaw{1.0}, gamma, opt);
  GridDensity p = solver.uniform();
  const double dt = 10.0 * solver.stability_bound();
  for (double t = 0.0; t < 8.0; t += dt) p = solver.step(p, dt);
  EXPECT_LT(std::abs(total_mass(p) - 1.0), 1e-9);
  EXPECT_LT(l1_to(p, [&](double x) { return gaussian(x, 0.0, 0.5); }), 5e-3);
}

TEST(FpStep, TwoDimensionalAnisotropicSpreading) {
  const GridSpec grid = GridSpec::plane(-5.0, 5.0, 60, -5.0, 5.0, 60);
  Matrix c(2, 2);
  c << 1.0, 0.4, 0.4, 0.5;
  const double gamma = 1.0, t = 0.5, s2 = 0.3;
  const FokkerPlanckSolver solver(grid, constant_landscape(2), full_noise(SpdMatrix(c)), PowerLaw{0.0}, gamma);
  GridDensity p = density_from(grid, [&](const Vector& q) { return std::exp(-q.squaredNorm() / (2.0 * s2)); });
  const auto steps = static_cast<std::int64_t>(std::ceil(t / solver.stability_bound()));
  const double dt = t / static_cast<double>(steps);
  for (std::int64_t s = 0; s < steps; ++s) p = solver.step(p, dt);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    const Vector x = grid.center(i);
    const double w = p[i] * p.cell_volume(i);
    sxx += w * x[0] * x[0];
    syy += w * x[1] * x[1];
    sxy += w * x[0] * x[1];
  }
  EXPECT_NEAR(sxy, gamma * gamma * c(0, 1) * t, 0.01);
  EXPECT_NEAR(sxx - syy, gamma * gamma * (c(0, 0) - c(1, 1)) * t, 0.01);
  EXPECT_LT(std::abs(total_mass(p) - 1.0), 1e-9);
}

TEST(Boltzmann, FlatLandscapeIsUniform) {
  const GridSpec grid = GridSpec::line(0.0, 4.0, 16);
  const GridDensity p = stationary_boltzmann(constant_landscape(1, 2.0), 1.0, grid);
  for (double v : p.values) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(Boltzmann, QuadraticVarianceScalesWithGamma) {
  const GridSpec grid = GridSpec::line(-8.0, 8.0, 4000);
  const auto [m1, v1] = axis_moments(stationary_boltzmann(quadratic_1d(1.0), 1.0, grid));
  const auto [m2, v2] = axis_moments(stationary_boltzmann(quadratic_1d(1.0), 2.0, grid));
  EXPECT_NEAR(m1, 0.0, 1e-12);
  EXPECT_NEAR(v1, 0.5, 1e-5);
  EXPECT_NEAR(v2 / v1, 2.0, 1e-4);
}

TEST(Boltzmann, GuardsAgainstUnderflow) {
  const GridSpec grid = GridSpec::line(-100.0, 100.0, 64);
  try {
    stationary_boltzmann(quadratic_1d(10.0), 0.1, grid);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OverflowGuard);
  }
}

TEST(Mass, UniformAndScaled) {
  const GridSpec grid = GridSpec::line(0.0, 2.0, 10);
  GridDensity p = uniform_density(grid);
  EXPECT_NEAR(total_mass(p), 1.0, 1e-15);
  for (double& v : p.values) v *= 2.0;
  EXPECT_NEAR(total_mass(p), 2.0, 1e-14);
}

TEST(Mass, WeightsEnterCellVolume) {
  const GridSpec grid = GridSpec::line(0.0, 1.0, 8);
  GridDensity p{grid, std::vector<double>(8, 1.0), std::vector<double>(8, 3.0)};
  EXPECT_NEAR(total_mass(p), 3.0, 1e-15);
  EXPECT_NEAR(total_mass(normalized(p)), 1.0, 1e-15);
}

TEST(Entropy, UniformIntervals) {
  EXPECT_NEAR(shannon_entropy(uniform_density(GridSpec::line(0.0, 1.0, 32))), 0.0, 1e-14);
  EXPECT_NEAR(shannon_entropy(uniform_density(GridSpec::line(0.0, 2.0, 32))), std::log(2.0), 1e-14);
}

TEST(Entropy, GaussianClosedForm) {
  const double var = 0.7;
  const GridDensity p = gaussian_density(GridSpec::line(-10.0, 10.0, 4000), var);
  EXPECT_NEAR(shannon_entropy(p), 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * var), 1e-5);
}

TEST(Entropy, ProductionVanishesAtEquilibrium) {
  const GridSpec grid = GridSpec::line(-6.0, 6.0, 256);
  const auto land = quadratic_1d(1.0);
  const auto noise = isotropic_noise(1, 1.0);
  const FokkerPlanckSolver solver(grid, land, noise, PowerLaw{1.0}, 1.0);
  const GridDensity p = stationary_boltzmann(land, 1.0, grid);
  const double diffusion_scale = [&] {
    // same integrand without the drift part, as a size reference
    const FokkerPlanckSolver pure(grid, constant_landscape(1), noise, PowerLaw{1.0}, 1.0);
    return pure.entropy_rate(p);
  }();
  EXPECT_GT(diffusion_scale, 0.0);
  const double h = grid.spacing(0);
  EXPECT_LT(std::abs(solver.entropy_rate(p)), h * h * diffusion_scale);
}

TEST(Entropy, ProductionMatchesEntropyChangeForDiffusion) {
  const GridSpec grid = GridSpec::line(-8.0, 8.0, 400);
  const auto land = constant_landscape(1);
  const auto noise = isotropic_noise(1, 1.0);
  const FokkerPlanckSolver solver(grid, land, noise, PowerLaw{0.0}, 1.0);
  const double dt = solver.stability_bound();
  const auto traj = solver.evolve(gaussian_density(grid, 0.2), dt, static_cast<std::int64_t>(1.0 / dt), 1);
  const double ds = entropy_change(traj);
  const double prod = entropy_production(traj, land, noise, PowerLaw{0.0}, 1.0, dt);
  EXPECT_GT(ds, 0.0);
  EXPECT_NEAR(prod / ds, 1.0, 0.01);
  // Gaussian oracle: variance 0.2 -> 0.2 + t
  const double t = dt * static_cast<double>(traj.size() - 1);
  EXPECT_NEAR(ds, 0.5 * std::log((0.2 + t) / 0.2), 1e-3);
}

TEST(Entropy, ReversedTrajectoryFlipsSign) {
  const GridSpec grid = GridSpec::line(-6.0, 6.0, 128);
  const FokkerPlanckSolver solver(grid, quadratic_1d(1.0), isotropic_noise(1, 1.0), PowerLaw{0.0}, 1.0);
  auto traj = solver.evolve(gaussian_density(grid, 0.05, 1.0), solver.stability_bound(), 200, 10);
  const double forward = entropy_change(traj);
  std::reverse(traj.begin(), traj.end());
  EXPECT_DOUBLE_EQ(entropy_change(traj), -forward);
}

TEST(Entropy, MismatchedTrajectoryRejected) {
  std::vector<GridDensity> traj{uniform_density(GridSpec::line(0.0, 1.0, 8)), uniform_density(GridSpec::line(0.0, 1.0, 16))};
  try {
    entropy_production(traj, constant_landscape(1), isotropic_noise(1, 1.0), PowerLaw{0.0}, 1.0, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MismatchedTrajectory);
  }
}

TEST(Grid, RejectsTooFewCells) { EXPECT_THROW(GridSpec::line(0.0, 1.0, 4), Error); }

TEST(Grid, L1RejectsDifferentGrids) {
  try {
    l1_distance(uniform_density(GridSpec::line(0.0, 1.0, 8)), uniform_density(GridSpec::line(0.0, 2.0, 8)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::GridMismatch);
  }
}

}  // namespace
}  // namespace geolearn
