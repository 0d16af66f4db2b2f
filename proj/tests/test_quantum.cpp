#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "geolearn/quantum.hpp"

namespace geolearn {
namespace {

constexpr double kPi = std::numbers::pi;

GridDensity gaussian_density(const GridSpec& grid, double var) {
  return density_from(grid, [&](const Vector& q) { return std::exp(-q[0] * q[0] / (2.0 * var)); });
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

TEST(PlanckMass, ClosedForms) {
  const PlanckMass a = planck_mass_from(0.5, 1.0);
  EXPECT_DOUBLE_EQ(a.hbar, 1.0);
  EXPECT_DOUBLE_EQ(a.mass, 1.0);
  const PlanckMass b = planck_mass_from(2.0, 4.0);
  EXPECT_DOUBLE_EQ(b.hbar, 1.0);
  EXPECT_DOUBLE_EQ(b.mass, 0.25);
}

TEST(PlanckMass, ScalingAndDomain) {
  const PlanckMass a = planck_mass_from(0.3, 1.0), b = planck_mass_from(0.3, 4.0);
  EXPECT_NEAR(b.hbar, a.hbar / 2.0, 1e-15);
  EXPECT_EQ(a.mass, b.mass);
  EXPECT_THROW(planck_mass_from(0.0, 1.0), Error);
  EXPECT_THROW(planck_mass_from(1.0, -1.0), Error);
}

TEST(EffectivePotential, ConstantLossGivesConstraintConstant) {
  const GridSpec grid = GridSpec::line(-2.0, 2.0, 32);
  const ScalarField v = effective_potential(constant_landscape(1, 3.0), flat_metric(grid), 0.5, 2.0, 1.25);
  for (double x : v.values) EXPECT_NEAR(x, 1.25, 1e-12);
}

TEST(EffectivePotential, QuadraticClosedForm) {
  const GridSpec grid = GridSpec::line(-3.0, 3.0, 64);
  const double gamma = 0.7, beta = 1.3, k = 2.0, f = 0.4;
  const ScalarField v = effective_potential(quadratic_1d(k), flat_metric(grid), gamma, beta, f);
  for (Index i = 0; i < grid.cells(); ++i) {
    const double q = grid.coordinate(0, i);
    EXPECT_NEAR(v[i], gamma * k * k * q * q - (gamma / beta) * k + f, 1e-10);
  }
}

TEST(EffectivePotential, ConstraintConstantIsAdditive) {
  const GridSpec grid = GridSpec::line(-2.0, 2.0, 40);
  const auto m = flat_metric(grid);
  const ScalarField a = effective_potential(double_well(1.0, 1.0), m, 0.5, 1.0, 0.0);
  const ScalarField b = effective_potential(double_well(1.0, 1.0), m, 0.5, 1.0, 3.0);
  for (Index i = 0; i < grid.cells(); ++i) EXPECT_NEAR(b[i] - a[i], 3.0, 1e-12);
}

TEST(QuantumPotential, UniformDensityHasNone) {
  const GridSpec grid = GridSpec::line(0.0, 1.0, 16);
  const PotentialField q = quantum_potential(uniform_density(grid), flat_metric(grid), 0.5, 1.0);
  EXPECT_LT(max_abs(q.field.values), 1e-10);
  EXPECT_EQ(q.clamped, 0u);
}

TEST(QuantumPotential, GaussianClosedForm) {
  const GridSpec grid = GridSpec::line(-4.0, 4.0, 800);
  const double gamma = 0.5, beta = 2.0, s2 = 0.6;
  const PotentialField q = quantum_potential(gaussian_density(grid, s2), flat_metric(grid), gamma, beta);
  for (Index i = 1; i + 1 < grid.cells(); ++i) {
    const double x = grid.coordinate(0, i);
    const double expect = -(2.0 * gamma * gamma / beta) * (x * x / (4.0 * s2 * s2) - 1.0 / (2.0 * s2));
    EXPECT_NEAR(q.field[i], expect, 1e-4 * (1.0 + std::abs(expect))) << x;
  }
}

TEST(QuantumPotential, HarmonicGroundStateMakesVPlusQConstant) {
  // sqrt(P) Gaussian with s^2 = sqrt(gamma / (2 beta)) / k cancels the q^2 term of V
  const double gamma = 0.5, beta = 1.5, k = 1.2;
  const double s2 = std::sqrt(gamma / (2.0 * beta)) / k;
  const GridSpec grid = GridSpec::line(-5.0, 5.0, 1000);
  const auto m = flat_metric(grid);
  const GridDensity p = gaussian_density(grid, s2);
  const ScalarField v = effective_potential(quadratic_1d(k), m, gamma, beta);
  const PotentialField q = quantum_potential(p, m, gamma, beta);
  const double constant = -(gamma / beta) * k + gamma * gamma / (beta * s2);
  const double pmax = *std::max_element(p.values.begin(), p.values.end());
  for (Index i = 0; i < grid.cells(); ++i)
    if (p[i] >= 1e-6 * pmax) EXPECT_NEAR(v[i] + q.field[i], constant, 1e-3 * max_abs(v.values));
}

TEST(QuantumPotential, FloorsVanishingDensity) {
  const GridSpec grid = GridSpec::line(0.0, 1.0, 16);
  GridDensity p = uniform_density(grid);
  p.values[3] = 0.0;
  const PotentialField q = quantum_potential(p, flat_metric(grid), 0.5, 1.0);
  EXPECT_EQ(q.clamped, 1u);
}

TEST(NeuralPotential, ReducesToQuantumPotentialBitwise) {
  const GridSpec grid = GridSpec::line(-3.0, 3.0, 64);
  const auto noise = state_dependent_noise(DiagonalMap::Quadratic, Vector::Constant(1, 0.5), Vector::Constant(1, 0.3),
                                           Vector::Zero(1));
  const MetricField m = metric_field(grid, noise, PowerLaw{1.0});
  const GridDensity p = gaussian_density(grid, 0.7);
  const auto q = quantum_potential(p, m, 0.5, 1.0);
  const auto n = neural_potential(p, m, inverse_metric(m), 0.5, 1.0);
  EXPECT_EQ(q.field.values, n.field.values);
  // the raised covariance with kappa = g agrees to round-off
  const auto r = neural_potential(p, m, raise_covariance(grid, noise, PowerLaw{1.0}), 0.5, 1.0);
  for (Index i = 0; i < grid.cells(); ++i) EXPECT_NEAR(r.field[i], q.field[i], 1e-10 * (1.0 + std::abs(q.field[i])));
}

TEST(NeuralPotential, ScalesWithFlatCovariance) {
  const GridSpec grid = GridSpec::line(-3.0, 3.0, 64);
  const MetricField m = flat_metric(grid);
  const GridDensity p = gaussian_density(grid, 0.4);
  const TensorField doubled{grid, std::vector<Matrix>(64, 2.0 * Matrix::Identity(1, 1))};
  const auto q = quantum_potential(p, m, 0.5, 1.0);
  const auto n = neural_potential(p, m, doubled, 0.5, 1.0);
  for (Index i = 0; i < grid.cells(); ++i) EXPECT_NEAR(n.field[i], 2.0 * q.field[i], 1e-12 * (1.0 + std::abs(q.field[i])));
  const auto u = neural_potential(uniform_density(grid), m, doubled, 0.5, 1.0);
  EXPECT_LT(max_abs(u.field.values), 1e-10);
}

TEST(Constraint, ResidualOfLinearPhase) {
  const GridSpec grid = GridSpec::line(-1.0, 1.0, 32);
  const double a = 0.3, e = 0.8, dt = 0.01, gamma = 0.5, f = 0.2;
  const ScalarField prev = sample_field(grid, [&](const Vector& q) { return a * q[0]; });
  const ScalarField next = sample_field(grid, [&](const Vector& q) { return a * q[0] - e * dt; });
  const ScalarField r = constraint_residual(prev, next, dt, constant_landscape(1), flat_metric(grid), gamma, f);
  for (double x : r.values) EXPECT_NEAR(x, f + e + gamma * a * a, 1e-12);
}

TEST(Constraint, QuadraticLossContributesGradientSquare) {
  const GridSpec grid = GridSpec::line(-1.0, 1.0, 32);
  const ScalarField phi = sample_field(grid, [](const Vector&) { return 0.0; });
  const ScalarField r = constraint_residual(phi, phi, 0.1, quadratic_1d(2.0), flat_metric(grid), 0.5, 0.0);
  for (Index i = 0; i < grid.cells(); ++i) {
    const double q = grid.coordinate(0, i);
    EXPECT_NEAR(r[i], 0.5 * 4.0 * q * q, 1e-12);
  }
}

TEST(Constraint, EntropicOverlapOfConstantPhaseVanishes) {
  const GridSpec grid = GridSpec::line(-1.0, 1.0, 16);
  const ScalarField phi = sample_field(grid, [](const Vector&) { return 2.0; });
  const ScalarField o = entropic_overlap(phi, quadratic_1d(1.0), flat_metric(grid));
  EXPECT_LT(max_abs(o.values), 1e-12);
}

TEST(Schrodinger, PlaneWavePhaseOnPeriodicGrid) {
  const double length = 2.0 * kPi, hbar = 1.0, mass = 0.5, dt = 0.01;
  const Index n = 64;
  const int mode = 3;
  const GridSpec grid = GridSpec::line(0.0, length, n);
  const double kw = 2.0 * kPi * mode / length;
  WaveField w{grid, {}};
  for (Index i = 0; i < n; ++i) w.psi.push_back(std::polar(1.0, kw * grid.coordinate(0, i)));
  w = normalized(w);
  const ScalarField v = sample_field(grid, [](const Vector&) { return 0.0; });
  const int steps = 300;
  const WaveField out = schrodinger_evolve(w, v, hbar, mass, dt, steps, Boundary::Periodic);
  // Crank-Nicolson phase of a lattice eigenmode
  const double dx = grid.spacing(0);
  const double energy = hbar * hbar / (2.0 * mass) * (2.0 - 2.0 * std::cos(kw * dx)) / (dx * dx);
  const double phase = -2.0 * std::atan(energy * dt / (2.0 * hbar)) * steps;
  for (Index i = 0; i < n; ++i) {
    const Complex expect = w.psi[static_cast<std::size_t>(i)] * std::polar(1.0, phase);
    EXPECT_LT(std::abs(out.psi[static_cast<std::size_t>(i)] - expect), 1e-10);
  }
}

TEST(Schrodinger, NormDriftOverManySteps) {
  const GridSpec grid = GridSpec::line(-10.0, 10.0, 512);
  const ScalarField v = harmonic_potential(grid, 1.0, 1.0);
  const WaveField w = coherent_state(grid, 1.0, 1.0, 1.0, 2.0);
  const WaveField out = schrodinger_evolve(w, v, 1.0, 1.0, 0.005, 10000);
  EXPECT_LT(std::abs(out.norm() - 1.0), 1e-9);
}

TEST(Schrodinger, CoherentStateOscillatesAtOmega) {
  const double hbar = 1.0, mass = 1.0, omega = 1.3, dt = 0.005;
  const GridSpec grid = GridSpec::line(-10.0, 10.0, 1024);
  const ScalarField v = harmonic_potential(grid, mass, omega);
  const SplitStepSchrodinger stepper(v, hbar, mass, dt);
  WaveField w = coherent_state(grid, hbar, mass, omega, 2.0);
  std::vector<double> times, xs;
  const auto steps = static_cast<int>(3.2 * 2.0 * kPi / omega / dt);
  for (int s = 0; s <= steps; ++s) {
    times.push_back(s * dt);
    xs.push_back(position_mean(w));
    stepper.step(w);
  }
  EXPECT_NEAR(crossing_frequency(times, xs) / omega, 1.0, 5e-3);
  // amplitude is preserved
  EXPECT_NEAR(*std::max_element(xs.begin(), xs.end()), 2.0, 0.02);
}

TEST(Schrodinger, RejectsStepBeyondSplittingBudget) {
  const GridSpec grid = GridSpec::line(-10.0, 10.0, 64);
  const ScalarField v = harmonic_potential(grid, 1.0, 1.0);
  EXPECT_THROW(SplitStepSchrodinger(v, 1.0, 1.0, 0.1), Error);
}

TEST(GroundState, HarmonicEnergy) {
  const double gamma = 0.5, beta = 1.0, omega = 1.0;
  const PlanckMass pm = planck_mass_from(gamma, beta);
  const GridSpec grid = GridSpec::line(-10.0, 10.0, 1024);
  const GroundState gs = ground_state(harmonic_potential(grid, pm.mass, omega), pm.hbar, pm.mass);
  EXPECT_NEAR(gs.energy, 0.5 * pm.hbar * omega, 1e-3 * 0.5 * pm.hbar * omega);
  EXPECT_NEAR(gs.psi.norm(), 1.0, 1e-12);
}

TEST(GroundState, InfiniteWellEnergy) {
  const double length = 3.0, hbar = 0.8, mass = 1.7;
  const GridSpec grid = GridSpec::line(0.0, length, 400);
  const GroundState gs = ground_state(sample_field(grid, [](const Vector&) { return 0.0; }), hbar, mass);
  const double expect = kPi * kPi * hbar * hbar / (2.0 * mass * length * length);
  EXPECT_NEAR(gs.energy / expect, 1.0, 5e-3);
}

TEST(GroundState, ConstantShiftMovesEnergy) {
  const GridSpec grid = GridSpec::line(-8.0, 8.0, 256);
  const ScalarField v = harmonic_potential(grid, 1.0, 1.0);
  ScalarField shifted = v;
  for (double& x : shifted.values) x += 2.5;
  const double a = ground_state(v, 1.0, 1.0).energy, b = ground_state(shifted, 1.0, 1.0).energy;
  EXPECT_NEAR(b - a, 2.5, 1e-8);
}

TEST(GroundState, InvariantUnderTimeEvolution) {
  const GridSpec grid = GridSpec::line(-10.0, 10.0, 512);
  const ScalarField v = harmonic_potential(grid, 1.0, 1.0);
  const GroundState gs = ground_state(v, 1.0, 1.0);
  const WaveField out = schrodinger_evolve(gs.psi, v, 1.0, 1.0, 0.005, static_cast<std::int64_t>(2.0 * kPi / 0.005));
  double l1 = 0.0;
  for (Index i = 0; i < grid.cells(); ++i)
    l1 += std::abs(std::norm(out.psi[static_cast<std::size_t>(i)]) - std::norm(gs.psi.psi[static_cast<std::size_t>(i)])) *
          grid.spacing(0);
  EXPECT_LT(l1, 1e-6);
}

TEST(Madelung, PlaneWavePhaseIsLinear) {
  const GridSpec grid = GridSpec::line(0.0, 4.0, 200);
  const double p0 = 5.0, hbar = 0.5;
  WaveField w{grid, {}};
  for (Index i = 0; i < grid.cells(); ++i) w.psi.push_back(std::polar(0.5, p0 * grid.coordinate(0, i) / hbar));
  const Madelung md = madelung_decompose(w, hbar);
  for (Index i = 0; i < grid.cells(); ++i) {
    EXPECT_NEAR(md.p[i], 0.25, 1e-15);
    // <phi> = -hbar arg(psi) up to the branch fixed at the first cell
    EXPECT_NEAR(md.phi[i] - md.phi[0], -p0 * (grid.coordinate(0, i) - grid.coordinate(0, 0)), 1e-10);
  }
}

TEST(Madelung, ComposeInvertsDecompose) {
  const GridSpec grid = GridSpec::line(-6.0, 6.0, 256);
  const WaveField w = coherent_state(grid, 1.0, 1.0, 1.0, 1.5, 0.7);
  const Madelung md = madelung_decompose(w, 1.0);
  const WaveField back = madelung_compose(md.p, md.phi, 1.0);
  for (Index i = 0; i < grid.cells(); ++i)
    if (md.defined[static_cast<std::size_t>(i)])
      EXPECT_LT(std::abs(back.psi[static_cast<std::size_t>(i)] - w.psi[static_cast<std::size_t>(i)]), 1e-12);
}

TEST(Madelung, VanishingWaveHasNoPhase) {
  const GridSpec grid = GridSpec::line(0.0, 1.0, 8);
  try {
    madelung_decompose(WaveField{grid, std::vector<Complex>(8, 0.0)}, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PhaseUndefined);
  }
}

TEST(Madelung, ContinuityTracksSchrodingerDensity) {
  const double gamma = 0.5, beta = 1.0, omega = 1.0, dt = 0.005;
  const PlanckMass pm = planck_mass_from(gamma, beta);
  const GridSpec grid = GridSpec::line(-10.0, 10.0, 512);
  const ScalarField v = harmonic_potential(grid, pm.mass, omega);
  const SplitStepSchrodinger stepper(v, pm.hbar, pm.mass, dt);
  WaveField w = coherent_state(grid, pm.hbar, pm.mass, omega, 2.0);
  Madelung md = madelung_decompose(w, pm.hbar);
  GridDensity p = md.p;
  const auto steps = static_cast<int>(std::round(2.0 * kPi / omega / dt));
  for (int s = 0; s < steps; ++s) {
    stepper.step(w);
    const Madelung next = madelung_decompose(w, pm.hbar);
    p = continuity_step(p, md.phi, next.phi, gamma, dt);
    md = next;
  }
  EXPECT_LT(l1_distance(p, md.p), 1e-2);
}

TEST(Frequency, CrossingEstimatorOnSine) {
  std::vector<double> t, x;
  for (int i = 0; i < 4000; ++i) {
    t.push_back(i * 0.01);
    x.push_back(std::sin(2.3 * i * 0.01) + 0.5);
  }
  EXPECT_NEAR(crossing_frequency(t, x), 2.3, 1e-3);
  EXPECT_THROW(crossing_frequency({0.0, 1.0, 2.0}, {0.0, 0.0, 0.0}), Error);
}

}  // namespace
}  // namespace geolearn
