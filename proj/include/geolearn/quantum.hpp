#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <vector>

#include "geolearn/error.hpp"
#include "geolearn/grid.hpp"
#include "geolearn/landscape.hpp"
#include "geolearn/spd.hpp"
#include "geolearn/tridiagonal.hpp"

namespace geolearn {

using Complex = std::complex<double>;

struct PlanckMass {
  double hbar = 1.0;
  double mass = 1.0;
};

/// hbar = sqrt(2 gamma / beta), M = 1 / (2 gamma).
inline PlanckMass planck_mass_from(double gamma, double beta) {
  require(gamma > 0.0 && beta > 0.0 && std::isfinite(gamma) && std::isfinite(beta), ErrorCode::DomainError,
          "gamma and beta must be positive");
  return {std::sqrt(2.0 * gamma / beta), 1.0 / (2.0 * gamma)};
}

// ---------------------------------------------------------------------------
// Geometry sampled on a grid

struct MetricField {
  GridSpec grid;
  std::vector<Matrix> g;
  std::vector<Matrix> g_inv;
  std::vector<double> sqrt_det_g;
};

/// Per-cell rank-2 tensor, e.g. the raised covariance g^-1 kappa g^-1.
struct TensorField {
  GridSpec grid;
  std::vector<Matrix> values;
};

inline MetricField flat_metric(const GridSpec& grid) {
  grid.validate();
  const auto cells = static_cast<std::size_t>(grid.cells());
  const Matrix id = Matrix::Identity(grid.dims, grid.dims);
  return MetricField{grid, std::vector<Matrix>(cells, id), std::vector<Matrix>(cells, id),
                     std::vector<double>(cells, 1.0)};
}

inline MetricField metric_field(const GridSpec& grid, const NoiseModel& noise, const MetricSpec& spec) {
  grid.validate();
  require(dimension(noise) == grid.dims, ErrorCode::DimensionMismatch, "noise model and grid differ in dimension");
  MetricField out{grid, {}, {}, {}};
  for (Index c = 0; c < grid.cells(); ++c) {
    const MetricGeometry geo = geometry_from_kappa(noise_covariance(noise, grid.center(c)), spec);
    out.g.push_back(geo.g);
    out.g_inv.push_back(geo.g_inv);
    out.sqrt_det_g.push_back(geo.sqrt_det_g);
  }
  return out;
}

inline TensorField inverse_metric(const MetricField& m) { return TensorField{m.grid, m.g_inv}; }

/// kappa^{mu nu} = g^{mu a} kappa_{ab} g^{b nu} on every cell.
inline TensorField raise_covariance(const GridSpec& grid, const NoiseModel& noise, const MetricSpec& spec) {
  grid.validate();
  require(dimension(noise) == grid.dims, ErrorCode::DimensionMismatch, "noise model and grid differ in dimension");
  TensorField out{grid, {}};
  for (Index c = 0; c < grid.cells(); ++c)
    out.values.push_back(geometry_from_kappa(noise_covariance(noise, grid.center(c)), spec).diffusion);
  return out;
}

namespace detail {

inline std::size_t flat(const GridSpec& g, Index i, Index j) { return static_cast<std::size_t>(i + g.n[0] * j); }

/// Value of f at cell (i, j) with quadratic extrapolation one cell past either wall.
inline double ghosted(const GridSpec& g, const std::vector<double>& f, Index i, Index j) {
  const Index n0 = g.n[0], n1 = g.dims == 2 ? g.n[1] : 1;
  if (i < 0) return 3.0 * f[flat(g, 0, j)] - 3.0 * f[flat(g, 1, j)] + f[flat(g, 2, j)];
  if (i >= n0) return 3.0 * f[flat(g, n0 - 1, j)] - 3.0 * f[flat(g, n0 - 2, j)] + f[flat(g, n0 - 3, j)];
  if (j < 0) return 3.0 * f[flat(g, i, 0)] - 3.0 * f[flat(g, i, 1)] + f[flat(g, i, 2)];
  if (j >= n1) return 3.0 * f[flat(g, i, n1 - 1)] - 3.0 * f[flat(g, i, n1 - 2)] + f[flat(g, i, n1 - 3)];
  return f[flat(g, i, j)];
}

/// Second-order derivative of a cell field along `axis` (one-sided three-point at walls).
inline std::vector<double> derivative(const GridSpec& g, const std::vector<double>& f, int axis) {
  const Index n0 = g.n[0], n1 = g.dims == 2 ? g.n[1] : 1;
  const double h = g.spacing(axis);
  std::vector<double> out(f.size());
  for (Index j = 0; j < n1; ++j)
    for (Index i = 0; i < n0; ++i) {
      const Index k = axis == 0 ? i : j, n = g.n[axis];
      auto at = [&](Index kk) { return axis == 0 ? f[flat(g, kk, j)] : f[flat(g, i, kk)]; };
      double d;
      if (k == 0) d = (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h);
      else if (k == n - 1) d = (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h);
      else d = (at(k + 1) - at(k - 1)) / (2.0 * h);
      out[flat(g, i, j)] = d;
    }
  return out;
}

/// (1/w) d_mu (w A^{mu nu} d_nu f) in divergence form. Face coefficients are
/// averages of the neighbouring cells; outside the grid w and A are held
/// constant and f is extrapolated quadratically.
inline std::vector<double> divergence_form(const GridSpec& g, const std::vector<double>& f,
                                           const std::vector<double>& w, const std::vector<Matrix>& a) {
  const Index n0 = g.n[0], n1 = g.dims == 2 ? g.n[1] : 1;
  const double dx = g.spacing(0), dy = g.dims == 2 ? g.spacing(1) : 1.0;
  std::vector<double> dfx, dfy;
  if (g.dims == 2) {
    dfx = derivative(g, f, 0);
    dfy = derivative(g, f, 1);
  }
  auto clamp_i = [&](Index i) { return std::clamp<Index>(i, 0, n0 - 1); };
  auto clamp_j = [&](Index j) { return std::clamp<Index>(j, 0, n1 - 1); };
  // x-flux through the face between (i, j) and (i + 1, j), i in [-1, n0 - 1]
  auto flux_x = [&](Index i, Index j) {
    const std::size_t c = flat(g, clamp_i(i), j), e = flat(g, clamp_i(i + 1), j);
    const double wf = 0.5 * (w[c] + w[e]);
    double v = 0.5 * (a[c](0, 0) + a[e](0, 0)) * (ghosted(g, f, i + 1, j) - ghosted(g, f, i, j)) / dx;
    if (g.dims == 2) v += 0.5 * (a[c](0, 1) + a[e](0, 1)) * 0.5 * (dfy[c] + dfy[e]);
    return wf * v;
  };
  auto flux_y = [&](Index i, Index j) {
    const std::size_t c = flat(g, i, clamp_j(j)), e = flat(g, i, clamp_j(j + 1));
    const double wf = 0.5 * (w[c] + w[e]);
    const double v = 0.5 * (a[c](1, 1) + a[e](1, 1)) * (ghosted(g, f, i, j + 1) - ghosted(g, f, i, j)) / dy +
                     0.5 * (a[c](1, 0) + a[e](1, 0)) * 0.5 * (dfx[c] + dfx[e]);
    return wf * v;
  };
  std::vector<double> out(f.size());
  for (Index j = 0; j < n1; ++j)
    for (Index i = 0; i < n0; ++i) {
      const std::size_t c = flat(g, i, j);
      double v = (flux_x(i, j) - flux_x(i - 1, j)) / dx;
      if (g.dims == 2) v += (flux_y(i, j) - flux_y(i, j - 1)) / dy;
      out[c] = v / w[c];
    }
  return out;
}

inline void check_metric(const GridSpec& grid, const MetricField& m) {
  require(m.grid == grid && m.g_inv.size() == static_cast<std::size_t>(grid.cells()), ErrorCode::GridMismatch,
          "metric field lives on a different grid");
}

}  // namespace detail

struct PotentialField {
  ScalarField field;
  std::size_t clamped = 0;  // cells where P was raised to the 1e-300 floor
};

inline constexpr double kDensityFloor = 1e-300;

namespace detail {

// Shared by the quantum and neural potentials: -(2 gamma^2 / beta) (1/sqrt P) (1/w) d(w T d sqrt P).
inline PotentialField density_potential(const GridDensity& p, const MetricField& m, const std::vector<Matrix>& tensor,
                                        double gamma, double beta) {
  check_metric(p.grid, m);
  require(tensor.size() == m.g_inv.size(), ErrorCode::GridMismatch, "tensor field has the wrong size");
  require(gamma > 0.0 && beta > 0.0, ErrorCode::DomainError, "gamma and beta must be positive");
  PotentialField out{ScalarField{p.grid, {}}, 0};
  std::vector<double> root(p.values.size());
  for (std::size_t c = 0; c < root.size(); ++c) {
    double v = p.values[c];
    if (!(v >= kDensityFloor)) {
      v = kDensityFloor;
      ++out.clamped;
    }
    root[c] = std::sqrt(v);
  }
  const std::vector<double> lap = divergence_form(p.grid, root, m.sqrt_det_g, tensor);
  const double scale = -2.0 * gamma * gamma / beta;
  out.field.values.resize(root.size());
  for (std::size_t c = 0; c < root.size(); ++c) out.field.values[c] = scale * lap[c] / root[c];
  return out;
}

}  // namespace detail

/// Q = -(2 gamma^2 / beta) (1/sqrt P) (1/sqrt g) d_mu (sqrt g g^{mu nu} d_nu sqrt P).
inline PotentialField quantum_potential(const GridDensity& p, const MetricField& m, double gamma, double beta) {
  return detail::density_potential(p, m, m.g_inv, gamma, beta);
}

/// As quantum_potential with the raised covariance kappa^{mu nu} in place of g^{mu nu}.
inline PotentialField neural_potential(const GridDensity& p, const MetricField& m, const TensorField& kappa_raised,
                                       double gamma, double beta) {
  require(kappa_raised.grid == p.grid, ErrorCode::GridMismatch, "tensor field lives on a different grid");
  return detail::density_potential(p, m, kappa_raised.values, gamma, beta);
}

/// V = gamma g^{mu nu} dU dU - (gamma/beta) (1/sqrt g) d(sqrt g g^{mu nu} dU) + f.
inline ScalarField effective_potential(const LossLandscape& land, const MetricField& m, double gamma, double beta,
                                       double f = 0.0) {
  require(gamma > 0.0 && beta > 0.0, ErrorCode::DomainError, "gamma and beta must be positive");
  require(dimension(land) == m.grid.dims, ErrorCode::DimensionMismatch, "landscape and grid differ in dimension");
  const GridSpec& g = m.grid;
  const ScalarField u = sample_field(g, [&](const Vector& q) { return potential(land, q); });
  const std::vector<double> lap = detail::divergence_form(g, u.values, m.sqrt_det_g, m.g_inv);
  std::vector<std::vector<double>> du;
  for (int a = 0; a < g.dims; ++a) du.push_back(detail::derivative(g, u.values, a));
  ScalarField v{g, std::vector<double>(u.values.size())};
  for (std::size_t c = 0; c < u.values.size(); ++c) {
    double quad = 0.0;
    for (int a = 0; a < g.dims; ++a)
      for (int b = 0; b < g.dims; ++b) quad += m.g_inv[c](a, b) * du[static_cast<std::size_t>(a)][c] * du[static_cast<std::size_t>(b)][c];
    v.values[c] = gamma * quad - (gamma / beta) * lap[c] + f;
  }
  return v;
}

/// f - d<phi>/dt + gamma g dphi dphi + gamma g dU dU, with the time derivative
/// a forward difference between the two slices and the spatial terms taken
/// at their midpoint.
inline ScalarField constraint_residual(const ScalarField& phi_prev, const ScalarField& phi_next, double dt,
                                       const LossLandscape& land, const MetricField& m, double gamma, double f = 0.0) {
  require(phi_prev.grid == m.grid && phi_next.grid == m.grid, ErrorCode::GridMismatch,
          "phase slices and metric use different grids");
  require(dt > 0.0, ErrorCode::DomainError, "dt must be positive");
  const GridSpec& g = m.grid;
  std::vector<double> mid(phi_prev.values.size());
  for (std::size_t c = 0; c < mid.size(); ++c) mid[c] = 0.5 * (phi_prev.values[c] + phi_next.values[c]);
  const ScalarField u = sample_field(g, [&](const Vector& q) { return potential(land, q); });
  std::vector<std::vector<double>> dphi, du;
  for (int a = 0; a < g.dims; ++a) {
    dphi.push_back(detail::derivative(g, mid, a));
    du.push_back(detail::derivative(g, u.values, a));
  }
  ScalarField out{g, std::vector<double>(mid.size())};
  for (std::size_t c = 0; c < mid.size(); ++c) {
    double pp = 0.0, uu = 0.0;
    for (std::size_t a = 0; a < dphi.size(); ++a)
      for (std::size_t b = 0; b < dphi.size(); ++b) {
        const double gi = m.g_inv[c](static_cast<Index>(a), static_cast<Index>(b));
        pp += gi * dphi[a][c] * dphi[b][c];
        uu += gi * du[a][c] * du[b][c];
      }
    out.values[c] = f - (phi_next.values[c] - phi_prev.values[c]) / dt + gamma * pp + gamma * uu;
  }
  return out;
}

/// g^{mu nu} dU d<phi>; vanishes when the fluctuations are purely entropic.
inline ScalarField entropic_overlap(const ScalarField& phi, const LossLandscape& land, const MetricField& m) {
  require(phi.grid == m.grid, ErrorCode::GridMismatch, "phase and metric use different grids");
  const GridSpec& g = m.grid;
  const ScalarField u = sample_field(g, [&](const Vector& q) { return potential(land, q); });
  ScalarField out{g, std::vector<double>(phi.values.size(), 0.0)};
  for (int a = 0; a < g.dims; ++a) {
    const auto du = detail::derivative(g, u.values, a);
    for (int b = 0; b < g.dims; ++b) {
      const auto dp = detail::derivative(g, phi.values, b);
      for (std::size_t c = 0; c < out.values.size(); ++c) out.values[c] += m.g_inv[c](a, b) * du[c] * dp[c];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// 1D Schroedinger dynamics on a flat grid

enum class Boundary { HardWall, Periodic };

struct WaveField {
  GridSpec grid;
  std::vector<Complex> psi;

  double norm() const {
    double s = 0.0;
    for (const auto& z : psi) s += std::norm(z);
    return s * grid.spacing(0);
  }
  Index size() const { return static_cast<Index>(psi.size()); }
};

inline WaveField normalized(WaveField w) {
  const double n = w.norm();
  require(n > 0.0 && std::isfinite(n), ErrorCode::DomainError, "cannot normalise a zero wave function");
  const double s = 1.0 / std::sqrt(n);
  for (auto& z : w.psi) z *= s;
  return w;
}

inline double position_mean(const WaveField& w) {
  double m = 0.0, s = 0.0;
  for (Index i = 0; i < w.size(); ++i) {
    const double p = std::norm(w.psi[static_cast<std::size_t>(i)]);
    m += p * w.grid.coordinate(0, i);
    s += p;
  }
  return m / s;
}

inline ScalarField harmonic_potential(const GridSpec& grid, double mass, double omega, double center = 0.0) {
  return sample_field(grid, [&](const Vector& q) { return 0.5 * mass * omega * omega * (q[0] - center) * (q[0] - center); });
}

/// Displaced oscillator ground state, normalised on the grid.
inline WaveField coherent_state(const GridSpec& grid, double hbar, double mass, double omega, double q0,
                                double p0 = 0.0) {
  require(grid.dims == 1, ErrorCode::DomainError, "wave functions are 1D");
  WaveField w{grid, {}};
  for (Index i = 0; i < grid.n[0]; ++i) {
    const double x = grid.coordinate(0, i) - q0;
    w.psi.push_back(std::exp(-mass * omega * x * x / (2.0 * hbar)) * std::polar(1.0, p0 * x / hbar));
  }
  return normalized(std::move(w));
}

/// Strang splitting: half potential step, Crank-Nicolson kinetic step, half
/// potential step. The kinetic operator is the three-point Laplacian with
/// psi = 0 on the outer faces (HardWall) or wrapped (Periodic).
class SplitStepSchrodinger {
 public:
  SplitStepSchrodinger(const ScalarField& v, double hbar, double mass, double dt, Boundary boundary = Boundary::HardWall)
      : grid_(v.grid), boundary_(boundary) {
    require(grid_.dims == 1, ErrorCode::DomainError, "the Schroedinger solver is 1D");
    require(hbar > 0.0 && mass > 0.0 && dt > 0.0, ErrorCode::DomainError, "hbar, mass and dt must be positive");
    double vmax = 0.0;
    for (double x : v.values) vmax = std::max(vmax, std::abs(x));
    require(dt * vmax / hbar < 0.5, ErrorCode::StabilityViolation,
            "dt * max|V| / hbar = " + std::to_string(dt * vmax / hbar) + " exceeds the splitting budget 0.5");
    const auto n = static_cast<std::size_t>(grid_.n[0]);
    half_phase_.resize(n);
    for (std::size_t i = 0; i < n; ++i) half_phase_[i] = std::polar(1.0, -v.values[i] * dt / (2.0 * hbar));
    const double dx = grid_.spacing(0);
    const double r = dt * hbar / (4.0 * mass * dx * dx);
    const Complex ir(0.0, r);
    lower_.assign(n, -ir);
    upper_.assign(n, -ir);
    diag_.assign(n, 1.0 + 2.0 * ir);
    rhs_off_ = ir;
    rhs_diag_.assign(n, 1.0 - 2.0 * ir);
    if (boundary_ == Boundary::HardWall) {
      diag_.front() = diag_.back() = 1.0 + 3.0 * ir;
      rhs_diag_.front() = rhs_diag_.back() = 1.0 - 3.0 * ir;
    }
  }

  void step(WaveField& w) const {
    require(w.grid == grid_, ErrorCode::GridMismatch, "wave function lives on a different grid");
    const std::size_t n = w.psi.size();
    for (std::size_t i = 0; i < n; ++i) w.psi[i] *= half_phase_[i];
    std::vector<Complex> rhs(n);
    for (std::size_t i = 0; i < n; ++i) {
      Complex left = i > 0 ? w.psi[i - 1] : (boundary_ == Boundary::Periodic ? w.psi[n - 1] : Complex(0.0));
      Complex right = i + 1 < n ? w.psi[i + 1] : (boundary_ == Boundary::Periodic ? w.psi[0] : Complex(0.0));
      rhs[i] = rhs_diag_[i] * w.psi[i] + rhs_off_ * (left + right);
    }
    w.psi = boundary_ == Boundary::Periodic ? solve_cyclic_tridiagonal<Complex>(lower_, diag_, upper_, rhs)
                                             : solve_tridiagonal<Complex>(lower_, diag_, upper_, rhs);
    for (std::size_t i = 0; i < n; ++i) w.psi[i] *= half_phase_[i];
  }

 private:
  GridSpec grid_;
  Boundary boundary_;
  std::vector<Complex> half_phase_;
  std::vector<Complex> lower_, diag_, upper_, rhs_diag_;
  Complex rhs_off_;
};

inline WaveField schrodinger_evolve(WaveField psi0, const ScalarField& v, double hbar, double mass, double dt,
                                    std::int64_t steps, Boundary boundary = Boundary::HardWall) {
  require(psi0.grid == v.grid, ErrorCode::GridMismatch, "wave function and potential use different grids");
  const SplitStepSchrodinger stepper(v, hbar, mass, dt, boundary);
  for (std::int64_t s = 0; s < steps; ++s) stepper.step(psi0);
  return psi0;
}

struct GroundState {
  double energy = 0.0;
  WaveField psi;
  int iterations = 0;
};

struct GroundStateOptions {
  Boundary boundary = Boundary::HardWall;
  double tau = 50.0;  // imaginary-time step of the backward-Euler iteration
  double tolerance = 1e-10;
  int max_iterations = 20000;
};

/// Lowest eigenpair of H = -(hbar^2 / 2M) d^2 + V by backward-Euler
/// imaginary-time steps (I + tau (H - Vmin)) psi' = psi with renormalisation,
/// stopped once the Rayleigh quotient changes by less than the tolerance.
inline GroundState ground_state(const ScalarField& v, double hbar, double mass, GroundStateOptions opt = {}) {
  const GridSpec& grid = v.grid;
  require(grid.dims == 1, ErrorCode::DomainError, "the Schroedinger solver is 1D");
  require(hbar > 0.0 && mass > 0.0 && opt.tau > 0.0, ErrorCode::DomainError, "hbar, mass and tau must be positive");
  const auto n = static_cast<std::size_t>(grid.n[0]);
  const double dx = grid.spacing(0);
  const double kin = hbar * hbar / (2.0 * mass * dx * dx);
  const bool periodic = opt.boundary == Boundary::Periodic;
  std::vector<double> hdiag(n);
  for (std::size_t i = 0; i < n; ++i) hdiag[i] = 2.0 * kin + v.values[i];
  if (!periodic) {
    hdiag.front() += kin;
    hdiag.back() += kin;
  }
  const double vmin = *std::min_element(v.values.begin(), v.values.end());
  std::vector<double> lo(n, -opt.tau * kin), up(n, -opt.tau * kin), di(n);
  for (std::size_t i = 0; i < n; ++i) di[i] = 1.0 + opt.tau * (hdiag[i] - vmin);

  auto apply_h = [&](const std::vector<double>& x) {
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = hdiag[i] * x[i];
      if (i > 0) s -= kin * x[i - 1];
      else if (periodic) s -= kin * x[n - 1];
      if (i + 1 < n) s -= kin * x[i + 1];
      else if (periodic) s -= kin * x[0];
      y[i] = s;
    }
    return y;
  };
  auto rayleigh = [&](const std::vector<double>& x) {
    const auto hx = apply_h(x);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      num += x[i] * hx[i];
      den += x[i] * x[i];
    }
    return num / den;
  };

  const auto centre = static_cast<std::size_t>(std::min_element(v.values.begin(), v.values.end()) - v.values.begin());
  const double width = (grid.hi[0] - grid.lo[0]) / 8.0;
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (grid.coordinate(0, static_cast<Index>(i)) - grid.coordinate(0, static_cast<Index>(centre))) / width;
    x[i] = std::exp(-0.5 * d * d);
  }
  double energy = rayleigh(x);
  for (int it = 1; it <= opt.max_iterations; ++it) {
    x = periodic ? solve_cyclic_tridiagonal<double>(lo, di, up, x) : solve_tridiagonal<double>(lo, di, up, x);
    double s = 0.0;
    for (double xi : x) s += xi * xi;
    s = 1.0 / std::sqrt(s * dx);
    for (double& xi : x) xi *= s;
    const double next = rayleigh(x);
    const bool done = std::abs(next - energy) < opt.tolerance;
    energy = next;
    if (done) {
      WaveField w{grid, std::vector<Complex>(x.begin(), x.end())};
      return GroundState{energy, std::move(w), it};
    }
  }
  throw Error(ErrorCode::NonConvergence,
              "imaginary-time iteration did not converge in " + std::to_string(opt.max_iterations) + " steps");
}

// ---------------------------------------------------------------------------
// Madelung variables

struct Madelung {
  GridDensity p;
  ScalarField phi;                    // <phi> = -hbar * unwrapped arg(psi)
  std::vector<std::uint8_t> defined;  // 0 where |psi| <= threshold and the phase is held
};

inline constexpr double kPhaseAmplitudeThreshold = 1e-8;

/// P = |psi|^2 and <phi> = -hbar arg(psi), unwrapped left to right starting
/// from the leftmost cell with |psi| above the threshold. Masked cells carry
/// the nearest defined phase to their left (or right, before the first one).
inline Madelung madelung_decompose(const WaveField& w, double hbar) {
  require(hbar > 0.0, ErrorCode::DomainError, "hbar must be positive");
  const std::size_t n = w.psi.size();
  Madelung out{GridDensity{w.grid, std::vector<double>(n), {}}, ScalarField{w.grid, std::vector<double>(n, 0.0)},
               std::vector<std::uint8_t>(n, 0)};
  std::optional<double> last_arg;
  double unwrapped = 0.0;
  std::optional<std::size_t> first;
  for (std::size_t i = 0; i < n; ++i) {
    out.p.values[i] = std::norm(w.psi[i]);
    if (std::abs(w.psi[i]) > kPhaseAmplitudeThreshold) {
      const double a = std::arg(w.psi[i]);
      if (last_arg) {
        double d = a - *last_arg;
        d -= 2.0 * std::numbers::pi * std::round(d / (2.0 * std::numbers::pi));
        unwrapped += d;
      } else {
        unwrapped = a;
        first = i;
      }
      last_arg = a;
      out.defined[i] = 1;
    }
    out.phi.values[i] = -hbar * unwrapped;
  }
  require(first.has_value(), ErrorCode::PhaseUndefined, "wave function vanishes everywhere");
  for (std::size_t i = 0; i < *first; ++i) out.phi.values[i] = out.phi.values[*first];
  return out;
}

inline WaveField madelung_compose(const GridDensity& p, const ScalarField& phi, double hbar) {
  require(p.grid == phi.grid, ErrorCode::GridMismatch, "density and phase use different grids");
  require(hbar > 0.0, ErrorCode::DomainError, "hbar must be positive");
  WaveField w{p.grid, std::vector<Complex>(p.values.size())};
  for (std::size_t i = 0; i < p.values.size(); ++i)
    w.psi[i] = std::polar(std::sqrt(std::max(p.values[i], 0.0)), -phi.values[i] / hbar);
  return w;
}

/// One Crank-Nicolson step of dP/dt = 2 gamma d(P d<phi>) (flat 1D, zero flux
/// at the walls), with the phase taken at the old and new time levels.
inline GridDensity continuity_step(const GridDensity& p, const ScalarField& phi_old, const ScalarField& phi_new,
                                   double gamma, double dt) {
  require(p.grid.dims == 1, ErrorCode::DomainError, "continuity stepper is 1D");
  require(p.grid == phi_old.grid && p.grid == phi_new.grid, ErrorCode::GridMismatch,
          "density and phase use different grids");
  const auto n = static_cast<std::size_t>(p.grid.n[0]);
  const double dx = p.grid.spacing(0);
  // face coefficient c_f: F_f = c_f (P_i + P_{i+1}) / 2
  auto faces = [&](const ScalarField& phi) {
    std::vector<double> c(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) c[i] = 2.0 * gamma * (phi.values[i + 1] - phi.values[i]) / dx;
    return c;
  };
  const auto c_old = faces(phi_old), c_new = faces(phi_new);
  const double s = 0.5 * dt / dx;
  std::vector<double> rhs(n), lo(n, 0.0), di(n, 1.0), up(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double flux = 0.0;
    if (i + 1 < n) flux += 0.5 * c_old[i] * (p.values[i] + p.values[i + 1]);
    if (i > 0) flux -= 0.5 * c_old[i - 1] * (p.values[i - 1] + p.values[i]);
    rhs[i] = p.values[i] + s * flux;
    if (i + 1 < n) {
      di[i] -= s * 0.5 * c_new[i];
      up[i] = -s * 0.5 * c_new[i];
    }
    if (i > 0) {
      di[i] += s * 0.5 * c_new[i - 1];
      lo[i] = s * 0.5 * c_new[i - 1];
    }
  }
  return GridDensity{p.grid, solve_tridiagonal<double>(lo, di, up, rhs), p.weights};
}

/// Angular frequency from successive upward zero crossings (about the mean)
/// of a uniformly sampled signal, with linear interpolation between samples.
inline double crossing_frequency(const std::vector<double>& times, const std::vector<double>& values) {
  require(times.size() == values.size() && times.size() > 2, ErrorCode::EmptyData, "need a sampled signal");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  std::vector<double> crossings;
  for (std::size_t i = 1; i < values.size(); ++i) {
    const double a = values[i - 1] - mean, b = values[i] - mean;
    if (a < 0.0 && b >= 0.0) crossings.push_back(times[i - 1] + (times[i] - times[i - 1]) * (-a) / (b - a));
  }
  require(crossings.size() >= 2, ErrorCode::EmptyData, "signal completes less than one oscillation");
  const double period = (crossings.back() - crossings.front()) / static_cast<double>(crossings.size() - 1);
  return 2.0 * std::numbers::pi / period;
}

}  // namespace geolearn
