#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "geolearn/error.hpp"
#include "geolearn/grid.hpp"
#include "geolearn/landscape.hpp"
#include "geolearn/spd.hpp"
#include "geolearn/tridiagonal.hpp"

namespace geolearn {

/// Which drift/diffusion tensors enter the equation.
///   General:   drift gamma g^-1 grad U, diffusion gamma^2/2 g^-1 kappa g^-1, volume sqrt(det g)
///   Covariant: as General but with kappa = g, i.e. diffusion gamma^2/2 g^-1
///   Flat:      g = eps I; drift gamma/eps grad U, diffusion gamma^2/2 kappa/eps^2, unit volume
enum class EquationForm { General, Covariant, Flat };
enum class TimeScheme { Explicit, SemiImplicit };

struct FpOptions {
  EquationForm form = EquationForm::General;
  double flat_epsilon = 1.0;
  TimeScheme scheme = TimeScheme::Explicit;
};

struct StepOutcome {
  GridDensity density;
  double min_before_clamp = 0.0;
  bool clamped = false;  // a cell fell below -1e-12 and was reset to zero
};

inline constexpr double kNegativeDensityTolerance = 1e-12;

/// Conservative finite-volume discretisation of
///   dP/dt = (1/w) d_mu [ w ( gamma A^{mu nu} d_nu U P + gamma^2/2 D^{mu nu} d_nu P ) ]
/// with zero-flux walls. Tensors are sampled at cell centres and averaged
/// onto faces; normal derivatives are two-point differences across the face
/// and tangential ones the average of the adjacent cells' central differences.
class FokkerPlanckSolver {
 public:
  FokkerPlanckSolver(GridSpec grid, const LossLandscape& land, const NoiseModel& noise, const MetricSpec& metric,
                     double gamma, FpOptions options = {})
      : grid_(grid), gamma_(gamma), options_(options) {
    grid_.validate();
    require(gamma > 0.0 && std::isfinite(gamma), ErrorCode::DomainError, "gamma must be positive");
    require(options.flat_epsilon > 0.0, ErrorCode::DomainError, "flat epsilon must be positive");
    require(dimension(land) == grid_.dims && dimension(noise) == grid_.dims, ErrorCode::DimensionMismatch,
            "landscape, noise model and grid must share a dimension");
    validate(metric);
    build(land, noise, metric);
  }

  const GridSpec& grid() const { return grid_; }
  double gamma() const { return gamma_; }
  const FpOptions& options() const { return options_; }

  /// Per-cell sqrt(det g); empty when the volume form is flat.
  const std::vector<double>& weights() const { return weights_; }

  /// Largest explicit time step: 0.4 h^2 / (gamma^2 lambda_max(D)) and,
  /// when drift is present, 0.4 h / |drift|.
  double stability_bound() const { return bound_; }

  GridDensity uniform() const { return uniform_density(grid_, weights_); }
  GridDensity density(const std::function<double(const Vector&)>& f) const { return density_from(grid_, f, weights_); }

  StepOutcome advance(const GridDensity& p, double dt) const {
    check_compatible(p);
    require(dt > 0.0 && std::isfinite(dt), ErrorCode::DomainError, "dt must be positive");
    std::vector<double> next;
    if (options_.scheme == TimeScheme::Explicit) {
      require(dt <= bound_ * (1.0 + 1e-12), ErrorCode::StabilityViolation,
              "dt = " + std::to_string(dt) + " exceeds the explicit stability bound " + std::to_string(bound_));
      next = explicit_step(p.values, dt);
    } else {
      next = implicit_step(p.values, dt);
    }
    StepOutcome out{GridDensity{grid_, std::move(next), weights_}, 0.0, false};
    out.min_before_clamp = *std::min_element(out.density.values.begin(), out.density.values.end());
    if (out.min_before_clamp < 0.0) {
      out.clamped = out.min_before_clamp < -kNegativeDensityTolerance;
      for (double& v : out.density.values) v = std::max(v, 0.0);
    }
    return out;
  }

  GridDensity step(const GridDensity& p, double dt) const { return advance(p, dt).density; }

  /// Runs `steps` steps and returns the initial state plus a snapshot every
  /// `every` steps (and the final one).
  std::vector<GridDensity> evolve(GridDensity p, double dt, std::int64_t steps, std::int64_t every = 1) const {
    std::vector<GridDensity> traj{p};
    for (std::int64_t s = 1; s <= steps; ++s) {
      p = step(p, dt);
      if ((every > 0 && s % every == 0) || s == steps) traj.push_back(p);
    }
    return traj;
  }

  /// Instantaneous entropy production of the semi-discrete scheme,
  /// sum over faces of F . grad ln P, i.e. the discrete form of
  ///   int sqrt(g) [ gamma A d U . d P + gamma^2/2 (D d P . d P) / P ].
  double entropy_rate(const GridDensity& p) const {
    check_compatible(p);
    std::vector<double> fx, fy;
    fluxes(p.values, fx, fy);
    auto lnp = [&](Index c) { return std::log(std::max(p.values[static_cast<std::size_t>(c)], 1e-300)); };
    const Index n0 = grid_.n[0], n1 = grid_.dims == 2 ? grid_.n[1] : 1;
    const double dy = grid_.dims == 2 ? grid_.spacing(1) : 1.0;
    double rate = 0.0;
    for (Index j = 0; j < n1; ++j)
      for (Index i = 0; i + 1 < n0; ++i) {
        const Index c = i + n0 * j;
        rate += fx[static_cast<std::size_t>(i + (n0 - 1) * j)] * (lnp(c + 1) - lnp(c)) * dy;
      }
    if (grid_.dims == 2) {
      const double dx = grid_.spacing(0);
      for (Index j = 0; j + 1 < n1; ++j)
        for (Index i = 0; i < n0; ++i) {
          const Index c = i + n0 * j;
          rate += fy[static_cast<std::size_t>(i + n0 * j)] * (lnp(c + n0) - lnp(c)) * dx;
        }
    }
    return rate;
  }

 private:
  struct Tensor2 {
    double xx = 0, xy = 0, yx = 0, yy = 0;
  };

  void build(const LossLandscape& land, const NoiseModel& noise, const MetricSpec& metric) {
    const Index cells = grid_.cells();
    std::vector<double> u(static_cast<std::size_t>(cells)), w(static_cast<std::size_t>(cells));
    std::vector<Tensor2> a(static_cast<std::size_t>(cells)), d(static_cast<std::size_t>(cells));
    double lambda_max = 0.0;
    bool flat_volume = true;
    for (Index c = 0; c < cells; ++c) {
      const Vector x = grid_.center(c);
      const auto k = static_cast<std::size_t>(c);
      u[k] = potential(land, x);
      const Matrix kappa = noise_covariance(noise, x);
      Matrix am, dm;
      if (options_.form == EquationForm::Flat) {
        const double eps = options_.flat_epsilon;
        am = Matrix::Identity(grid_.dims, grid_.dims) / eps;
        dm = kappa / (eps * eps);
        w[k] = 1.0;
      } else {
        const MetricGeometry geo = geometry_from_kappa(kappa, metric);
        am = geo.g_inv;
        dm = options_.form == EquationForm::Covariant ? geo.g_inv : geo.diffusion;
        w[k] = geo.sqrt_det_g;
      }
      if (w[k] != 1.0) flat_volume = false;
      a[k] = to_tensor(am);
      d[k] = to_tensor(dm);
      if (dm.size() == 1) lambda_max = std::max(lambda_max, dm(0, 0));
      else lambda_max = std::max(lambda_max, jacobi_eigen(0.5 * (dm + dm.transpose())).eigenvalues.maxCoeff());
    }
    if (!flat_volume) weights_ = w;

    const Index n0 = grid_.n[0], n1 = grid_.dims == 2 ? grid_.n[1] : 1;
    const double dx = grid_.spacing(0), dy = grid_.dims == 2 ? grid_.spacing(1) : 1.0;
    inv_wdx_.resize(static_cast<std::size_t>(cells));
    inv_wdy_.resize(static_cast<std::size_t>(cells));
    for (Index c = 0; c < cells; ++c) {
      inv_wdx_[static_cast<std::size_t>(c)] = 1.0 / (w[static_cast<std::size_t>(c)] * dx);
      inv_wdy_[static_cast<std::size_t>(c)] = 1.0 / (w[static_cast<std::size_t>(c)] * dy);
    }

    const double half_g2 = 0.5 * gamma_ * gamma_;
    double max_rate = 0.0;  // max |face drift| / (w dx)
    double max_ratio = 1.0;  // max face weight / cell weight
    auto at = [&](const std::vector<double>& f, Index i, Index j) { return f[static_cast<std::size_t>(i + n0 * j)]; };

    // x faces
    ax_.assign(static_cast<std::size_t>((n0 - 1) * n1), 0.0);
    dxx_ = ax_;
    dxy_ = ax_;
    for (Index j = 0; j < n1; ++j)
      for (Index i = 0; i + 1 < n0; ++i) {
        const auto c = static_cast<std::size_t>(i + n0 * j), e = c + 1;
        const auto f = static_cast<std::size_t>(i + (n0 - 1) * j);
        const double wf = 0.5 * (w[c] + w[e]);
        const double axx = 0.5 * (a[c].xx + a[e].xx), axy = 0.5 * (a[c].xy + a[e].xy);
        const double du_x = (u[e] - u[c]) / dx;
        double drift = axx * du_x;
        if (grid_.dims == 2) {
          const double du_y = 0.5 * (tangential(u, i, j, 1) + tangential(u, i + 1, j, 1));
          drift += axy * du_y;
          dxy_[f] = half_g2 * wf * 0.5 * (d[c].xy + d[e].xy);
        }
        ax_[f] = gamma_ * wf * drift;
        dxx_[f] = half_g2 * wf * 0.5 * (d[c].xx + d[e].xx);
        max_rate = std::max(max_rate, std::abs(ax_[f]) / (std::min(w[c], w[e]) * dx));
        max_ratio = std::max(max_ratio, wf / std::min(w[c], w[e]));
      }
    // y faces
    if (grid_.dims == 2) {
      ay_.assign(static_cast<std::size_t>(n0 * (n1 - 1)), 0.0);
      dyy_ = ay_;
      dyx_ = ay_;
      for (Index j = 0; j + 1 < n1; ++j)
        for (Index i = 0; i < n0; ++i) {
          const auto c = static_cast<std::size_t>(i + n0 * j), e = c + static_cast<std::size_t>(n0);
          const auto f = static_cast<std::size_t>(i + n0 * j);
          const double wf = 0.5 * (w[c] + w[e]);
          const double ayy = 0.5 * (a[c].yy + a[e].yy), ayx = 0.5 * (a[c].yx + a[e].yx);
          const double du_y = (u[e] - u[c]) / dy;
          const double du_x = 0.5 * (tangential(u, i, j, 0) + tangential(u, i, j + 1, 0));
          ay_[f] = gamma_ * wf * (ayy * du_y + ayx * du_x);
          dyy_[f] = half_g2 * wf * 0.5 * (d[c].yy + d[e].yy);
          dyx_[f] = half_g2 * wf * 0.5 * (d[c].yx + d[e].yx);
          max_rate = std::max(max_rate, std::abs(ay_[f]) / (std::min(w[c], w[e]) * dy));
          max_ratio = std::max(max_ratio, wf / std::min(w[c], w[e]));
        }
    }
    (void)at;

    const double h = grid_.dims == 2 ? std::min(dx, dy) : dx;
    bound_ = std::numeric_limits<double>::infinity();
    if (lambda_max > 0.0) bound_ = 0.4 * h * h / (gamma_ * gamma_ * lambda_max * max_ratio);
    if (max_rate > 0.0) bound_ = std::min(bound_, 0.4 / max_rate);
  }

  static Tensor2 to_tensor(const Matrix& m) {
    if (m.rows() == 1) return Tensor2{m(0, 0), 0.0, 0.0, 0.0};
    return Tensor2{m(0, 0), m(0, 1), m(1, 0), m(1, 1)};
  }

  /// Central difference of a cell field along `axis` at cell (i, j), one-sided at walls.
  double tangential(const std::vector<double>& f, Index i, Index j, int axis) const {
    const Index n0 = grid_.n[0];
    const Index n = grid_.n[axis];
    const Index k = axis == 0 ? i : j;
    const double h = grid_.spacing(axis);
    auto val = [&](Index kk) {
      return axis == 0 ? f[static_cast<std::size_t>(kk + n0 * j)] : f[static_cast<std::size_t>(i + n0 * kk)];
    };
    if (k == 0) return (val(1) - val(0)) / h;
    if (k == n - 1) return (val(n - 1) - val(n - 2)) / h;
    return (val(k + 1) - val(k - 1)) / (2.0 * h);
  }

  void fluxes(const std::vector<double>& p, std::vector<double>& fx, std::vector<double>& fy,
              bool include_normal = true, bool include_cross = true) const {
    const Index n0 = grid_.n[0], n1 = grid_.dims == 2 ? grid_.n[1] : 1;
    const double dx = grid_.spacing(0);
    fx.assign(ax_.size(), 0.0);
    for (Index j = 0; j < n1; ++j)
      for (Index i = 0; i + 1 < n0; ++i) {
        const auto c = static_cast<std::size_t>(i + n0 * j), e = c + 1;
        const auto f = static_cast<std::size_t>(i + (n0 - 1) * j);
        double flux = 0.0;
        if (include_normal) flux = ax_[f] * 0.5 * (p[c] + p[e]) + dxx_[f] * (p[e] - p[c]) / dx;
        if (include_cross && grid_.dims == 2)
          flux += dxy_[f] * 0.5 * (tangential(p, i, j, 1) + tangential(p, i + 1, j, 1));
        fx[f] = flux;
      }
    fy.clear();
    if (grid_.dims == 2) {
      const double dy = grid_.spacing(1);
      fy.assign(ay_.size(), 0.0);
      for (Index j = 0; j + 1 < n1; ++j)
        for (Index i = 0; i < n0; ++i) {
          const auto c = static_cast<std::size_t>(i + n0 * j), e = c + static_cast<std::size_t>(n0);
          const auto f = static_cast<std::size_t>(i + n0 * j);
          double flux = 0.0;
          if (include_normal) flux = ay_[f] * 0.5 * (p[c] + p[e]) + dyy_[f] * (p[e] - p[c]) / dy;
          if (include_cross) flux += dyx_[f] * 0.5 * (tangential(p, i, j, 0) + tangential(p, i, j + 1, 0));
          fy[f] = flux;
        }
    }
  }

  /// sum of flux differences into each cell, divided by its volume
  std::vector<double> divergence(const std::vector<double>& fx, const std::vector<double>& fy) const {
    const Index n0 = grid_.n[0], n1 = grid_.dims == 2 ? grid_.n[1] : 1;
    std::vector<double> out(static_cast<std::size_t>(grid_.cells()), 0.0);
    for (Index j = 0; j < n1; ++j)
      for (Index i = 0; i < n0; ++i) {
        const auto c = static_cast<std::size_t>(i + n0 * j);
        const double right = i + 1 < n0 ? fx[static_cast<std::size_t>(i + (n0 - 1) * j)] : 0.0;
        const double left = i > 0 ? fx[static_cast<std::size_t>(i - 1 + (n0 - 1) * j)] : 0.0;
        double v = (right - left) * inv_wdx_[c];
        if (grid_.dims == 2) {
          const double up = j + 1 < n1 ? fy[c] : 0.0;
          const double down = j > 0 ? fy[c - static_cast<std::size_t>(n0)] : 0.0;
          v += (up - down) * inv_wdy_[c];
        }
        out[c] = v;
      }
    return out;
  }

  std::vector<double> explicit_step(const std::vector<double>& p, double dt) const {
    std::vector<double> fx, fy;
    fluxes(p, fx, fy);
    const std::vector<double> div = divergence(fx, fy);
    std::vector<double> next(p.size());
    for (std::size_t c = 0; c < p.size(); ++c) next[c] = p[c] + dt * div[c];
    return next;
  }

  // Backward Euler along x (then y in 2D); cross-diffusion terms explicit.
  std::vector<double> implicit_step(const std::vector<double>& p, double dt) const {
    const Index n0 = grid_.n[0], n1 = grid_.dims == 2 ? grid_.n[1] : 1;
    std::vector<double> rhs = p;
    if (grid_.dims == 2) {
      std::vector<double> fx, fy;
      fluxes(p, fx, fy, false, true);
      const std::vector<double> div = divergence(fx, fy);
      for (std::size_t c = 0; c < rhs.size(); ++c) rhs[c] += dt * div[c];
    }
    const double dx = grid_.spacing(0);
    std::vector<double> lo(static_cast<std::size_t>(n0)), di(static_cast<std::size_t>(n0)),
        up(static_cast<std::size_t>(n0)), r(static_cast<std::size_t>(n0));
    for (Index j = 0; j < n1; ++j) {
      for (Index i = 0; i < n0; ++i) {
        const auto c = static_cast<std::size_t>(i + n0 * j);
        const auto k = static_cast<std::size_t>(i);
        const double s = dt * inv_wdx_[c];
        double l = 0.0, dg = 1.0, u = 0.0;
        if (i + 1 < n0) {
          const auto f = static_cast<std::size_t>(i + (n0 - 1) * j);
          dg -= s * (0.5 * ax_[f] - dxx_[f] / dx);
          u = -s * (0.5 * ax_[f] + dxx_[f] / dx);
        }
        if (i > 0) {
          const auto f = static_cast<std::size_t>(i - 1 + (n0 - 1) * j);
          dg += s * (0.5 * ax_[f] + dxx_[f] / dx);
          l = s * (0.5 * ax_[f] - dxx_[f] / dx);
        }
        lo[k] = l;
        di[k] = dg;
        up[k] = u;
        r[k] = rhs[c];
      }
      const auto x = solve_tridiagonal<double>(lo, di, up, r);
      for (Index i = 0; i < n0; ++i) rhs[static_cast<std::size_t>(i + n0 * j)] = x[static_cast<std::size_t>(i)];
    }
    if (grid_.dims == 2) {
      const double dy = grid_.spacing(1);
      lo.resize(static_cast<std::size_t>(n1));
      di.resize(static_cast<std::size_t>(n1));
      up.resize(static_cast<std::size_t>(n1));
      r.resize(static_cast<std::size_t>(n1));
      for (Index i = 0; i < n0; ++i) {
        for (Index j = 0; j < n1; ++j) {
          const auto c = static_cast<std::size_t>(i + n0 * j);
          const auto k = static_cast<std::size_t>(j);
          const double s = dt * inv_wdy_[c];
          double l = 0.0, dg = 1.0, u = 0.0;
          if (j + 1 < n1) {
            const auto f = c;
            dg -= s * (0.5 * ay_[f] - dyy_[f] / dy);
            u = -s * (0.5 * ay_[f] + dyy_[f] / dy);
          }
          if (j > 0) {
            const auto f = c - static_cast<std::size_t>(n0);
            dg += s * (0.5 * ay_[f] + dyy_[f] / dy);
            l = s * (0.5 * ay_[f] - dyy_[f] / dy);
          }
          lo[k] = l;
          di[k] = dg;
          up[k] = u;
          r[k] = rhs[c];
        }
        const auto x = solve_tridiagonal<double>(lo, di, up, r);
        for (Index j = 0; j < n1; ++j) rhs[static_cast<std::size_t>(i + n0 * j)] = x[static_cast<std::size_t>(j)];
      }
    }
    return rhs;
  }

  void check_compatible(const GridDensity& p) const {
    require(p.grid == grid_ && p.size() == grid_.cells(), ErrorCode::GridMismatch,
            "density grid differs from the solver grid");
    require(p.weights.empty() == weights_.empty() && (weights_.empty() || p.weights == weights_),
            ErrorCode::GridMismatch, "density volume weights differ from the solver metric");
  }

  GridSpec grid_;
  double gamma_;
  FpOptions options_;
  std::vector<double> weights_;
  std::vector<double> inv_wdx_, inv_wdy_;
  std::vector<double> ax_, dxx_, dxy_;  // x faces
  std::vector<double> ay_, dyy_, dyx_;  // y faces
  double bound_ = 0.0;
};

inline GridDensity fp_step(const GridDensity& p, const LossLandscape& land, const NoiseModel& noise,
                           const MetricSpec& metric, double gamma, double dt, FpOptions options = {}) {
  return FokkerPlanckSolver(p.grid, land, noise, metric, gamma, options).step(p, dt);
}

/// P proportional to exp(-(2/gamma) U), the stationary density of the
/// covariant equation with kappa = g.
inline GridDensity stationary_boltzmann(const LossLandscape& land, double gamma, const GridSpec& grid,
                                        std::vector<double> weights = {}) {
  require(gamma > 0.0, ErrorCode::DomainError, "gamma must be positive");
  grid.validate();
  std::vector<double> u(static_cast<std::size_t>(grid.cells()));
  for (Index c = 0; c < grid.cells(); ++c) u[static_cast<std::size_t>(c)] = potential(land, grid.center(c));
  const auto [umin, umax] = std::minmax_element(u.begin(), u.end());
  const double lo = *umin;
  require((*umax - lo) <= 700.0 * (gamma / 2.0), ErrorCode::OverflowGuard,
          "potential range on the grid exceeds 700 * gamma / 2; the Boltzmann weights underflow");
  GridDensity p{grid, std::vector<double>(u.size()), std::move(weights)};
  for (std::size_t c = 0; c < u.size(); ++c) p.values[c] = std::exp(-(2.0 / gamma) * (u[c] - lo));
  return normalized(std::move(p));
}

inline double entropy_change(std::span<const GridDensity> traj) {
  require(!traj.empty(), ErrorCode::MismatchedTrajectory, "empty trajectory");
  return shannon_entropy(traj.back()) - shannon_entropy(traj.front());
}

/// Trapezoid-rule time integral of the entropy production rate along a
/// trajectory sampled every `dt`.
inline double entropy_production(std::span<const GridDensity> traj, const LossLandscape& land, const NoiseModel& noise,
                                 const MetricSpec& metric, double gamma, double dt, FpOptions options = {}) {
  require(!traj.empty(), ErrorCode::MismatchedTrajectory, "empty trajectory");
  for (const auto& p : traj)
    require(p.grid == traj.front().grid, ErrorCode::MismatchedTrajectory, "trajectory snapshots use different grids");
  const FokkerPlanckSolver solver(traj.front().grid, land, noise, metric, gamma, options);
  double total = 0.0;
  double prev = solver.entropy_rate(traj.front());
  for (std::size_t n = 1; n < traj.size(); ++n) {
    const double cur = solver.entropy_rate(traj[n]);
    total += 0.5 * dt * (prev + cur);
    prev = cur;
  }
  return total;
}

}  // namespace geolearn
