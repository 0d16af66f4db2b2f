#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "geolearn/error.hpp"
#include "geolearn/grid.hpp"
#include "geolearn/landscape.hpp"
#include "geolearn/rng.hpp"
#include "geolearn/spd.hpp"

namespace geolearn {

enum class DriftCorrection { Auto, On, Off };

struct SimConfig {
  double gamma = 1.0;
  double dt = 0.01;  // in units of the learning time scale
  std::int64_t steps = 100;
  Index ensemble_size = 1;
  std::uint64_t seed = 0;
  MetricSpec metric = PowerLaw{1.0};
  DriftCorrection drift_correction = DriftCorrection::Auto;
  std::int64_t snapshot_every = 0;  // 0: first and last state only
  unsigned threads = 0;             // 0: hardware concurrency

  void validate() const {
    require(gamma > 0.0 && std::isfinite(gamma), ErrorCode::DomainError, "gamma must be positive");
    require(dt > 0.0 && std::isfinite(dt), ErrorCode::DomainError, "dt must be positive");
    require(steps >= 0, ErrorCode::DomainError, "steps must be non-negative");
    require(ensemble_size > 0, ErrorCode::DomainError, "ensemble_size must be positive");
    require(snapshot_every >= 0, ErrorCode::DomainError, "snapshot_every must be non-negative");
    geolearn::validate(metric);
  }
};

struct Ensemble {
  std::vector<Vector> states;
  double time = 0.0;
};

/// Euler-Maruyama integrator for
///   dq = -gamma g^-1 grad U dt + b_corr dt + xi,   Cov(xi) = gamma^2 g^-1 kappa g^-1 dt,
/// where g = g(kappa(q)) and b_corr = gamma^2/2 (1/sqrt g) d_nu(sqrt g g^-1 kappa g^-1)^{mu nu}
/// makes the Ito process match the covariant Fokker-Planck equation when the
/// geometry depends on q.
class LangevinKernel {
 public:
  LangevinKernel(LossLandscape land, NoiseModel noise, const SimConfig& cfg)
      : land_(std::move(land)), noise_(std::move(noise)), gamma_(cfg.gamma), dt_(cfg.dt), metric_(cfg.metric) {
    cfg.validate();
    require(dimension(land_) == dimension(noise_), ErrorCode::DimensionMismatch,
            "landscape and noise model differ in dimension");
    state_dependent_ = is_state_dependent(noise_);
    correct_ = cfg.drift_correction == DriftCorrection::On ||
               (cfg.drift_correction == DriftCorrection::Auto && state_dependent_);
    if (!state_dependent_) {
      fixed_ = geometry_from_kappa(noise_covariance(noise_, Vector::Zero(dimension(noise_))), metric_);
      fixed_factor_ = psd_sqrt(fixed_->diffusion * (gamma_ * gamma_ * dt_));
      check_stability(*fixed_);
    }
  }

  Index dim() const { return dimension(land_); }
  bool drift_corrected() const { return correct_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  MetricGeometry geometry(const Vector& q) const {
    return fixed_ ? *fixed_ : geometry_from_kappa(noise_covariance(noise_, q), metric_);
  }

  /// Covariance of the stochastic part of one update at q: gamma^2 g^-1 kappa g^-1 dt.
  Matrix update_covariance(const Vector& q) const { return geometry(q).diffusion * (gamma_ * gamma_ * dt_); }

  /// gamma^2/2 (1/sqrt g) d_nu (sqrt g D^{mu nu}) by central differences of the geometry.
  Vector correction_drift(const Vector& q) const {
    const Index k = q.size();
    Vector b = Vector::Zero(k);
    if (fixed_) return b;
    const MetricGeometry here = geometry(q);
    for (Index nu = 0; nu < k; ++nu) {
      const double h = 1e-5 * std::max(1.0, std::abs(q[nu]));
      Vector qp = q, qm = q;
      qp[nu] += h;
      qm[nu] -= h;
      const MetricGeometry gp = geometry(qp), gm = geometry(qm);
      for (Index mu = 0; mu < k; ++mu)
        b[mu] += (gp.sqrt_det_g * gp.diffusion(mu, nu) - gm.sqrt_det_g * gm.diffusion(mu, nu)) / (2.0 * h);
    }
    return b * (0.5 * gamma_ * gamma_ / here.sqrt_det_g);
  }

  Vector deterministic_drift(const Vector& q) const {
    const MetricGeometry geo = geometry(q);
    Vector drift = -gamma_ * (geo.g_inv * gradient(land_, q));
    if (correct_) drift += correction_drift(q);
    return drift;
  }

  /// One Euler-Maruyama step. `step_index` is only used in error messages.
  Vector step(const Vector& q, Rng& rng, std::int64_t step_index = -1) const {
    if (fixed_ && q.size() == 1) {
      const double z = std::normal_distribution<double>(0.0, 1.0)(rng);
      const double x = q[0] - gamma_ * dt_ * fixed_->g_inv(0, 0) * gradient_1d(land_, q[0]) + fixed_factor_(0, 0) * z;
      if (!std::isfinite(x))
        throw Error(ErrorCode::NonFiniteState, "state became non-finite at step " + std::to_string(step_index));
      return Vector::Constant(1, x);
    }
    const Vector z = standard_normal(rng, q.size());
    Vector next;
    if (fixed_) {
      next = q - (gamma_ * dt_) * (fixed_->g_inv * gradient(land_, q)) + fixed_factor_ * z;
    } else {
      const MetricGeometry geo = geometry(q);
      Vector drift = -gamma_ * (geo.g_inv * gradient(land_, q));
      if (correct_) drift += correction_drift(q);
      next = q + dt_ * drift + psd_sqrt(geo.diffusion * (gamma_ * gamma_ * dt_)) * z;
    }
    if (!next.allFinite())
      throw Error(ErrorCode::NonFiniteState, "state became non-finite at step " + std::to_string(step_index));
    return next;
  }

  void check_stability(const MetricGeometry& geo) {
    const double curvature = max_curvature(land_);
    if (!std::isfinite(curvature) || curvature <= 0.0) return;
    const EigenPair e = jacobi_eigen(geo.g);
    const double bound = dt_ * gamma_ * curvature / e.eigenvalues[0];
    if (bound >= 2.0) {
      std::ostringstream msg;
      msg << "dt*gamma*lambda_max(H)/lambda_min(g) = " << bound << " >= 2: the update is unstable on this quadratic";
      warnings_.push_back(msg.str());
    }
  }

 private:
  LossLandscape land_;
  NoiseModel noise_;
  double gamma_;
  double dt_;
  MetricSpec metric_;
  bool state_dependent_ = false;
  bool correct_ = false;
  std::optional<MetricGeometry> fixed_;
  Matrix fixed_factor_;
  std::vector<std::string> warnings_;
};

inline Vector langevin_step(const Vector& state, const LossLandscape& land, const NoiseModel& noise,
                            const SimConfig& cfg, Rng& rng) {
  return LangevinKernel(land, noise, cfg).step(state, rng);
}

struct MemberFailure {
  Index member = 0;
  std::int64_t step = 0;
  std::string message;
};

struct TrajectoryRecord {
  std::vector<Ensemble> snapshots;
  std::vector<MemberFailure> failures;  // failed members stay frozen at their last finite state
  std::vector<std::string> warnings;

  void throw_if_failed() const {
    if (failures.empty()) return;
    const auto& f = failures.front();
    throw Error(ErrorCode::NonFiniteState, "member " + std::to_string(f.member) + ": " + f.message);
  }
};

/// Steps at which run_ensemble records a snapshot: 0, every `every` steps, and the last step.
inline std::vector<std::int64_t> snapshot_steps(std::int64_t steps, std::int64_t every) {
  std::vector<std::int64_t> out{0};
  if (every > 0)
    for (std::int64_t s = every; s < steps; s += every) out.push_back(s);
  if (steps > 0) out.push_back(steps);
  return out;
}

/// Integrates every member independently with its own seeded stream
/// (member_rng(seed, index)); the output does not depend on the thread count.
inline TrajectoryRecord run_ensemble(const LossLandscape& land, const NoiseModel& noise, const SimConfig& cfg,
                                     const Ensemble& initial) {
  cfg.validate();
  require(!initial.states.empty(), ErrorCode::EmptyEnsemble, "initial ensemble is empty");
  const LangevinKernel kernel(land, noise, cfg);
  for (const auto& s : initial.states) {
    require(s.size() == kernel.dim(), ErrorCode::DimensionMismatch, "ensemble member has the wrong dimension");
    require_finite(s, "initial ensemble");
  }

  const auto marks = snapshot_steps(cfg.steps, cfg.snapshot_every);
  const std::size_t members = initial.states.size();
  TrajectoryRecord record;
  record.warnings = kernel.warnings();
  if (is_state_dependent(noise)) {
    LangevinKernel probe(land, noise, cfg);
    probe.check_stability(kernel.geometry(initial.states.front()));
    record.warnings.insert(record.warnings.end(), probe.warnings().begin(), probe.warnings().end());
  }
  record.snapshots.resize(marks.size());
  for (std::size_t s = 0; s < marks.size(); ++s) {
    record.snapshots[s].time = initial.time + static_cast<double>(marks[s]) * cfg.dt;
    record.snapshots[s].states.resize(members);
  }
  std::vector<std::optional<MemberFailure>> failed(members);

  auto run_member = [&](std::size_t m) {
    Rng rng = member_rng(cfg.seed, m);
    Vector q = initial.states[m];
    std::size_t mark = 0;
    record.snapshots[mark++].states[m] = q;
    bool alive = true;
    for (std::int64_t step = 1; step <= cfg.steps; ++step) {
      if (alive) {
        try {
          q = kernel.step(q, rng, step);
        } catch (const Error& e) {
          failed[m] = MemberFailure{static_cast<Index>(m), step, e.what()};
          alive = false;
        }
      }
      if (mark < marks.size() && marks[mark] == step) record.snapshots[mark++].states[m] = q;
    }
  };

  unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, members));
  if (threads <= 1) {
    for (std::size_t m = 0; m < members; ++m) run_member(m);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (members + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t begin = t * chunk, end = std::min(members, begin + chunk);
      if (begin >= end) break;
      pool.emplace_back([&, begin, end] {
        for (std::size_t m = begin; m < end; ++m) run_member(m);
      });
    }
  }
  for (auto& f : failed)
    if (f) record.failures.push_back(*f);
  return record;
}

struct EmpiricalDensity {
  GridDensity density;
  std::size_t overflow = 0;  // members outside the grid
};

/// Histogram of the ensemble, normalised so that sum P dV equals the
/// in-grid fraction of members.
inline EmpiricalDensity empirical_density(const Ensemble& ens, const GridSpec& grid, std::vector<double> weights = {}) {
  require(!ens.states.empty(), ErrorCode::EmptyEnsemble, "cannot histogram an empty ensemble");
  grid.validate();
  EmpiricalDensity out{GridDensity{grid, std::vector<double>(static_cast<std::size_t>(grid.cells()), 0.0),
                                   std::move(weights)},
                       0};
  for (const auto& q : ens.states) {
    require(q.size() == grid.dims, ErrorCode::DimensionMismatch, "ensemble and grid differ in dimension");
    const Index cell = grid.locate(q);
    if (cell < 0) ++out.overflow;
    else out.density.values[static_cast<std::size_t>(cell)] += 1.0;
  }
  const double n = static_cast<double>(ens.states.size());
  for (Index i = 0; i < grid.cells(); ++i) out.density.values[static_cast<std::size_t>(i)] /= n * out.density.cell_volume(i);
  return out;
}

inline std::vector<double> coordinate_samples(const Ensemble& ens, Index axis = 0) {
  std::vector<double> xs;
  xs.reserve(ens.states.size());
  for (const auto& q : ens.states) xs.push_back(q[axis]);
  return xs;
}

}  // namespace geolearn
