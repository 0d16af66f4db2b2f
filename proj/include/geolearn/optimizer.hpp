#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "geolearn/error.hpp"
#include "geolearn/landscape.hpp"
#include "geolearn/rng.hpp"
#include "geolearn/spd.hpp"

namespace geolearn {

enum class EstimatorMode { Diagonal, Full };

inline constexpr Index kMaxFullDimension = 64;

/// Exponential moving estimate of the gradient-noise covariance from the
/// deviation of each sample about the updated running mean.
struct KappaEstimator {
  EstimatorMode mode = EstimatorMode::Diagonal;
  double decay = 0.99;
  double epsilon_floor = 1e-8;
  Vector mean;
  Matrix cov;  // diagonal mode keeps only the diagonal
  std::int64_t count = 0;

  static KappaEstimator make(Index dim, EstimatorMode mode = EstimatorMode::Diagonal, double decay = 0.99,
                             double epsilon_floor = 1e-8) {
    require(dim > 0, ErrorCode::DomainError, "estimator dimension must be positive");
    require(decay >= 0.0 && decay < 1.0, ErrorCode::DomainError, "decay must lie in [0,1)");
    require(epsilon_floor > 0.0, ErrorCode::DomainError, "epsilon floor must be positive");
    require(mode == EstimatorMode::Diagonal || dim <= kMaxFullDimension, ErrorCode::DomainError,
            "full-matrix estimation is limited to 64 dimensions");
    return KappaEstimator{mode, decay, epsilon_floor, Vector::Zero(dim), Matrix::Zero(dim, dim), 0};
  }

  Index dim() const { return mean.size(); }

  /// Steps before the metric is used: ceil(1 / (1 - decay)).
  std::int64_t warmup_steps() const { return static_cast<std::int64_t>(std::ceil(1.0 / (1.0 - decay) - 1e-9)); }
  bool warmed_up() const { return count >= warmup_steps(); }

  void update(const Vector& grad) {
    require(grad.size() == dim(), ErrorCode::DimensionMismatch, "gradient sample has the wrong dimension");
    mean = decay * mean + (1.0 - decay) * grad;
    const Vector d = grad - mean;
    if (mode == EstimatorMode::Diagonal) {
      for (Index i = 0; i < dim(); ++i) cov(i, i) = decay * cov(i, i) + (1.0 - decay) * d[i] * d[i];
    } else {
      cov = decay * cov + (1.0 - decay) * (d * d.transpose());
    }
    ++count;
  }

  /// cov + epsilon_floor I.
  Matrix kappa() const { return cov + epsilon_floor * Matrix::Identity(dim(), dim()); }
};

inline KappaEstimator update_kappa(KappaEstimator est, const Vector& grad_sample) {
  est.update(grad_sample);
  return est;
}

namespace detail {

/// Eigen-decomposition of the estimate with eigenvalues clamped to the floor.
inline EigenPair clamped_kappa(const KappaEstimator& est) {
  EigenPair e = jacobi_eigen(est.kappa());
  for (Index k = 0; k < e.eigenvalues.size(); ++k) e.eigenvalues[k] = std::max(e.eigenvalues[k], est.epsilon_floor);
  return e;
}

}  // namespace detail

/// Metric eigenvalues g(kappa_hat): per coordinate in diagonal mode, ascending in full mode.
inline Vector metric_eigenvalues(const KappaEstimator& est, const MetricSpec& spec) {
  const Index k = est.dim();
  Vector out(k);
  if (est.mode == EstimatorMode::Diagonal) {
    for (Index i = 0; i < k; ++i) out[i] = metric_eigenvalue(est.cov(i, i) + est.epsilon_floor, spec);
    return out;
  }
  const EigenPair e = detail::clamped_kappa(est);
  for (Index i = 0; i < k; ++i) out[i] = metric_eigenvalue(e.eigenvalues[i], spec);
  return out;
}

/// q - gamma g(kappa_hat)^-1 grad; plain q - gamma grad for PowerLaw(0) and
/// while the estimator is still warming up.
inline Vector opt_step(const Vector& q, const Vector& grad, const KappaEstimator& est, const MetricSpec& spec,
                       double gamma) {
  require(q.size() == grad.size() && q.size() == est.dim(), ErrorCode::DimensionMismatch,
          "state, gradient and estimator differ in dimension");
  validate(spec);
  if (is_flat(spec) || !est.warmed_up()) return q - gamma * grad;
  if (est.mode == EstimatorMode::Diagonal) {
    Vector next = q;
    for (Index i = 0; i < q.size(); ++i)
      next[i] -= gamma * grad[i] / metric_eigenvalue(est.cov(i, i) + est.epsilon_floor, spec);
    return next;
  }
  const EigenPair e = detail::clamped_kappa(est);
  Vector inv(e.eigenvalues.size());
  for (Index i = 0; i < inv.size(); ++i) inv[i] = 1.0 / metric_eigenvalue(e.eigenvalues[i], spec);
  return q - gamma * (e.basis * inv.asDiagonal() * (e.basis.transpose() * grad));
}

struct EstimatorConfig {
  EstimatorMode mode = EstimatorMode::Diagonal;
  double decay = 0.99;
  double epsilon_floor = 1e-8;
};

struct OptRun {
  LossLandscape land;
  NoiseModel noise;
  MetricSpec spec = PowerLaw{0.0};
  double gamma = 0.01;
  std::int64_t steps = 1000;
  std::uint64_t seed = 0;
  std::int64_t record_every = 1;
  Vector q0;
  EstimatorConfig estimator;
  double target_grad_norm = 0.0;  // stop once |grad U| falls below this (0: run all steps)
};

struct ConvergenceRow {
  std::int64_t step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  Vector metric_eigenvalues;
};

struct ConvergenceRecord {
  std::vector<ConvergenceRow> rows;
  std::optional<std::int64_t> steps_to_target;
  Vector final_state;
};

/// Noisy covariant descent: every step draws grad U(q) + noise, updates the
/// estimator with it, then takes opt_step.
inline ConvergenceRecord run_benchmark(const OptRun& run) {
  const Index k = dimension(run.land);
  require(dimension(run.noise) == k && run.q0.size() == k, ErrorCode::DimensionMismatch,
          "landscape, noise model and start state differ in dimension");
  require(run.gamma > 0.0 && run.steps >= 0 && run.record_every > 0, ErrorCode::DomainError,
          "gamma and record_every must be positive, steps non-negative");
  Rng rng(splitmix64(run.seed));
  KappaEstimator est = KappaEstimator::make(k, run.estimator.mode, run.estimator.decay, run.estimator.epsilon_floor);
  ConvergenceRecord rec;
  Vector q = run.q0;
  auto record = [&](std::int64_t step, double gnorm) {
    rec.rows.push_back({step, potential(run.land, q), gnorm, metric_eigenvalues(est, run.spec)});
  };
  double gnorm = gradient(run.land, q).norm();
  record(0, gnorm);
  for (std::int64_t s = 1; s <= run.steps; ++s) {
    const Vector g = gradient(run.land, q) + sample_noise_gradient(run.noise, q, rng);
    est.update(g);
    q = opt_step(q, g, est, run.spec, run.gamma);
    if (!q.allFinite()) throw Error(ErrorCode::NonFiniteState, "optimizer state became non-finite at step " + std::to_string(s));
    gnorm = gradient(run.land, q).norm();
    const bool hit = run.target_grad_norm > 0.0 && gnorm < run.target_grad_norm;
    if (s % run.record_every == 0 || s == run.steps || hit) record(s, gnorm);
    if (hit) {
      rec.steps_to_target = s;
      break;
    }
  }
  rec.final_state = q;
  return rec;
}

struct GammaSearch {
  double best_gamma = 0.0;
  std::optional<std::int64_t> best_steps;
  std::vector<std::pair<double, std::optional<std::int64_t>>> tried;
};

/// Runs the benchmark for each learning rate and keeps the one that reaches
/// the target in the fewest steps. Diverging runs count as misses.
inline GammaSearch best_fixed_gamma(OptRun run, std::span<const double> gammas) {
  GammaSearch out;
  for (double g : gammas) {
    run.gamma = g;
    std::optional<std::int64_t> steps;
    try {
      steps = run_benchmark(run).steps_to_target;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonFiniteState && e.code() != ErrorCode::DomainError) throw;
    }
    out.tried.emplace_back(g, steps);
    if (steps && (!out.best_steps || *steps < *out.best_steps)) {
      out.best_steps = steps;
      out.best_gamma = g;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Interpolated-metric phase structure

enum class Regime { Flat, Efficient, Natural, Crossover };

inline std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::Flat: return "alpha0";
    case Regime::Efficient: return "alpha_half";
    case Regime::Natural: return "alpha1";
    case Regime::Crossover: return "none";
  }
  return "none";
}

inline constexpr double kRegimeBand = 0.1;

/// Bands [-0.1, 0.1], [0.4, 0.6], [0.9, 1.1].
inline Regime classify_alpha(double a) {
  if (std::abs(a) <= kRegimeBand) return Regime::Flat;
  if (std::abs(a - 0.5) <= kRegimeBand) return Regime::Efficient;
  if (std::abs(a - 1.0) <= kRegimeBand) return Regime::Natural;
  return Regime::Crossover;
}

/// d ln lambda_g / d ln lambda_kappa by a central difference in ln lambda_kappa.
inline double alpha_eff(double lambda_kappa, const MetricSpec& spec, double h = 1e-4) {
  require(lambda_kappa > 0.0, ErrorCode::DomainError, "noise eigenvalue must be positive");
  const double up = metric_eigenvalue(lambda_kappa * std::exp(h), spec);
  const double down = metric_eigenvalue(lambda_kappa * std::exp(-h), spec);
  return (std::log(up) - std::log(down)) / (2.0 * h);
}

/// Closed form for the two-parameter metric: (lambda/2 + zeta^2 lambda^2) / (eps^2 + lambda + zeta^2 lambda^2).
inline double alpha_eff_exact(double lambda_kappa, double epsilon, double zeta) {
  const double z2l2 = zeta * zeta * lambda_kappa * lambda_kappa;
  return (0.5 * lambda_kappa + z2l2) / (epsilon * epsilon + lambda_kappa + z2l2);
}

struct PhasePoint {
  double epsilon = 0.0;
  double zeta = 0.0;
  double lambda_kappa = 0.0;
  double lambda_g = 0.0;
  double alpha = 0.0;
  Regime regime = Regime::Crossover;
};

inline std::vector<PhasePoint> phase_sweep(std::span<const double> epsilons, std::span<const double> zetas,
                                           std::span<const double> kappa_eigenvalues) {
  std::vector<PhasePoint> out;
  out.reserve(epsilons.size() * zetas.size() * kappa_eigenvalues.size());
  for (double e : epsilons)
    for (double z : zetas) {
      require(e > 0.0 && z > 0.0, ErrorCode::DomainError, "epsilon and zeta must be positive");
      const MetricSpec spec = Interp123{e, z};
      for (double l : kappa_eigenvalues) {
        require(l > 0.0, ErrorCode::DomainError, "noise eigenvalues must be positive");
        const double a = alpha_eff(l, spec);
        out.push_back({e, z, l, metric_eigenvalue(l, spec), a, classify_alpha(a)});
      }
    }
  return out;
}

/// n points log-spaced over [lo, hi].
inline std::vector<double> log_grid(double lo, double hi, std::size_t n) {
  require(lo > 0.0 && hi > lo && n >= 2, ErrorCode::DomainError, "log grid needs 0 < lo < hi and n >= 2");
  std::vector<double> out(n);
  const double a = std::log10(lo), b = std::log10(hi);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  return out;
}

struct BandExtent {
  std::size_t points = 0;  // grid points classified as the given regime
  double lo = 0.0, hi = 0.0;
  double decades = 0.0;  // log10(hi / lo), 0 when fewer than two points
};

inline BandExtent band_extent(std::span<const PhasePoint> sweep, Regime regime) {
  BandExtent b;
  for (const auto& p : sweep) {
    if (p.regime != regime) continue;
    if (b.points == 0) b.lo = b.hi = p.lambda_kappa;
    b.lo = std::min(b.lo, p.lambda_kappa);
    b.hi = std::max(b.hi, p.lambda_kappa);
    ++b.points;
  }
  if (b.points > 1) b.decades = std::log10(b.hi / b.lo);
  return b;
}

// ---------------------------------------------------------------------------
// Reparametrisation check

struct ReparamResult {
  double max_deviation = 0.0;  // max over steps of |T^-1 q_tilde - q|_inf
  std::int64_t steps = 0;
};

/// Runs the full-mode optimizer on U(q) and on U(T^-1 q_tilde) from
/// q_tilde_0 = T q0 with the same noise draws (transformed as gradients,
/// T^-T xi). Both estimators first absorb `presamples` gradient draws at the
/// start point so that the metric is in use from the first step.
inline ReparamResult reparametrization_check(const LossLandscape& land, const NoiseModel& noise, const Matrix& t,
                                             const Vector& q0, const MetricSpec& spec, double gamma,
                                             std::int64_t presamples, std::int64_t steps, std::uint64_t seed,
                                             EstimatorConfig cfg = {EstimatorMode::Full, 0.99, 1e-12}) {
  const Index k = q0.size();
  require(t.rows() == k && t.cols() == k && dimension(land) == k && dimension(noise) == k,
          ErrorCode::DimensionMismatch, "transform, landscape and state differ in dimension");
  const Matrix t_inv = t.inverse();
  const Matrix t_inv_t = t_inv.transpose();
  KappaEstimator est = KappaEstimator::make(k, cfg.mode, cfg.decay, cfg.epsilon_floor);
  KappaEstimator est_t = est;
  Rng rng(splitmix64(seed));
  Vector q = q0, qt = t * q0;
  for (std::int64_t s = 0; s < presamples; ++s) {
    const Vector xi = sample_noise_gradient(noise, q, rng);
    est.update(gradient(land, q) + xi);
    est_t.update(t_inv_t * (gradient(land, t_inv * qt) + xi));
  }
  ReparamResult out;
  for (std::int64_t s = 1; s <= steps; ++s) {
    const Vector xi = sample_noise_gradient(noise, q, rng);
    const Vector g = gradient(land, q) + xi;
    const Vector gt = t_inv_t * (gradient(land, t_inv * qt) + xi);
    est.update(g);
    est_t.update(gt);
    q = opt_step(q, g, est, spec, gamma);
    qt = opt_step(qt, gt, est_t, spec, gamma);
    out.max_deviation = std::max(out.max_deviation, (t_inv * qt - q).cwiseAbs().maxCoeff());
    out.steps = s;
  }
  return out;
}

}  // namespace geolearn
