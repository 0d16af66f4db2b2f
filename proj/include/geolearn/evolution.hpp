#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "geolearn/error.hpp"
#include "geolearn/landscape.hpp"
#include "geolearn/rng.hpp"
#include "geolearn/spd.hpp"

namespace geolearn {

enum class JumpKind { Isotropic, Full };

/// Zero-mean Gaussian jumps with covariance C. C may be singular (C = 0
/// freezes the chain).
struct JumpModel {
  JumpKind kind = JumpKind::Isotropic;
  Matrix covariance;
  Matrix factor;  // symmetric square root of covariance

  static JumpModel isotropic(Index dim, double sigma) {
    require(dim > 0, ErrorCode::DomainError, "jump dimension must be positive");
    require(sigma >= 0.0 && std::isfinite(sigma), ErrorCode::DomainError, "jump sigma must be non-negative");
    return JumpModel{JumpKind::Isotropic, Matrix::Identity(dim, dim) * (sigma * sigma),
                     Matrix::Identity(dim, dim) * sigma};
  }

  static JumpModel full(const Matrix& c) {
    require(c.rows() == c.cols() && c.rows() > 0, ErrorCode::DimensionMismatch, "jump covariance must be square");
    require(c == c.transpose(), ErrorCode::NotSymmetric, "jump covariance must be symmetric");
    const EigenPair e = jacobi_eigen(c);
    require(e.eigenvalues[0] >= -1e-12 * std::max(1.0, e.eigenvalues.maxCoeff()), ErrorCode::NotPositiveDefinite,
            "jump covariance has a negative eigenvalue");
    return JumpModel{JumpKind::Full, c, psd_sqrt(c)};
  }

  Index dim() const { return covariance.rows(); }

  double max_eigenvalue() const {
    if (kind == JumpKind::Isotropic) return covariance(0, 0);
    return std::max(jacobi_eigen(covariance).eigenvalues.maxCoeff(), 0.0);
  }
};

inline Vector propose_jump(const Vector& q, const JumpModel& jm, Rng& rng) {
  require(q.size() == jm.dim(), ErrorCode::DimensionMismatch, "state and jump model differ in dimension");
  return q + jm.factor * standard_normal(rng, q.size());
}

enum class AcceptanceKind { Sigmoid, Metropolis };

struct AcceptanceRule {
  AcceptanceKind kind = AcceptanceKind::Sigmoid;
  double beta = 1.0;
};

namespace detail {

/// ln P_a as a function of x = beta (h_old - h_new), accurate for any finite x.
inline double log_acceptance(double x, AcceptanceKind kind) {
  if (kind == AcceptanceKind::Metropolis) return std::min(0.0, x);
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

}  // namespace detail

/// Sigmoid: 1 / (1 + exp(-beta (h_old - h_new))); Metropolis: min(1, exp(beta (h_old - h_new))).
inline double acceptance_probability(double h_old, double h_new, const AcceptanceRule& rule) {
  require(std::isfinite(h_old) && std::isfinite(h_new), ErrorCode::DomainError, "acceptance needs finite H values");
  const double x = rule.beta * (h_old - h_new);
  if (rule.kind == AcceptanceKind::Metropolis) {
    if (x >= 0.0) return 1.0;
    return x < -745.0 ? 0.0 : std::exp(x);
  }
  if (x < -745.0) return 0.0;
  return 1.0 / (1.0 + std::exp(-x));
}

/// [P_a(q' <- q) / P_a(q <- q')] / [P_e(q') / P_e(q)] with P_e = exp(-beta H).
/// Evaluated in log space so saturated acceptances do not lose the ratio.
inline double detailed_balance_ratio(const Vector& q, const Vector& q_prime, const LossLandscape& land,
                                     const AcceptanceRule& rule) {
  const double dh = base_potential(land, q) - base_potential(land, q_prime);
  require(std::isfinite(dh), ErrorCode::DomainError, "H is not finite at the given states");
  const double x = rule.beta * dh;
  const double fwd = detail::log_acceptance(x, rule.kind);
  const double bwd = detail::log_acceptance(-x, rule.kind);
  require(std::isfinite(fwd) || std::isfinite(bwd), ErrorCode::DegenerateRatio,
          "acceptance vanishes in both directions");
  return std::exp((fwd - bwd) - x);
}

struct ChainRecord {
  Index dim = 1;
  std::vector<double> samples;  // state after each proposal, row-major (steps x dim)
  std::vector<std::uint8_t> accepted;
  std::size_t burn_in = 0;  // leading rows discarded by the statistics helpers

  std::size_t steps() const { return accepted.size(); }
  double sample(std::size_t step, Index axis) const {
    return samples[step * static_cast<std::size_t>(dim) + static_cast<std::size_t>(axis)];
  }
  std::vector<double> coordinate(Index axis = 0, bool after_burn_in = true) const {
    std::vector<double> xs;
    for (std::size_t s = after_burn_in ? burn_in : 0; s < steps(); ++s) xs.push_back(sample(s, axis));
    return xs;
  }
  double acceptance_rate() const {
    if (accepted.empty()) return 0.0;
    std::size_t n = 0;
    for (auto a : accepted) n += a;
    return static_cast<double>(n) / static_cast<double>(accepted.size());
  }
};

/// Proposal-acceptance chain. One uniform draw per step decides acceptance;
/// only the H difference enters, so a constant offset in H cannot change any
/// decision.
inline ChainRecord evolve_chain(const Vector& q0, const LossLandscape& land, const JumpModel& jm,
                                const AcceptanceRule& rule, std::size_t steps, Rng& rng, double burn_in_fraction = 0.1) {
  check_dim(land, q0);
  require(q0.size() == jm.dim(), ErrorCode::DimensionMismatch, "state and jump model differ in dimension");
  require(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0, ErrorCode::DomainError,
          "burn-in fraction must lie in [0,1)");
  require(rule.beta >= 0.0, ErrorCode::DomainError, "beta must be non-negative");
  require_finite(q0, "chain start");
  ChainRecord rec;
  rec.dim = q0.size();
  rec.samples.reserve(steps * static_cast<std::size_t>(rec.dim));
  rec.accepted.reserve(steps);
  rec.burn_in = static_cast<std::size_t>(burn_in_fraction * static_cast<double>(steps));
  Vector q = q0;
  double h = base_potential(land, q);
  for (std::size_t s = 0; s < steps; ++s) {
    const Vector proposal = propose_jump(q, jm, rng);
    const double h_new = base_potential(land, proposal);
    const double u = uniform01(rng);
    const bool accept = u < acceptance_probability(h, h_new, rule);
    if (accept) {
      q = proposal;
      h = h_new;
    }
    rec.accepted.push_back(accept ? 1 : 0);
    for (Index i = 0; i < rec.dim; ++i) rec.samples.push_back(q[i]);
  }
  return rec;
}

/// Mean-trait drift -(beta/4) C grad H.
inline Vector lande_rhs(const Vector& q_mean, const JumpModel& jm, const LossLandscape& land, double beta) {
  require(q_mean.size() == jm.dim(), ErrorCode::DimensionMismatch, "state and jump model differ in dimension");
  return -(beta / 4.0) * (jm.covariance * gradient(land, q_mean));
}

struct LandeSnapshot {
  std::size_t step = 0;
  Vector ode_mean;
  Vector chain_mean;
  Vector standard_error;
  double max_z = 0.0;  // max over components of |chain - ode| / standard error
};

struct LandeComparison {
  std::vector<LandeSnapshot> snapshots;
  double max_z = 0.0;
  double max_abs_deviation = 0.0;
  double expansion_parameter = 0.0;  // max over the ODE path of beta sqrt(lambda_max C) |grad H|
  std::vector<std::string> warnings;
};

struct LandeConfig {
  std::size_t horizon = 400;
  std::size_t snapshots = 20;
  std::size_t ensemble_size = 10000;
  std::uint64_t seed = 0;
  int rk4_substeps = 8;
  unsigned threads = 0;
  double expansion_limit = 0.3;
};

/// Integrates the Lande ODE (one proposal = one time unit) and the ensemble
/// mean of independent chains started at q0, compared at evenly spaced steps.
inline LandeComparison lande_vs_chain(const Vector& q0, const LossLandscape& land, const JumpModel& jm,
                                      const AcceptanceRule& rule, const LandeConfig& cfg) {
  check_dim(land, q0);
  require(cfg.snapshots > 0 && cfg.horizon >= cfg.snapshots, ErrorCode::DomainError,
          "need 1 <= snapshots <= horizon");
  require(cfg.ensemble_size > 1, ErrorCode::EmptyEnsemble, "Lande comparison needs at least two chains");
  require(cfg.rk4_substeps > 0, ErrorCode::DomainError, "rk4_substeps must be positive");
  const Index k = q0.size();
  const double beta = rule.beta;
  const double jump_scale = std::sqrt(jm.max_eigenvalue());

  std::vector<std::size_t> marks;
  for (std::size_t i = 1; i <= cfg.snapshots; ++i) marks.push_back(i * cfg.horizon / cfg.snapshots);

  LandeComparison out;
  // ODE
  std::vector<Vector> ode;
  {
    Vector q = q0;
    const double h = 1.0 / cfg.rk4_substeps;
    std::size_t next = 0;
    out.expansion_parameter = beta * jump_scale * gradient(land, q).norm();
    for (std::size_t step = 1; step <= cfg.horizon; ++step) {
      for (int s = 0; s < cfg.rk4_substeps; ++s) {
        const Vector k1 = lande_rhs(q, jm, land, beta);
        const Vector k2 = lande_rhs(q + 0.5 * h * k1, jm, land, beta);
        const Vector k3 = lande_rhs(q + 0.5 * h * k2, jm, land, beta);
        const Vector k4 = lande_rhs(q + h * k3, jm, land, beta);
        q += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
      out.expansion_parameter = std::max(out.expansion_parameter, beta * jump_scale * gradient(land, q).norm());
      if (next < marks.size() && marks[next] == step) {
        ode.push_back(q);
        ++next;
      }
    }
  }
  if (out.expansion_parameter >= cfg.expansion_limit)
    out.warnings.push_back("ExpansionRegimeViolated: beta*sqrt(lambda_max(C))*|grad H| reaches " +
                           std::to_string(out.expansion_parameter) + " >= " + std::to_string(cfg.expansion_limit));
  if (rule.kind != AcceptanceKind::Sigmoid)
    out.warnings.push_back("the Lande limit is derived for sigmoid acceptance");

  // Chains: per-member running state, summed per snapshot in member order.
  const std::size_t members = cfg.ensemble_size;
  std::vector<Vector> at(marks.size() * members);
  auto run_member = [&](std::size_t m) {
    Rng rng = member_rng(cfg.seed, m);
    Vector q = q0;
    double h = base_potential(land, q);
    std::size_t next = 0;
    for (std::size_t step = 1; step <= cfg.horizon; ++step) {
      const Vector proposal = propose_jump(q, jm, rng);
      const double h_new = base_potential(land, proposal);
      if (uniform01(rng) < acceptance_probability(h, h_new, rule)) {
        q = proposal;
        h = h_new;
      }
      if (next < marks.size() && marks[next] == step) at[next++ * members + m] = q;
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

  const double n = static_cast<double>(members);
  for (std::size_t s = 0; s < marks.size(); ++s) {
    Vector mean = Vector::Zero(k), m2 = Vector::Zero(k);
    for (std::size_t m = 0; m < members; ++m) mean += at[s * members + m];
    mean /= n;
    for (std::size_t m = 0; m < members; ++m) m2 += (at[s * members + m] - mean).cwiseAbs2();
    const Vector se = (m2 / (n - 1.0) / n).cwiseSqrt();
    LandeSnapshot snap{marks[s], ode[s], mean, se, 0.0};
    for (Index i = 0; i < k; ++i) {
      const double dev = std::abs(mean[i] - ode[s][i]);
      out.max_abs_deviation = std::max(out.max_abs_deviation, dev);
      snap.max_z = std::max(snap.max_z, se[i] > 0.0 ? dev / se[i] : (dev > 0.0 ? INFINITY : 0.0));
    }
    out.max_z = std::max(out.max_z, snap.max_z);
    out.snapshots.push_back(std::move(snap));
  }
  return out;
}

}  // namespace geolearn
