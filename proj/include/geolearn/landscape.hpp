#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <variant>

#include "geolearn/error.hpp"
#include "geolearn/rng.hpp"
#include "geolearn/spd.hpp"

namespace geolearn {

// A point in trainable space is a plain Eigen vector; helpers below enforce
// the finiteness invariant where it matters.
using TrainableState = Vector;

inline void require_finite(const Vector& q, const std::string& context) {
  require(q.allFinite(), ErrorCode::NonFiniteState, context + ": state has a non-finite coordinate");
}

// ---------------------------------------------------------------------------
// Mean loss U(q)

/// U(q) = 1/2 (q - c)^T H (q - c)
struct Quadratic {
  SpdMatrix hessian;
  Vector center;
};

/// U(q) = barrier * ((q / spacing)^2 - 1)^2, minima at q = +-spacing. 1D.
struct DoubleWell {
  double barrier = 1.0;
  double spacing = 1.0;
};

/// U(x, y) = (a - x)^2 + b (y - x^2)^2. 2D.
struct Rosenbrock {
  double a = 1.0;
  double b = 100.0;
};

/// U(q) = value everywhere.
struct Constant {
  Index dim = 1;
  double value = 0.0;
};

struct LossLandscape {
  std::variant<Quadratic, DoubleWell, Rosenbrock, Constant> kind;
  double offset = 0.0;  // added to U; gradients are unaffected
};

inline LossLandscape quadratic(SpdMatrix hessian, Vector center) {
  require(hessian.dim() == center.size(), ErrorCode::DimensionMismatch, "quadratic centre and Hessian differ in size");
  return LossLandscape{Quadratic{std::move(hessian), std::move(center)}};
}
inline LossLandscape quadratic_1d(double k, double center = 0.0) {
  return quadratic(SpdMatrix(Matrix::Constant(1, 1, k)), Vector::Constant(1, center));
}
inline LossLandscape double_well(double barrier, double spacing) {
  require(spacing > 0.0, ErrorCode::DomainError, "double-well spacing must be positive");
  return LossLandscape{DoubleWell{barrier, spacing}};
}
inline LossLandscape rosenbrock(double a = 1.0, double b = 100.0) { return LossLandscape{Rosenbrock{a, b}}; }
inline LossLandscape constant_landscape(Index dim, double value = 0.0) { return LossLandscape{Constant{dim, value}}; }

inline Index dimension(const LossLandscape& land) {
  return std::visit(
      [](const auto& k) -> Index {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, Quadratic>) return k.hessian.dim();
        else if constexpr (std::is_same_v<T, DoubleWell>) return 1;
        else if constexpr (std::is_same_v<T, Rosenbrock>) return 2;
        else return k.dim;
      },
      land.kind);
}

inline void check_dim(const LossLandscape& land, const Vector& q) {
  require(q.size() == dimension(land), ErrorCode::DimensionMismatch,
          "state has dimension " + std::to_string(q.size()) + ", landscape expects " +
              std::to_string(dimension(land)));
}

/// U(q) without the constant offset.
inline double base_potential(const LossLandscape& land, const Vector& q) {
  check_dim(land, q);
  return std::visit(
      [&q](const auto& k) -> double {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, Quadratic>) {
          const Vector d = q - k.center;
          return 0.5 * d.dot(k.hessian.matrix() * d);
        } else if constexpr (std::is_same_v<T, DoubleWell>) {
          const double x = q[0] / k.spacing;
          const double w = x * x - 1.0;
          return k.barrier * w * w;
        } else if constexpr (std::is_same_v<T, Rosenbrock>) {
          const double x = q[0], y = q[1];
          return (k.a - x) * (k.a - x) + k.b * (y - x * x) * (y - x * x);
        } else {
          return k.value;
        }
      },
      land.kind);
}

inline double potential(const LossLandscape& land, const Vector& q) { return base_potential(land, q) + land.offset; }

inline Vector gradient(const LossLandscape& land, const Vector& q) {
  check_dim(land, q);
  return std::visit(
      [&q](const auto& k) -> Vector {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, Quadratic>) {
          return k.hessian.matrix() * (q - k.center);
        } else if constexpr (std::is_same_v<T, DoubleWell>) {
          const double x = q[0] / k.spacing;
          return Vector::Constant(1, 4.0 * k.barrier * x * (x * x - 1.0) / k.spacing);
        } else if constexpr (std::is_same_v<T, Rosenbrock>) {
          const double x = q[0], y = q[1];
          Vector g(2);
          g[0] = -2.0 * (k.a - x) - 4.0 * k.b * x * (y - x * x);
          g[1] = 2.0 * k.b * (y - x * x);
          return g;
        } else {
          return Vector::Zero(k.dim);
        }
      },
      land.kind);
}

/// dU/dq for one-dimensional landscapes without allocating.
inline double gradient_1d(const LossLandscape& land, double x) {
  return std::visit(
      [x](const auto& k) -> double {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, Quadratic>) {
          require(k.hessian.dim() == 1, ErrorCode::DimensionMismatch, "gradient_1d needs a 1D landscape");
          return k.hessian(0, 0) * (x - k.center[0]);
        } else if constexpr (std::is_same_v<T, DoubleWell>) {
          const double u = x / k.spacing;
          return 4.0 * k.barrier * u * (u * u - 1.0) / k.spacing;
        } else if constexpr (std::is_same_v<T, Rosenbrock>) {
          throw Error(ErrorCode::DimensionMismatch, "gradient_1d needs a 1D landscape");
        } else {
          require(k.dim == 1, ErrorCode::DimensionMismatch, "gradient_1d needs a 1D landscape");
          return 0.0;
        }
      },
      land.kind);
}

/// Largest curvature of U, when it is known in closed form (quadratics).
inline double max_curvature(const LossLandscape& land) {
  if (const auto* quad = std::get_if<Quadratic>(&land.kind)) {
    const auto& ev = quad->hessian.eigen().eigenvalues;
    return ev[ev.size() - 1];
  }
  if (std::holds_alternative<Constant>(land.kind)) return 0.0;
  return std::numeric_limits<double>::quiet_NaN();
}

/// Max over components of |analytic - central difference| / (|analytic| + 1e-12).
inline double fd_check(const LossLandscape& land, const Vector& q, double h) {
  require(h > 0.0, ErrorCode::DomainError, "finite-difference step must be positive");
  const Vector g = gradient(land, q);
  double worst = 0.0;
  for (Index i = 0; i < q.size(); ++i) {
    Vector plus = q, minus = q;
    plus[i] += h;
    minus[i] -= h;
    const double fd = (potential(land, plus) - potential(land, minus)) / (2.0 * h);
    worst = std::max(worst, std::abs(g[i] - fd) / (std::abs(g[i]) + 1e-12));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Noise models: statistics of the gradient of the fluctuating loss component.

struct IsotropicWhite {
  Index dim = 1;
  double sigma = 1.0;
};

struct DiagonalWhite {
  Vector sigmas;
};

struct FullCovariance {
  SpdMatrix kappa;
  Matrix factor;  // symmetric square root of kappa
};

enum class DiagonalMap {
  Quadratic,    // kappa_ii = base_i + slope_i * (q_i - center_i)^2
  Exponential,  // kappa_ii = base_i * exp(slope_i * (q_i - center_i))
};

inline std::string_view to_string(DiagonalMap m) {
  return m == DiagonalMap::Quadratic ? "quadratic" : "exponential";
}

struct StateDependentDiagonal {
  DiagonalMap map = DiagonalMap::Quadratic;
  Vector base;
  Vector slope;
  Vector center;
  double domain_lo = -10.0;
  double domain_hi = 10.0;
};

using NoiseModel = std::variant<IsotropicWhite, DiagonalWhite, FullCovariance, StateDependentDiagonal>;

inline NoiseModel isotropic_noise(Index dim, double sigma) {
  require(sigma >= 0.0, ErrorCode::DomainError, "noise sigma must be non-negative");
  return IsotropicWhite{dim, sigma};
}
inline NoiseModel diagonal_noise(Vector sigmas) {
  require(sigmas.minCoeff() >= 0.0, ErrorCode::DomainError, "noise sigmas must be non-negative");
  return DiagonalWhite{std::move(sigmas)};
}
inline NoiseModel full_noise(SpdMatrix kappa) {
  Matrix factor = sqrt_factor(kappa);
  return FullCovariance{std::move(kappa), std::move(factor)};
}
inline NoiseModel state_dependent_noise(DiagonalMap map, Vector base, Vector slope, Vector center,
                                        double domain_lo = -10.0, double domain_hi = 10.0) {
  require(base.size() == slope.size() && base.size() == center.size(), ErrorCode::DimensionMismatch,
          "state-dependent noise parameters differ in length");
  require(base.minCoeff() > 0.0, ErrorCode::DomainError, "state-dependent noise base must be positive");
  require(map != DiagonalMap::Quadratic || slope.minCoeff() >= 0.0, ErrorCode::DomainError,
          "quadratic noise slope must be non-negative");
  require(domain_lo < domain_hi, ErrorCode::DomainError, "noise domain box is empty");
  return StateDependentDiagonal{map, std::move(base), std::move(slope), std::move(center), domain_lo, domain_hi};
}

inline Index dimension(const NoiseModel& noise) {
  return std::visit(
      [](const auto& n) -> Index {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, IsotropicWhite>) return n.dim;
        else if constexpr (std::is_same_v<T, DiagonalWhite>) return n.sigmas.size();
        else if constexpr (std::is_same_v<T, FullCovariance>) return n.kappa.dim();
        else return n.base.size();
      },
      noise);
}

inline bool is_state_dependent(const NoiseModel& noise) {
  return std::holds_alternative<StateDependentDiagonal>(noise);
}

namespace detail {

inline Vector state_dependent_variances(const StateDependentDiagonal& n, const Vector& q) {
  require(q.size() == n.base.size(), ErrorCode::DimensionMismatch, "state and noise model differ in dimension");
  for (Index i = 0; i < q.size(); ++i)
    require(q[i] >= n.domain_lo && q[i] <= n.domain_hi, ErrorCode::DomainError,
            "coordinate " + std::to_string(i) + " = " + std::to_string(q[i]) + " is outside the noise domain box");
  Vector v(q.size());
  for (Index i = 0; i < q.size(); ++i) {
    const double d = q[i] - n.center[i];
    v[i] = n.map == DiagonalMap::Quadratic ? n.base[i] + n.slope[i] * d * d : n.base[i] * std::exp(n.slope[i] * d);
  }
  return v;
}

}  // namespace detail

/// Noise covariance at q as a plain symmetric matrix. May be singular (for
/// example sigma = 0); use kappa_at for the validated SPD form.
inline Matrix noise_covariance(const NoiseModel& noise, const Vector& q) {
  return std::visit(
      [&q](const auto& n) -> Matrix {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, IsotropicWhite>) {
          return Matrix::Identity(n.dim, n.dim) * (n.sigma * n.sigma);
        } else if constexpr (std::is_same_v<T, DiagonalWhite>) {
          return Matrix(n.sigmas.cwiseProduct(n.sigmas).asDiagonal());
        } else if constexpr (std::is_same_v<T, FullCovariance>) {
          return n.kappa.matrix();
        } else {
          return Matrix(detail::state_dependent_variances(n, q).asDiagonal());
        }
      },
      noise);
}

inline SpdMatrix kappa_at(const NoiseModel& noise, const Vector& q) {
  if (const auto* full = std::get_if<FullCovariance>(&noise)) return full->kappa;
  return SpdMatrix(noise_covariance(noise, q));
}

/// One draw of the noise gradient: zero mean, covariance kappa(q). Always
/// consumes exactly dim(noise) normal variates from `rng`.
inline Vector sample_noise_gradient(const NoiseModel& noise, const Vector& q, Rng& rng) {
  const Index k = dimension(noise);
  const Vector z = standard_normal(rng, k);
  return std::visit(
      [&](const auto& n) -> Vector {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, IsotropicWhite>) {
          return n.sigma * z;
        } else if constexpr (std::is_same_v<T, DiagonalWhite>) {
          return n.sigmas.cwiseProduct(z);
        } else if constexpr (std::is_same_v<T, FullCovariance>) {
          return n.factor * z;
        } else {
          return detail::state_dependent_variances(n, q).cwiseSqrt().cwiseProduct(z);
        }
      },
      noise);
}

}  // namespace geolearn
