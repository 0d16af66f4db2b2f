#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "geolearn/error.hpp"

namespace geolearn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Eigenvalues in ascending order with the matching orthonormal eigenvectors
/// stored as the columns of `basis`.
struct EigenPair {
  Vector eigenvalues;
  Matrix basis;

  Matrix reconstruct() const {
    return basis * eigenvalues.asDiagonal() * basis.transpose();
  }
};

inline constexpr int kJacobiMaxSweeps = 100;

/// Cyclic Jacobi eigensolver for a symmetric matrix. Throws NonConvergence
/// when the off-diagonal mass has not vanished after `max_sweeps` sweeps.
inline EigenPair jacobi_eigen(const Matrix& input, int max_sweeps = kJacobiMaxSweeps) {
  require(input.rows() == input.cols(), ErrorCode::DimensionMismatch, "eigensolver needs a square matrix");
  const Index n = input.rows();
  Matrix a = input;
  Matrix v = Matrix::Identity(n, n);

  const double frob = a.norm();
  auto off_norm = [&] {
    double s = 0.0;
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  bool converged = false;
  for (int sweep = 0; sweep <= max_sweeps; ++sweep) {
    if (off_norm() <= 1e-15 * frob) {
      converged = true;
      break;
    }
    if (sweep == max_sweeps) break;
    for (Index p = 0; p < n - 1; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (!converged)
    throw Error(ErrorCode::NonConvergence,
                "Jacobi eigensolver did not converge in " + std::to_string(max_sweeps) + " sweeps");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) { return a(i, i) < a(j, j); });

  EigenPair out{Vector(n), Matrix(n, n)};
  for (Index k = 0; k < n; ++k) {
    out.eigenvalues[k] = a(order[k], order[k]);
    out.basis.col(k) = v.col(order[k]);
  }
  return out;
}

namespace detail {

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline Matrix compose(const Matrix& basis, const Vector& values) {
  return symmetrize(basis * values.asDiagonal() * basis.transpose());
}

}  // namespace detail

/// Symmetric positive-definite matrix. Validated on construction; the
/// eigendecomposition is computed once and shared by copies.
class SpdMatrix {
 public:
  explicit SpdMatrix(Matrix m) : m_(std::move(m)) {
    require(m_.rows() == m_.cols() && m_.rows() > 0, ErrorCode::DimensionMismatch,
            "SPD matrix must be square and non-empty");
    require(m_.allFinite(), ErrorCode::NotPositiveDefinite, "matrix has non-finite entries");
    for (Index i = 0; i < m_.rows(); ++i)
      for (Index j = i + 1; j < m_.cols(); ++j)
        require(m_(i, j) == m_(j, i), ErrorCode::NotSymmetric,
                "entry (" + std::to_string(i) + "," + std::to_string(j) + ") differs from its transpose");

    EigenPair e = jacobi_eigen(m_);
    const double largest = e.eigenvalues[e.eigenvalues.size() - 1];
    require(largest > 0.0, ErrorCode::NotPositiveDefinite, "largest eigenvalue is not positive");
    const double tol = 1e-12 * largest;
    require(e.eigenvalues[0] > -tol, ErrorCode::NotPositiveDefinite,
            "smallest eigenvalue " + std::to_string(e.eigenvalues[0]) + " is negative");
    if (e.eigenvalues[0] <= tol) {
      for (Index k = 0; k < e.eigenvalues.size(); ++k) e.eigenvalues[k] = std::max(e.eigenvalues[k], tol);
      m_ = detail::compose(e.basis, e.eigenvalues);
    }
    eig_ = std::make_shared<const EigenPair>(std::move(e));
  }

  static SpdMatrix identity(Index n) {
    return SpdMatrix(Matrix::Identity(n, n), EigenPair{Vector::Ones(n), Matrix::Identity(n, n)});
  }

  static SpdMatrix diagonal(const Vector& d) { return SpdMatrix(Matrix(d.asDiagonal())); }

  /// Builds from a spectrum and orthonormal basis without re-running the
  /// eigensolver. All values must be positive.
  static SpdMatrix from_spectrum(const Matrix& basis, const Vector& values) {
    require(values.size() > 0 && values.minCoeff() > 0.0 && values.allFinite(), ErrorCode::NotPositiveDefinite,
            "spectral map produced a non-positive eigenvalue");
    std::vector<Index> order(static_cast<std::size_t>(values.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) { return values[i] < values[j]; });
    EigenPair e{Vector(values.size()), Matrix(basis.rows(), basis.cols())};
    for (Index k = 0; k < values.size(); ++k) {
      e.eigenvalues[k] = values[order[k]];
      e.basis.col(k) = basis.col(order[k]);
    }
    return SpdMatrix(detail::compose(basis, values), std::move(e));
  }

  Index dim() const { return m_.rows(); }
  const Matrix& matrix() const { return m_; }
  const EigenPair& eigen() const { return *eig_; }
  double operator()(Index i, Index j) const { return m_(i, j); }

 private:
  SpdMatrix(Matrix m, EigenPair e) : m_(std::move(m)), eig_(std::make_shared<const EigenPair>(std::move(e))) {}

  Matrix m_;
  std::shared_ptr<const EigenPair> eig_;
};

inline EigenPair eig_decompose(const SpdMatrix& a) { return a.eigen(); }

/// Applies a scalar function to the spectrum, keeping the eigenbasis.
template <class F>
SpdMatrix spectral_map(const SpdMatrix& a, F&& f) {
  const EigenPair& e = a.eigen();
  Vector mapped(e.eigenvalues.size());
  for (Index k = 0; k < mapped.size(); ++k) mapped[k] = f(e.eigenvalues[k]);
  return SpdMatrix::from_spectrum(e.basis, mapped);
}

inline SpdMatrix matrix_power(const SpdMatrix& a, double alpha) {
  require(std::isfinite(alpha), ErrorCode::DomainError, "matrix power exponent must be finite");
  if (alpha == 0.0) return SpdMatrix::identity(a.dim());
  if (alpha == 1.0) return a;
  if (alpha == 0.5) return spectral_map(a, [](double l) { return std::sqrt(l); });
  return spectral_map(a, [alpha](double l) { return std::pow(l, alpha); });
}

inline SpdMatrix inverse(const SpdMatrix& a) {
  return spectral_map(a, [](double l) { return 1.0 / l; });
}

/// Symmetric square root B of `a`, so that B * B^T == a.
inline Matrix sqrt_factor(const SpdMatrix& a) { return matrix_power(a, 0.5).matrix(); }

// ---------------------------------------------------------------------------
// Metric family g(kappa)

struct PowerLaw {
  double alpha = 1.0;
};
struct Interp12 {
  double epsilon = 1.0;
};
struct Interp123 {
  double epsilon = 1.0;
  double zeta = 1.0;
};

using MetricSpec = std::variant<PowerLaw, Interp12, Interp123>;

inline void validate(const MetricSpec& spec) {
  std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PowerLaw>) {
          require(s.alpha >= 0.0 && s.alpha <= 1.0, ErrorCode::DomainError, "power-law alpha must lie in [0,1]");
        } else if constexpr (std::is_same_v<T, Interp12>) {
          require(s.epsilon > 0.0, ErrorCode::DomainError, "epsilon must be positive");
        } else {
          require(s.epsilon > 0.0 && s.zeta > 0.0, ErrorCode::DomainError, "epsilon and zeta must be positive");
        }
      },
      spec);
}

inline bool is_flat(const MetricSpec& spec) {
  const auto* p = std::get_if<PowerLaw>(&spec);
  return p != nullptr && p->alpha == 0.0;
}

inline std::string describe(const MetricSpec& spec) {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PowerLaw>) return "power_law(alpha=" + std::to_string(s.alpha) + ")";
        else if constexpr (std::is_same_v<T, Interp12>) return "interp12(epsilon=" + std::to_string(s.epsilon) + ")";
        else
          return "interp123(epsilon=" + std::to_string(s.epsilon) + ", zeta=" + std::to_string(s.zeta) + ")";
      },
      spec);
}

namespace detail {

// Accepts lambda_kappa == 0 (semidefinite noise); the public entry point
// below rejects it.
inline double metric_eigenvalue_psd(double lambda_kappa, const MetricSpec& spec) {
  return std::visit(
      [lambda_kappa](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PowerLaw>) {
          if (s.alpha == 0.0) return 1.0;
          if (s.alpha == 1.0) return lambda_kappa;
          if (s.alpha == 0.5) return std::sqrt(lambda_kappa);
          return std::pow(lambda_kappa, s.alpha);
        } else if constexpr (std::is_same_v<T, Interp12>) {
          return std::sqrt(s.epsilon * s.epsilon + lambda_kappa);
        } else {
          return std::sqrt(s.epsilon * s.epsilon + lambda_kappa + s.zeta * s.zeta * lambda_kappa * lambda_kappa);
        }
      },
      spec);
}

}  // namespace detail

inline double metric_eigenvalue(double lambda_kappa, const MetricSpec& spec) {
  require(lambda_kappa > 0.0 && std::isfinite(lambda_kappa), ErrorCode::DomainError,
          "noise eigenvalue must be positive");
  return detail::metric_eigenvalue_psd(lambda_kappa, spec);
}

inline SpdMatrix metric_from_kappa(const SpdMatrix& kappa, const MetricSpec& spec) {
  if (const auto* p = std::get_if<PowerLaw>(&spec)) {
    if (p->alpha == 0.0) return SpdMatrix::identity(kappa.dim());
    if (p->alpha == 1.0) return kappa;
  }
  return spectral_map(kappa, [&spec](double l) { return metric_eigenvalue(l, spec); });
}

// ---------------------------------------------------------------------------
// Geometry consumed by the Langevin and Fokker-Planck layers.

/// Everything the dynamics needs from (kappa, spec) at one point: the metric,
/// its inverse, the diffusion tensor g^-1 kappa g^-1 and sqrt(det g).
struct MetricGeometry {
  Matrix g;
  Matrix g_inv;
  Matrix diffusion;
  double sqrt_det_g = 1.0;
};

/// Accepts a symmetric positive-semidefinite kappa. A singular kappa is only
/// an error when the spec maps a zero noise eigenvalue to a zero metric one.
inline MetricGeometry geometry_from_kappa(const Matrix& kappa, const MetricSpec& spec) {
  const Index n = kappa.rows();
  if (is_flat(spec)) {
    return MetricGeometry{Matrix::Identity(n, n), Matrix::Identity(n, n), kappa, 1.0};
  }
  EigenPair e = jacobi_eigen(kappa);
  const double largest = std::max(e.eigenvalues.maxCoeff(), 0.0);
  const double tol = 1e-12 * largest;
  require(e.eigenvalues.minCoeff() > -tol || largest == 0.0, ErrorCode::NotPositiveDefinite,
          "noise covariance has a negative eigenvalue");
  Vector lg(n), inv(n), diff(n);
  double det_sqrt = 1.0;
  for (Index k = 0; k < n; ++k) {
    const double lk = std::max(e.eigenvalues[k], 0.0);
    const double l = detail::metric_eigenvalue_psd(lk, spec);
    require(l > 0.0 && std::isfinite(l), ErrorCode::DomainError,
            "metric " + describe(spec) + " is singular for a zero noise eigenvalue");
    lg[k] = l;
    inv[k] = 1.0 / l;
    diff[k] = lk / (l * l);
    det_sqrt *= std::sqrt(l);
  }
  return MetricGeometry{detail::compose(e.basis, lg), detail::compose(e.basis, inv), detail::compose(e.basis, diff),
                        det_sqrt};
}

/// Symmetric square root of a positive-semidefinite matrix; tiny negative
/// eigenvalues from round-off are treated as zero.
inline Matrix psd_sqrt(const Matrix& a) {
  const Index n = a.rows();
  if (a.isDiagonal(0.0)) {
    Matrix out = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) out(i, i) = std::sqrt(std::max(a(i, i), 0.0));
    return out;
  }
  EigenPair e = jacobi_eigen(a);
  for (Index k = 0; k < n; ++k) e.eigenvalues[k] = std::sqrt(std::max(e.eigenvalues[k], 0.0));
  return detail::compose(e.basis, e.eigenvalues);
}

}  // namespace geolearn
