#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "geolearn/error.hpp"

namespace geolearn {

/// Thomas algorithm. Row i reads lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1];
/// lower[0] and upper[n-1] are ignored.
template <class T>
std::vector<T> solve_tridiagonal(std::span<const T> lower, std::span<const T> diag, std::span<const T> upper,
                                 std::span<const T> rhs) {
  const std::size_t n = diag.size();
  require(n > 0 && lower.size() == n && upper.size() == n && rhs.size() == n, ErrorCode::DimensionMismatch,
          "tridiagonal system bands differ in length");
  std::vector<T> c(n), x(n);
  T denom = diag[0];
  require(denom != T(0), ErrorCode::DomainError, "zero pivot in tridiagonal solve");
  c[0] = n > 1 ? upper[0] / denom : T(0);
  x[0] = rhs[0] / denom;
  for (std::size_t i = 1; i < n; ++i) {
    denom = diag[i] - lower[i] * c[i - 1];
    require(denom != T(0), ErrorCode::DomainError, "zero pivot in tridiagonal solve");
    c[i] = i + 1 < n ? upper[i] / denom : T(0);
    x[i] = (rhs[i] - lower[i] * x[i - 1]) / denom;
  }
  for (std::size_t i = n - 1; i-- > 0;) x[i] -= c[i] * x[i + 1];
  return x;
}

/// Periodic variant: lower[0] couples row 0 to x[n-1] and upper[n-1] couples
/// row n-1 to x[0]. Solved by Sherman-Morrison on top of the Thomas sweep.
template <class T>
std::vector<T> solve_cyclic_tridiagonal(std::span<const T> lower, std::span<const T> diag, std::span<const T> upper,
                                        std::span<const T> rhs) {
  const std::size_t n = diag.size();
  require(n >= 3, ErrorCode::DimensionMismatch, "cyclic tridiagonal solve needs at least 3 unknowns");
  const T corner_top = lower[0];       // A[0][n-1]
  const T corner_bottom = upper[n - 1];  // A[n-1][0]
  const T gamma = -diag[0];
  std::vector<T> d(diag.begin(), diag.end());
  d[0] -= gamma;
  d[n - 1] -= corner_bottom * corner_top / gamma;
  const std::vector<T> x = solve_tridiagonal<T>(lower, d, upper, rhs);
  std::vector<T> u(n, T(0));
  u[0] = gamma;
  u[n - 1] = corner_bottom;
  const std::vector<T> z = solve_tridiagonal<T>(lower, d, upper, u);
  const T fact = (x[0] + corner_top * x[n - 1] / gamma) / (T(1) + z[0] + corner_top * z[n - 1] / gamma);
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - fact * z[i];
  return out;
}

}  // namespace geolearn
