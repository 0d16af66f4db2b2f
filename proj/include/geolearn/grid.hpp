#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "geolearn/error.hpp"
#include "geolearn/spd.hpp"

namespace geolearn {

/// Regular cell-centred grid in one or two dimensions. Cell (i, j) has flat
/// index i + n[0] * j.
struct GridSpec {
  int dims = 1;
  std::array<double, 2> lo{0.0, 0.0};
  std::array<double, 2> hi{1.0, 1.0};
  std::array<Index, 2> n{8, 1};

  static GridSpec line(double lo, double hi, Index n) {
    GridSpec g;
    g.dims = 1;
    g.lo = {lo, 0.0};
    g.hi = {hi, 1.0};
    g.n = {n, 1};
    g.validate();
    return g;
  }

  static GridSpec plane(double lo0, double hi0, Index n0, double lo1, double hi1, Index n1) {
    GridSpec g;
    g.dims = 2;
    g.lo = {lo0, lo1};
    g.hi = {hi0, hi1};
    g.n = {n0, n1};
    g.validate();
    return g;
  }

  void validate() const {
    require(dims == 1 || dims == 2, ErrorCode::DomainError, "grids are 1D or 2D");
    for (int a = 0; a < dims; ++a) {
      require(lo[a] < hi[a], ErrorCode::DomainError, "grid axis " + std::to_string(a) + " has lo >= hi");
      require(n[a] >= 8, ErrorCode::DomainError, "grid axis " + std::to_string(a) + " needs at least 8 cells");
    }
  }

  Index cells() const { return dims == 1 ? n[0] : n[0] * n[1]; }
  double spacing(int axis) const { return (hi[axis] - lo[axis]) / static_cast<double>(n[axis]); }
  double cell_volume() const { return dims == 1 ? spacing(0) : spacing(0) * spacing(1); }
  double coordinate(int axis, Index i) const { return lo[axis] + (static_cast<double>(i) + 0.5) * spacing(axis); }

  Vector center(Index cell) const {
    if (dims == 1) return Vector::Constant(1, coordinate(0, cell));
    Vector c(2);
    c << coordinate(0, cell % n[0]), coordinate(1, cell / n[0]);
    return c;
  }

  bool operator==(const GridSpec& o) const {
    if (dims != o.dims) return false;
    for (int a = 0; a < dims; ++a)
      if (lo[a] != o.lo[a] || hi[a] != o.hi[a] || n[a] != o.n[a]) return false;
    return true;
  }
  bool operator!=(const GridSpec& o) const { return !(*this == o); }

  /// Cell containing q, or -1 when q lies outside the grid.
  Index locate(const Vector& q) const {
    Index flat = 0, stride = 1;
    for (int a = 0; a < dims; ++a) {
      const double t = (q[a] - lo[a]) / spacing(a);
      if (!(t >= 0.0) || t >= static_cast<double>(n[a])) return -1;
      flat += static_cast<Index>(t) * stride;
      stride *= n[a];
    }
    return flat;
  }
};

/// Probability density on a grid. `weights` holds sqrt(det g) per cell so
/// that the volume of cell i is weights[i] * grid.cell_volume(); an empty
/// weight vector means flat space.
struct GridDensity {
  GridSpec grid;
  std::vector<double> values;
  std::vector<double> weights;

  double weight(Index i) const { return weights.empty() ? 1.0 : weights[static_cast<std::size_t>(i)]; }
  double cell_volume(Index i) const { return weight(i) * grid.cell_volume(); }
  Index size() const { return static_cast<Index>(values.size()); }
  double operator[](Index i) const { return values[static_cast<std::size_t>(i)]; }
};

struct ScalarField {
  GridSpec grid;
  std::vector<double> values;

  double operator[](Index i) const { return values[static_cast<std::size_t>(i)]; }
  Index size() const { return static_cast<Index>(values.size()); }
};

inline ScalarField sample_field(const GridSpec& grid, const std::function<double(const Vector&)>& f) {
  ScalarField out{grid, std::vector<double>(static_cast<std::size_t>(grid.cells()))};
  for (Index i = 0; i < grid.cells(); ++i) out.values[static_cast<std::size_t>(i)] = f(grid.center(i));
  return out;
}

inline double total_mass(const GridDensity& p) {
  double m = 0.0;
  for (Index i = 0; i < p.size(); ++i) m += p[i] * p.cell_volume(i);
  return m;
}

inline GridDensity normalized(GridDensity p) {
  const double m = total_mass(p);
  require(m > 0.0 && std::isfinite(m), ErrorCode::DomainError, "cannot normalise a density with zero mass");
  for (double& v : p.values) v /= m;
  return p;
}

/// Density from a (not necessarily normalised) function sampled at cell centres.
inline GridDensity density_from(const GridSpec& grid, const std::function<double(const Vector&)>& f,
                                std::vector<double> weights = {}) {
  GridDensity p{grid, std::vector<double>(static_cast<std::size_t>(grid.cells())), std::move(weights)};
  for (Index i = 0; i < grid.cells(); ++i) p.values[static_cast<std::size_t>(i)] = f(grid.center(i));
  return normalized(std::move(p));
}

inline GridDensity uniform_density(const GridSpec& grid, std::vector<double> weights = {}) {
  return density_from(grid, [](const Vector&) { return 1.0; }, std::move(weights));
}

/// Differential entropy -sum P ln P dV, with 0 ln 0 = 0.
inline double shannon_entropy(const GridDensity& p) {
  double s = 0.0;
  for (Index i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) s -= p[i] * std::log(p[i]) * p.cell_volume(i);
  return s;
}

inline double l1_distance(const GridDensity& a, const GridDensity& b) {
  require(a.grid == b.grid && a.values.size() == b.values.size(), ErrorCode::GridMismatch,
          "densities live on different grids");
  double d = 0.0;
  for (Index i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]) * a.cell_volume(i);
  return d;
}

/// Mean and variance along one axis, weighting by cell volume.
inline std::pair<double, double> axis_moments(const GridDensity& p, int axis = 0) {
  double m0 = 0.0, m1 = 0.0, m2 = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    const double x = p.grid.center(i)[axis];
    const double w = p[i] * p.cell_volume(i);
    m0 += w;
    m1 += w * x;
    m2 += w * x * x;
  }
  const double mean = m1 / m0;
  return {mean, m2 / m0 - mean * mean};
}

}  // namespace geolearn
