#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "geolearn/error.hpp"
#include "geolearn/grid.hpp"

namespace geolearn {

struct SampleMoments {
  double mean = 0.0;
  double variance = 0.0;  // unbiased
  double standard_error = 0.0;
  std::size_t count = 0;
};

inline SampleMoments moments(std::span<const double> xs) {
  require(!xs.empty(), ErrorCode::EmptyData, "no samples");
  // Welford; stable for the 1e6-sample chains
  double mean = 0.0, m2 = 0.0;
  std::size_t k = 0;
  for (double x : xs) {
    ++k;
    const double d = x - mean;
    mean += d / static_cast<double>(k);
    m2 += d * (x - mean);
  }
  const double var = k > 1 ? m2 / static_cast<double>(k - 1) : 0.0;
  return {mean, var, std::sqrt(var / static_cast<double>(k)), k};
}

inline double normal_cdf(double x, double mean, double variance) {
  return 0.5 * std::erfc(-(x - mean) / std::sqrt(2.0 * variance));
}

/// Kolmogorov-Smirnov statistic sup |F_n - F| of a sample against a CDF.
inline double ks_distance(std::vector<double> samples, const std::function<double(double)>& cdf) {
  require(!samples.empty(), ErrorCode::EmptyData, "KS distance needs samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max({d, std::abs(static_cast<double>(i + 1) / n - f), std::abs(f - static_cast<double>(i) / n)});
  }
  return d;
}

/// CDF of a 1D grid density, exact for a piecewise-constant density
/// (linear inside each cell), normalised by the total mass.
inline std::function<double(double)> grid_cdf(const GridDensity& p) {
  require(p.grid.dims == 1, ErrorCode::DomainError, "grid CDF is defined for 1D grids");
  std::vector<double> edges(static_cast<std::size_t>(p.size()) + 1, 0.0);
  for (Index i = 0; i < p.size(); ++i)
    edges[static_cast<std::size_t>(i) + 1] = edges[static_cast<std::size_t>(i)] + p[i] * p.cell_volume(i);
  const double total = edges.back();
  require(total > 0.0, ErrorCode::EmptyData, "grid density has zero mass");
  for (double& e : edges) e /= total;
  const double lo = p.grid.lo[0];
  const double dx = p.grid.spacing(0);
  const Index n = p.size();
  return [edges = std::move(edges), lo, dx, n](double x) {
    const double t = (x - lo) / dx;
    if (t <= 0.0) return 0.0;
    if (t >= static_cast<double>(n)) return 1.0;
    const auto i = static_cast<std::size_t>(t);
    const double frac = t - static_cast<double>(i);
    return edges[i] + frac * (edges[i + 1] - edges[i]);
  };
}

}  // namespace geolearn
