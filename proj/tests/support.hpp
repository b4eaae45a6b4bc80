#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "seqsprt/density.hpp"
#include "seqsprt/random.hpp"
#include "seqsprt/synth.hpp"

namespace seqsprt::test {

/// Analytic Gaussian densities tabulated on a uniform grid wide enough for
/// both classes (8 sigma either side).
inline DensityPair gaussian_pair(double mu1, double s1, double mu0, double s0, std::size_t n = 2048)
{
  const double lo = std::min(mu1 - 8.0 * s1, mu0 - 8.0 * s0);
  const double hi = std::max(mu1 + 8.0 * s1, mu0 + 8.0 * s0);
  std::vector<double> grid(n), lf1(n), lf0(n);
  const auto logn = [](double x, double mu, double s) {
    const double z = (x - mu) / s;
    return -0.5 * z * z - std::log(s * std::sqrt(2.0 * std::numbers::pi));
  };
  for (std::size_t i = 0; i < n; ++i) {
    grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    lf1[i] = logn(grid[i], mu1, s1);
    lf0[i] = logn(grid[i], mu0, s0);
  }
  return DensityPair(std::move(grid), std::move(lf1), std::move(lf0), s1, s0, 1e-300);
}

/// |N(mu, s)| draws labelled with one hypothesis.
inline void append_gaussian(std::vector<DistanceSample>& out, Hypothesis h, double mu, double s, std::size_t n, std::mt19937_64& rng)
{
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({std::abs(mu + s * standard_normal(rng)), h});
}

/// A compact world: four aisles in two structural classes, a short plan.
inline WorldConfig small_world_config(std::uint64_t seed)
{
  WorldConfig c;
  c.n_aisles = 4;
  c.aisle_length = 10.0;
  c.alias_classes = {0, 0, 1, 1};
  c.revisit_plan = {{0, 1, 1.0}, {2, -1, 1.0}, {1, 1, 1.5}, {3, 1, 0.75, 0.5}};
  c.seed = seed;
  return c;
}

} // namespace seqsprt::test
