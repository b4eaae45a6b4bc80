#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

namespace seqsprt {

/// Binary hypothesis tag: H1 = loop (match), H0 = non-loop.
enum class Hypothesis
{
  H0,
  H1
};

struct DistanceSample
{
  double distance = 0.0;
  Hypothesis label = Hypothesis::H0;
};

/// Settings for fit_density_pair.
struct DensityFitOptions
{
  std::size_t grid_size = 512;
  double floor = 1e-9;
};

/// Tabulated loop / non-loop distance densities with an interpolated
/// log-likelihood-ratio lookup. Immutable once built.
class DensityPair
{
public:
  DensityPair(std::vector<double> grid,
              std::vector<double> log_f1,
              std::vector<double> log_f0,
              double bandwidth_h1,
              double bandwidth_h0,
              double floor);

  /// log f1(x) - log f0(x), linear in the tabulated log densities, clamped
  /// to the boundary values outside the grid.
  double llr(double x) const;

  double log_density(Hypothesis h, double x) const;

  const std::vector<double>& grid() const { return grid_; }
  const std::vector<double>& log_f1() const { return log_f1_; }
  const std::vector<double>& log_f0() const { return log_f0_; }
  double bandwidth_h1() const { return bandwidth_h1_; }
  double bandwidth_h0() const { return bandwidth_h0_; }
  double floor() const { return floor_; }

  /// Trapezoid integral of exp(log f) over the grid.
  double mass(Hypothesis h) const;

  /// KL(f1 || f0) in nats, evaluated by the trapezoid rule on the grid.
  double kl_divergence_h1_h0() const;

  bool operator==(const DensityPair&) const = default;

private:
  // Locates x: index of the left node and interpolation weight.
  std::pair<std::size_t, double> locate(double x) const;
  double interp(const std::vector<double>& v, double x) const;

  std::vector<double> grid_;
  std::vector<double> log_f1_;
  std::vector<double> log_f0_;
  double bandwidth_h1_;
  double bandwidth_h0_;
  double floor_;
  bool uniform_ = false;
  double x0_ = 0.0;
  double dx_ = 0.0;
};

/// Silverman's rule-of-thumb bandwidth, 0 when the sample has no spread.
double silverman_bandwidth(std::span<const double> xs);

/// Fits Gaussian-kernel densities for H1 and H0 on a shared uniform grid.
/// Throws InsufficientSamples when a label has fewer than 10 samples.
DensityPair fit_density_pair(std::span<const DistanceSample> samples,
                             const DensityFitOptions& opts = {});

nlohmann::json to_json(const DensityPair& dp);
DensityPair density_pair_from_json(const nlohmann::json& j);

/// Draws from exp(log f) of one hypothesis, treating the density as
/// piecewise log-linear between grid nodes (the same model llr() uses).
class DensitySampler
{
public:
  DensitySampler(const DensityPair& dp, Hypothesis h);

  double operator()(std::mt19937_64& rng) const;

private:
  std::vector<double> grid_;
  std::vector<double> log_f_;
  std::vector<double> cdf_;
};

} // namespace seqsprt
