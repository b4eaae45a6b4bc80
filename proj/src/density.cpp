#include "seqsprt/density.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "seqsprt/error.hpp"
#include "seqsprt/random.hpp"

namespace seqsprt {

namespace {

constexpr std::size_t kMinSamplesPerLabel = 10;
constexpr std::size_t kMinGridSize = 16;
constexpr double kMinBandwidthFraction = 1e-4;

double quantile_sorted(const std::vector<double>& s, double p)
{
  const double pos = p * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return s[lo] + w * (s[hi] - s[lo]);
}

double trapezoid(const std::vector<double>& grid, const std::vector<double>& f)
{
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i)
    acc += 0.5 * (f[i] + f[i + 1]) * (grid[i + 1] - grid[i]);
  return acc;
}

std::vector<double> kde_on_grid(const std::vector<double>& grid,
                                const std::vector<double>& xs,
                                double h)
{
  const double norm = 1.0 / (static_cast<double>(xs.size()) * h *
                             std::sqrt(2.0 * std::numbers::pi));
  std::vector<double> f(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double acc = 0.0;
    for (double x : xs) {
      const double z = (grid[g] - x) / h;
      acc += std::exp(-0.5 * z * z);
    }
    f[g] = acc * norm;
  }
  return f;
}

std::vector<double> floored_log_density(const std::vector<double>& grid,
                                        std::vector<double> f,
                                        double floor)
{
  for (auto& v : f)
    v = std::max(v, floor);
  const double z = trapezoid(grid, f);
  for (auto& v : f)
    v = std::max(v / z, floor);
  std::vector<double> out(f.size());
  std::transform(f.begin(), f.end(), out.begin(), [](double v) { return std::log(v); });
  return out;
}

} // namespace

DensityPair::DensityPair(std::vector<double> grid,
                         std::vector<double> log_f1,
                         std::vector<double> log_f0,
                         double bandwidth_h1,
                         double bandwidth_h0,
                         double floor)
  : grid_(std::move(grid))
  , log_f1_(std::move(log_f1))
  , log_f0_(std::move(log_f0))
  , bandwidth_h1_(bandwidth_h1)
  , bandwidth_h0_(bandwidth_h0)
  , floor_(floor)
{
  if (grid_.size() < 2 || log_f1_.size() != grid_.size() || log_f0_.size() != grid_.size())
    throw DomainError("DensityPair: grid and log densities must have equal length >= 2");
  for (std::size_t i = 0; i + 1 < grid_.size(); ++i)
    if (!(grid_[i + 1] > grid_[i]))
      throw DomainError("DensityPair: grid must be strictly increasing");
  for (std::size_t i = 0; i < grid_.size(); ++i)
    if (!std::isfinite(log_f1_[i]) || !std::isfinite(log_f0_[i]))
      throw DomainError("DensityPair: log densities must be finite");
  if (!(bandwidth_h1_ > 0.0) || !(bandwidth_h0_ > 0.0) || !(floor_ > 0.0))
    throw DomainError("DensityPair: bandwidths and floor must be positive");

  x0_ = grid_.front();
  dx_ = (grid_.back() - grid_.front()) / static_cast<double>(grid_.size() - 1);
  uniform_ = true;
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    if (std::abs(grid_[i] - (x0_ + dx_ * static_cast<double>(i))) > 1e-9 * dx_) {
      uniform_ = false;
      break;
    }
  }
}

std::pair<std::size_t, double> DensityPair::locate(double x) const
{
  const std::size_t last = grid_.size() - 1;
  if (x <= grid_.front())
    return {0, 0.0};
  if (x >= grid_.back())
    return {last - 1, 1.0};
  std::size_t j;
  if (uniform_) {
    j = static_cast<std::size_t>((x - x0_) / dx_);
    j = std::min(j, last - 1);
    // fix up rounding so that grid_[j] <= x < grid_[j + 1]
    while (j > 0 && grid_[j] > x)
      --j;
    while (j + 1 < last && grid_[j + 1] <= x)
      ++j;
  } else {
    j = static_cast<std::size_t>(std::upper_bound(grid_.begin(), grid_.end(), x) - grid_.begin()) - 1;
  }
  const double w = (x - grid_[j]) / (grid_[j + 1] - grid_[j]);
  return {j, w};
}

double DensityPair::interp(const std::vector<double>& v, double x) const
{
  const auto [j, w] = locate(x);
  if (w == 0.0)
    return v[j];
  if (w == 1.0)
    return v[j + 1];
  return (1.0 - w) * v[j] + w * v[j + 1];
}

double DensityPair::llr(double x) const
{
  const auto [j, w] = locate(x);
  const double left = log_f1_[j] - log_f0_[j];
  const double right = log_f1_[j + 1] - log_f0_[j + 1];
  if (w == 0.0)
    return left;
  if (w == 1.0)
    return right;
  return (1.0 - w) * left + w * right;
}

double DensityPair::log_density(Hypothesis h, double x) const
{
  return interp(h == Hypothesis::H1 ? log_f1_ : log_f0_, x);
}

double DensityPair::mass(Hypothesis h) const
{
  const auto& lf = h == Hypothesis::H1 ? log_f1_ : log_f0_;
  std::vector<double> f(lf.size());
  std::transform(lf.begin(), lf.end(), f.begin(), [](double v) { return std::exp(v); });
  return trapezoid(grid_, f);
}

double DensityPair::kl_divergence_h1_h0() const
{
  std::vector<double> integrand(grid_.size());
  for (std::size_t i = 0; i < grid_.size(); ++i)
    integrand[i] = std::exp(log_f1_[i]) * (log_f1_[i] - log_f0_[i]);
  return trapezoid(grid_, integrand);
}

double silverman_bandwidth(std::span<const double> xs)
{
  if (xs.size() < 2)
    return 0.0;
  std::vector<double> s(xs.begin(), xs.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double mean = 0.0;
  for (double v : s)
    mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : s)
    var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / (n - 1.0));
  const double iqr = quantile_sorted(s, 0.75) - quantile_sorted(s, 0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0))
    spread = sd;
  return 0.9 * spread * std::pow(n, -0.2);
}

DensityPair fit_density_pair(std::span<const DistanceSample> samples, const DensityFitOptions& opts)
{
  if (opts.grid_size < kMinGridSize)
    throw DomainError("fit_density_pair: grid_size must be >= 16");
  if (!(opts.floor > 0.0))
    throw DomainError("fit_density_pair: floor must be positive");

  std::vector<double> x1, x0;
  for (const auto& s : samples) {
    if (!std::isfinite(s.distance) || s.distance < 0.0)
      throw DomainError("fit_density_pair: distances must be finite and non-negative");
    (s.label == Hypothesis::H1 ? x1 : x0).push_back(s.distance);
  }
  if (x1.size() < kMinSamplesPerLabel || x0.size() < kMinSamplesPerLabel)
    throw InsufficientSamples("fit_density_pair: need at least 10 samples per label (have H1=" +
                              std::to_string(x1.size()) + ", H0=" + std::to_string(x0.size()) + ")");

  const auto [lo1, hi1] = std::minmax_element(x1.begin(), x1.end());
  const auto [lo0, hi0] = std::minmax_element(x0.begin(), x0.end());
  const double lo = std::min(*lo1, *lo0);
  const double hi = std::max(*hi1, *hi0);
  const double range = hi - lo;

  // Degenerate labels (zero spread) fall back to a minimum bandwidth.
  double min_bw = kMinBandwidthFraction * range;
  if (!(min_bw > 0.0))
    min_bw = kMinBandwidthFraction * std::max(1.0, std::abs(hi));
  const double h1 = std::max(silverman_bandwidth(x1), min_bw);
  const double h0 = std::max(silverman_bandwidth(x0), min_bw);

  const double pad = 3.0 * std::max(h1, h0);
  const double g_lo = lo - pad;
  const double g_hi = hi + pad;
  std::vector<double> grid(opts.grid_size);
  const double step = (g_hi - g_lo) / static_cast<double>(opts.grid_size - 1);
  for (std::size_t i = 0; i < opts.grid_size; ++i)
    grid[i] = g_lo + step * static_cast<double>(i);

  auto log_f1 = floored_log_density(grid, kde_on_grid(grid, x1, h1), opts.floor);
  auto log_f0 = floored_log_density(grid, kde_on_grid(grid, x0, h0), opts.floor);
  return DensityPair(std::move(grid), std::move(log_f1), std::move(log_f0), h1, h0, opts.floor);
}

nlohmann::json to_json(const DensityPair& dp)
{
  return nlohmann::json{{"grid", dp.grid()},
                        {"log_f1", dp.log_f1()},
                        {"log_f0", dp.log_f0()},
                        {"bandwidth_h1", dp.bandwidth_h1()},
                        {"bandwidth_h0", dp.bandwidth_h0()},
                        {"floor", dp.floor()}};
}

DensityPair density_pair_from_json(const nlohmann::json& j)
{
  try {
    return DensityPair(j.at("grid").get<std::vector<double>>(),
                       j.at("log_f1").get<std::vector<double>>(),
                       j.at("log_f0").get<std::vector<double>>(),
                       j.at("bandwidth_h1").get<double>(),
                       j.at("bandwidth_h0").get<double>(),
                       j.at("floor").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("density JSON: ") + e.what());
  }
}

DensitySampler::DensitySampler(const DensityPair& dp, Hypothesis h)
  : grid_(dp.grid())
  , log_f_(h == Hypothesis::H1 ? dp.log_f1() : dp.log_f0())
{
  cdf_.resize(grid_.size(), 0.0);
  for (std::size_t j = 0; j + 1 < grid_.size(); ++j) {
    const double dx = grid_[j + 1] - grid_[j];
    const double a = log_f_[j], b = log_f_[j + 1];
    const double d = b - a;
    // exact integral of exp(a + d * u / dx) over the interval
    const double m = std::abs(d) < 1e-12 ? dx * std::exp(a) : dx * std::exp(a) * std::expm1(d) / d;
    cdf_[j + 1] = cdf_[j] + m;
  }
}

double DensitySampler::operator()(std::mt19937_64& rng) const
{
  const double target = uniform01(rng) * cdf_.back();
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), target);
  std::size_t j = static_cast<std::size_t>(it - cdf_.begin());
  j = std::clamp<std::size_t>(j, 1, cdf_.size() - 1) - 1;
  const double mass = cdf_[j + 1] - cdf_[j];
  const double u = mass > 0.0 ? std::clamp((target - cdf_[j]) / mass, 0.0, 1.0) : uniform01(rng);
  const double dx = grid_[j + 1] - grid_[j];
  const double d = log_f_[j + 1] - log_f_[j];
  if (std::abs(d) < 1e-12)
    return grid_[j] + u * dx;
  // invert (expm1(d * s) / expm1(d)) = u for s in [0, 1]
  const double s = std::log1p(u * std::expm1(d)) / d;
  return grid_[j] + std::clamp(s, 0.0, 1.0) * dx;
}

} // namespace seqsprt
