#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "seqsprt/density.hpp"

namespace seqsprt {

enum class Metric
{
  euclidean,
  cosine,
  manhattan
};

Metric metric_from_string(const std::string& s);
std::string to_string(Metric m);

/// Per-keyframe global descriptors, densely indexed from 0, compared with a
/// native distance.
class DescriptorTable
{
public:
  DescriptorTable() = default;
  DescriptorTable(std::size_t dim, std::vector<double> values, Metric metric);

  static DescriptorTable from_rows(const std::vector<std::vector<double>>& rows, Metric metric);

  std::size_t size() const { return dim_ == 0 ? 0 : values_.size() / dim_; }
  std::size_t dim() const { return dim_; }
  Metric metric() const { return metric_; }
  void set_metric(Metric m) { metric_ = m; }
  const double* row(std::size_t k) const { return values_.data() + k * dim_; }

  double distance(std::size_t a, std::size_t b) const;

  void save_csv(const std::string& path) const;
  static DescriptorTable load_csv(const std::string& path, Metric metric);

private:
  std::size_t dim_ = 0;
  std::vector<double> values_;
  Metric metric_ = Metric::euclidean;
};

struct Candidate
{
  std::size_t index = 0;
  double distance = 0.0;

  bool operator==(const Candidate&) const = default;
};

struct CandidateSet
{
  std::size_t query = 0;
  std::vector<Candidate> candidates;
};

struct RetrievalParams
{
  std::size_t budget = 5;
  // keyframes with |q - t| <= exclusion are never proposed
  std::size_t exclusion = 30;
  // a candidate within this many indices of a nearer retained one is dropped
  std::size_t exclusivity = 10;
  // drop candidates farther than ratio_gate * best distance; <= 0 disables
  double ratio_gate = 1.5;
  bool past_only = false;
};

/// Top-`budget` nearest keyframes with temporal exclusion and greedy
/// exclusivity suppression. Ties break by ascending index.
CandidateSet retrieve(const DescriptorTable& table,
                      std::size_t q,
                      std::size_t budget,
                      std::size_t exclusion,
                      std::size_t exclusivity);

/// retrieve() followed by the descriptor-distance ratio gate.
CandidateSet retrieve(const DescriptorTable& table, std::size_t q, const RetrievalParams& params);

/// One stream step: x_i = dist(d_{q+i}, d_{t+k_i}), k_i = floor(nu * i + delta).
struct Observation
{
  std::size_t step = 0;
  long offset = 0;
  double distance = 0.0;
  double nu = 1.0;
  int delta = 0;

  bool operator==(const Observation&) const = default;
};

struct DistanceStream
{
  std::size_t query = 0;
  std::size_t candidate = 0;
  std::vector<Observation> observations;

  std::size_t size() const { return observations.size(); }
  std::vector<double> nu_trace() const;
  std::vector<int> delta_trace() const;

  bool operator==(const DistanceStream&) const = default;
};

enum class VelocityMode
{
  per_step,
  per_stream
};

struct TrackerConfig
{
  std::vector<double> nu_set{0.5, 0.75, 1.0, 1.25, 1.5, 2.0};
  int delta_max = 2;
  std::size_t n_max = 13;
  VelocityMode velocity_mode = VelocityMode::per_step;
};

/// Greedy tracker: at every step picks the (nu, delta) maximising llr(x),
/// ties going to the smallest |delta|, then the smallest nu, then the
/// smallest delta. Throws EmptyStream when step 0 has no valid pair.
DistanceStream build_stream(const DescriptorTable& table,
                            const DensityPair& dp,
                            std::size_t q,
                            std::size_t t,
                            const std::vector<double>& nu_set,
                            int delta_max,
                            std::size_t n_max);

DistanceStream build_stream(const DescriptorTable& table,
                            const DensityPair& dp,
                            std::size_t q,
                            std::size_t t,
                            const TrackerConfig& cfg);

/// The rigid diagonal x_i = dist(d_{q+i}, d_{t+i}).
DistanceStream build_rigid_stream(const DescriptorTable& table, std::size_t q, std::size_t t, std::size_t n_max);

/// Incremental supply of observations for one (query, candidate) pair.
class ObservationSource
{
public:
  virtual ~ObservationSource() = default;
  virtual std::optional<Observation> next() = 0;
  virtual std::size_t query() const = 0;
  virtual std::size_t candidate() const = 0;
};

/// Replays a precomputed stream.
class StreamSource final : public ObservationSource
{
public:
  explicit StreamSource(const DistanceStream& s)
    : stream_(s)
  {
  }
  std::optional<Observation> next() override;
  std::size_t query() const override { return stream_.query; }
  std::size_t candidate() const override { return stream_.candidate; }

private:
  const DistanceStream& stream_;
  std::size_t pos_ = 0;
};

/// Computes per-step greedy observations on demand, so early decisions skip
/// the remaining distance evaluations.
class StreamTracker final : public ObservationSource
{
public:
  StreamTracker(const DescriptorTable& table,
                const DensityPair& dp,
                std::size_t q,
                std::size_t t,
                std::vector<double> nu_set,
                int delta_max,
                std::size_t n_max);

  std::optional<Observation> next() override;
  std::size_t query() const override { return q_; }
  std::size_t candidate() const override { return t_; }

private:
  const DescriptorTable& table_;
  const DensityPair& dp_;
  std::size_t q_;
  std::size_t t_;
  std::vector<double> nu_set_;
  int delta_max_;
  std::size_t n_max_;
  std::size_t step_ = 0;
  bool done_ = false;
};

/// Greedy choice for a single step; nullopt when no valid index pair exists.
std::optional<Observation> track_step(const DescriptorTable& table,
                                      const DensityPair& dp,
                                      std::size_t q,
                                      std::size_t t,
                                      std::size_t step,
                                      const std::vector<double>& nu_set,
                                      int delta_max);

} // namespace seqsprt
