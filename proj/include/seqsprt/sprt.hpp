#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "seqsprt/density.hpp"
#include "seqsprt/stream.hpp"

namespace seqsprt {

struct Thresholds
{
  double accept; // A
  double reject; // B
};

/// Truncated SPRT settings. Defaults are the fixed values used throughout the
/// evaluation: (alpha, beta) = (1e-5, 0.009), horizons (6, 13).
struct SprtConfig
{
  double alpha = 1e-5;
  double beta = 0.009;
  std::size_t n_min = 6;
  std::size_t n_max = 13;
  // run guard: longest run of steps with llr > llr_step_threshold, gaps <= gap_tolerance
  std::size_t min_run = 3;
  std::size_t gap_tolerance = 1;
  double llr_step_threshold = 0.0;
  double length_bonus = 0.25;
  // replace the Wald boundaries derived from (alpha, beta)
  std::optional<double> accept_override;
  std::optional<double> reject_override;

  /// Wald boundaries unless overridden.
  Thresholds boundaries() const;

  /// Throws DomainError on invalid settings.
  void validate() const;
};

/// A = ln((1 - beta) / alpha), B = ln(beta / (1 - alpha)).
Thresholds thresholds(double alpha, double beta);

/// Closed index range [lo, hi].
struct IndexRange
{
  std::size_t lo = 0;
  std::size_t hi = 0;

  bool overlaps(const IndexRange& o) const { return lo <= o.hi && o.lo <= hi; }
  bool operator==(const IndexRange&) const = default;
  auto operator<=>(const IndexRange&) const = default;
};

using IndexPair = std::pair<std::size_t, std::size_t>;

/// A near-diagonal run of (query, database) pairs committed as a loop.
struct LoopSegment
{
  IndexRange query_span;
  IndexRange db_span;
  double llr_sum = 0.0;
  std::size_t length = 0;
  double score = 0.0;
  // (query, database) pairs of the evidence-bearing steps, in step order
  std::vector<IndexPair> steps;

  bool operator==(const LoopSegment&) const = default;
};

struct Subsegment
{
  std::size_t begin = 0; // j
  std::size_t end = 0;   // k, inclusive
  double sum = 0.0;

  bool operator==(const Subsegment&) const = default;
};

/// Maximum-sum contiguous sub-segment (Kadane); ties prefer the smallest
/// start, then the smallest end. Throws EmptyHistory.
Subsegment max_subsegment(std::span<const double> history);

/// Longest span (first to last hit, in steps) of a run of entries with
/// value > threshold in which consecutive hits are at most `gap_tolerance`
/// non-hits apart. 0 when there is no hit.
std::size_t longest_run(std::span<const double> values, double threshold, std::size_t gap_tolerance);

enum class Decision
{
  accept,
  reject
};

enum class VerdictReason
{
  accept_boundary,
  reject_boundary,
  truncation,
  run_guard_failed,
  geometric_check_failed,
  policy_threshold,
  insufficient_observations
};

std::string to_string(Decision d);
std::string to_string(VerdictReason r);
Decision decision_from_string(const std::string& s);
VerdictReason reason_from_string(const std::string& s);

struct SprtVerdict
{
  std::size_t query = 0;
  std::size_t candidate = 0;
  Decision decision = Decision::reject;
  std::size_t tau = 0;
  double cumulative_llr = 0.0;
  std::vector<double> llr_history;
  std::optional<LoopSegment> committed;
  VerdictReason reason = VerdictReason::truncation;
};

/// Online accumulator for one (query, candidate) pair.
class SequentialTest
{
public:
  enum class Status
  {
    undecided,
    accept,
    reject
  };

  explicit SequentialTest(const SprtConfig& cfg);

  /// Adds one per-step LLR. After a terminal status further calls throw.
  Status observe(double llr);

  Status status() const { return status_; }
  double cumulative() const { return sum_; }
  std::size_t count() const { return history_.size(); }
  const std::vector<double>& history() const { return history_; }
  const Thresholds& bounds() const { return bounds_; }

private:
  SprtConfig cfg_;
  Thresholds bounds_;
  double sum_ = 0.0;
  std::vector<double> history_;
  Status status_ = Status::undecided;
};

/// Runs the truncated test over an observation source: early reject from
/// the first sample, acceptance deferred to n_min, max-subsegment commit and
/// run guard on acceptance, conservative reject at n_max.
SprtVerdict verify(ObservationSource& source, const DensityPair& dp, const SprtConfig& cfg);

/// Same decision logic directly on a sequence of per-step LLRs (query and
/// candidate 0, offsets k_i = i).
SprtVerdict verify_llrs(std::span<const double> llrs, const SprtConfig& cfg);

/// Builds the committed segment for steps [sub.begin, sub.end] of an
/// observed stream prefix. llr_sum and length cover the whole sub-segment;
/// steps and spans keep only steps with llr > evidence_threshold (all steps
/// when none qualifies), so a dropout step never becomes an association.
LoopSegment commit_segment(std::size_t query,
                           std::size_t candidate,
                           std::span<const Observation> observations,
                           std::span<const double> llrs,
                           const Subsegment& sub,
                           double length_bonus,
                           double evidence_threshold);

nlohmann::json to_json(const LoopSegment& s);
LoopSegment loop_segment_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SprtVerdict& v);
SprtVerdict verdict_from_json(const nlohmann::json& j);

} // namespace seqsprt
