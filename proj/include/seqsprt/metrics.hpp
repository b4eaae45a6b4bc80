#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "seqsprt/geometry.hpp"
#include "seqsprt/sprt.hpp"

namespace seqsprt {

struct GroundTruthParams
{
  double translation_gate = 0.5;  // meters, strict
  double rotation_gate_deg = 12.0; // strict
  std::size_t min_separation = 30; // |q - t| >= min_separation
  bool suppress_near_duplicates = true;
  std::size_t gap_tolerance = 1; // segment grouping

  bool operator==(const GroundTruthParams&) const = default;
};

/// A near-diagonal run of (query, database) pairs.
using PairRun = std::vector<IndexPair>;

/// Index over a pair set answering "is there a pair within +-tol on both
/// axes".
class PairLookup
{
public:
  PairLookup() = default;
  explicit PairLookup(std::span<const IndexPair> pairs);

  bool contains(const IndexPair& p, std::size_t tol) const;

private:
  std::unordered_map<std::size_t, std::vector<std::size_t>> by_query_;
};

struct GroundTruth
{
  std::vector<IndexPair> loop_pairs; // sorted
  std::vector<PairRun> segments;
  GroundTruthParams params;

  PairLookup lookup() const { return PairLookup(loop_pairs); }
};

/// Labels loops from a planar trajectory: translation / rotation / temporal
/// gates, near-duplicate suppression (one database match per query and
/// contiguous database block, the spatially nearest), then grouping into
/// near-diagonal runs.
GroundTruth label_ground_truth(std::span<const Pose2> poses, const GroundTruthParams& params = {});

/// Groups pairs into near-diagonal runs. A pair (q2, t2) extends a run ending
/// at (q1, t1) when 1 <= q2 - q1 <= 1 + gap and 0 <= t2 - t1 <= 2 (q2 - q1) + gap.
std::vector<PairRun> group_runs(std::vector<IndexPair> pairs, std::size_t gap_tolerance);

struct PrfScore
{
  std::optional<double> precision; // absent when nothing was predicted
  std::optional<double> recall;    // absent when there is nothing to find
  std::optional<double> f1;
};

double harmonic_f1(double p, double r);

struct PairwiseResult
{
  PrfScore score;
  std::size_t tp = 0; // predictions matching a GT pair
  std::size_t fp = 0;
  std::size_t fn = 0; // GT pairs matched by no prediction
  std::size_t gt_pairs = 0;
};

PairwiseResult pairwise_pr(std::span<const IndexPair> predicted, const GroundTruth& gt, std::size_t tolerance = 2);

/// Longest run (in query frames, first to last matched step) of steps of
/// `predicted` lying within +-tol of a pair of `gt_segment`, consecutive
/// matched steps at most gap_tolerance + 1 query frames apart.
std::size_t run_overlap(const PairRun& predicted, const PairRun& gt_segment, std::size_t tol, std::size_t gap_tolerance);

struct KhitResult
{
  PrfScore score;
  std::size_t k = 5;
  std::size_t khit_predicted = 0; // predicted segments that are K-hits
  std::size_t khit_gt = 0;        // GT segments reached by a K-hit
  std::size_t predicted_segments = 0;
  std::size_t gt_segments = 0;
};

KhitResult khit_pr(std::span<const PairRun> predicted_segments,
                   const GroundTruth& gt,
                   std::size_t k = 5,
                   std::size_t gap_tolerance = 1,
                   std::size_t tolerance = 2);

struct DecisionTier
{
  std::optional<double> asn_acc;
  std::optional<double> asn_rej;
  std::optional<double> delay;
};

/// Mean stopping times by decision, and mean (t_dec - t_birth) over accepts
/// that are GT loops (t_birth = q, t_dec = q + tau - 1).
DecisionTier decision_tier(std::span<const SprtVerdict> verdicts, const GroundTruth& gt, std::size_t tolerance = 2);

struct EvalReport
{
  std::string sequence;
  std::string descriptor;
  std::string policy;
  PrfScore pairwise;
  PrfScore khit;
  std::size_t k = 5;
  DecisionTier decision_tier;
  std::size_t tp = 0, fp = 0, fn = 0, gt_pairs = 0;
  std::size_t predicted_segments = 0, gt_segments = 0, k_hits = 0, gt_k_hits = 0;
  std::optional<double> ate;
  std::optional<double> rpe;
  std::optional<double> ate_odometry;
};

nlohmann::json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const nlohmann::json& j);

/// Column header and row matching the summary table layout:
/// P@Khit, R@Khit, F1@Khit, Prec, Rec, F1, ATE, RPE.
std::string report_csv_header();
std::string report_csv_row(const EvalReport& r);

enum class Averaging
{
  macro,
  micro
};

/// Averages per-sequence reports. Macro: mean of available per-sequence
/// ratios. Micro: ratios of pooled counts (trajectory errors and stopping
/// times are always macro-averaged).
EvalReport average_reports(std::span<const EvalReport> reports, Averaging mode);

nlohmann::json to_json(const GroundTruth& gt);
GroundTruth ground_truth_from_json(const nlohmann::json& j);

} // namespace seqsprt
