#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqsprt/density.hpp"
#include "seqsprt/metrics.hpp"
#include "seqsprt/sprt.hpp"
#include "seqsprt/stream.hpp"
#include "seqsprt/synth.hpp"

namespace seqsprt {

enum class PolicyKind
{
  single,
  single_geom,
  single_llr,
  n_of_m,
  fixed_batch,
  seq_sprt,
  seq_sprt_geom
};

/// Display names: Single, Single+Geom, Single-LLR, N-of-M, FixedBatch,
/// Seq-SPRT, Seq-SPRT+Geom.
std::string to_string(PolicyKind k);
PolicyKind policy_kind_from_string(const std::string& s);
const std::vector<PolicyKind>& all_policies();

/// Synthetic registration oracle standing in for scan alignment.
struct GeometricCheckParams
{
  double gate_trans = 1.0;
  double gate_rot_deg = 20.0;
  double sigma_fit = 0.05;
  double p_alias = 0.3;
  double fitness_threshold = 0.5;
  double fitness_floor = 0.1;
  double alias_fitness = 0.9;
  std::uint64_t seed = 13;

  bool operator==(const GeometricCheckParams&) const = default;
};

struct GeometricResult
{
  Decision decision = Decision::reject;
  double fitness = 0.0;
};

/// Inside the pose gate: fitness = 1 - max(d / gate_trans, dtheta / gate_rot) / 2
/// plus N(0, sigma_fit). Aliased pairs register (fitness near alias_fitness)
/// with probability p_alias and otherwise sit at the floor; every other pair
/// sits at the floor. ACCEPT iff fitness > fitness_threshold. The draw is a
/// pure function of (seed, q, t).
GeometricResult geometric_check(std::size_t q, std::size_t t, const SyntheticWorld& world, const GeometricCheckParams& params);

/// ACCEPT iff x0 <= threshold.
Decision verify_single(double x0, double threshold);
/// ACCEPT iff llr(x0) >= threshold.
Decision verify_single_llr(double x0, const DensityPair& dp, double threshold);
/// ACCEPT iff at least n of the first m per-step LLRs exceed step_threshold;
/// streams shorter than m reject.
Decision verify_n_of_m(const DistanceStream& stream, const DensityPair& dp, std::size_t n, std::size_t m, double step_threshold);
/// ACCEPT iff the mean of the first m per-step LLRs is >= mean_threshold;
/// streams shorter than m reject.
Decision verify_fixed_batch(const DistanceStream& stream, const DensityPair& dp, std::size_t m, double mean_threshold);

struct VerifierPolicy
{
  PolicyKind kind = PolicyKind::seq_sprt;
  double score_threshold = 0.3; // Single, Single+Geom
  double llr_threshold = 0.0;   // Single-LLR
  std::size_t n = 7;            // N-of-M
  std::size_t m = 13;           // N-of-M and FixedBatch
  double step_threshold = 0.0;  // N-of-M
  double mean_threshold = 1.0;  // FixedBatch
  bool rigid_stream = false;    // N-of-M / FixedBatch read the rigid diagonal
  SprtConfig sprt;
  GeometricCheckParams geometric;

  bool uses_geometry() const { return kind == PolicyKind::single_geom || kind == PolicyKind::seq_sprt_geom; }
  /// Throws ConfigError.
  void validate() const;
};

nlohmann::json to_json(const VerifierPolicy& p);
/// Strict parser; unknown keys throw ConfigError.
VerifierPolicy verifier_policy_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SprtConfig& c);
SprtConfig sprt_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GeometricCheckParams& g);
GeometricCheckParams geometric_params_from_json(const nlohmann::json& j);

/// Shared front-end output for one (query, candidate) pair: the retrieval
/// distance and the streams every policy reads.
struct PairEvidence
{
  std::size_t query = 0;
  std::size_t candidate = 0;
  double x0 = 0.0;
  DistanceStream stream; // adaptive tracker
  DistanceStream rigid;  // rigid diagonal, empty unless requested

  bool operator==(const PairEvidence&) const = default;
};

/// Runs one policy on one pair and reports in the common verdict schema.
/// Single-step policies commit the (query, candidate) pair itself;
/// batch policies commit the max-subsegment of their window. Geometric
/// variants check the anchor, then keep only committed pairs that also
/// pass the check. `world` is required only by the geometric variants.
SprtVerdict evaluate_policy(const VerifierPolicy& policy,
                            const PairEvidence& evidence,
                            const DensityPair& dp,
                            const SyntheticWorld* world);

/// The collapse of the sequential test onto a single-step LLR threshold:
/// n_min = n_max = min_run = 1, A = threshold, B and the hit threshold far
/// below it.
SprtConfig one_step_config(double llr_threshold);

/// Candidate hyperparameter settings for held-out tuning, in a fixed order.
/// Sequential policies have fixed hyperparameters and return {base}.
std::vector<VerifierPolicy> tuning_grid(const VerifierPolicy& base,
                                        std::span<const PairEvidence> evidence,
                                        const DensityPair& dp);

struct PrPoint
{
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t predictions = 0;
};

/// Pairwise PR curve of a single-frame score over every distinct threshold.
/// higher_is_better = false accepts score <= threshold (distances), true
/// accepts score >= threshold (LLRs).
std::vector<PrPoint> pr_sweep(std::span<const IndexPair> pairs,
                              std::span<const double> scores,
                              bool higher_is_better,
                              const GroundTruth& gt,
                              std::size_t tolerance = 2);

} // namespace seqsprt
