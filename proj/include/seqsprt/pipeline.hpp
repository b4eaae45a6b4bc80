#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqsprt/baselines.hpp"
#include "seqsprt/conflict.hpp"
#include "seqsprt/density.hpp"
#include "seqsprt/metrics.hpp"
#include "seqsprt/pgo.hpp"
#include "seqsprt/sprt.hpp"
#include "seqsprt/stream.hpp"
#include "seqsprt/synth.hpp"

namespace seqsprt {

inline constexpr int kConfigVersion = 1;

struct InputConfig
{
  // a saved world directory; when absent, synthetic sequences are generated
  std::optional<std::string> world_dir;
  WorldConfig synthetic;
  std::size_t n_sequences = 3;
};

struct DensityConfig
{
  std::size_t grid_size = 512;
  double floor = 1e-9;
  std::size_t n_per_class = 300; // per sequence
  double alias_fraction = 0.5;
  bool per_sequence = false;
  std::uint64_t seed = 7;
};

struct BaselineConfig
{
  bool tune = true;
  std::size_t m = 13;
  bool rigid_stream = false;
  // starting values, replaced by tuning
  double score_threshold = 0.3;
  double llr_threshold = 0.0;
  std::size_t n = 7;
  double step_threshold = 0.0;
  double mean_threshold = 1.0;
};

struct MetricsConfig
{
  std::size_t k = 5;
  std::size_t tolerance = 2;
  std::size_t gap_tolerance = 1;
  Averaging averaging = Averaging::macro;
  GroundTruthParams gt;
};

struct PgoConfig
{
  bool enabled = true;
  LoopEdgeOptions edges;
  OptimizeOptions optimize;
  std::size_t rpe_delta = 10;
};

struct RunConfig
{
  int version = kConfigVersion;
  std::uint64_t seed = 1;
  InputConfig input;
  std::optional<Metric> metric; // overrides the world's metric
  RetrievalParams retrieval;
  TrackerConfig tracker;
  DensityConfig density;
  SprtConfig sprt;
  std::vector<PolicyKind> policies = all_policies();
  BaselineConfig baselines;
  GeometricCheckParams geometric;
  MetricsConfig metrics;
  PgoConfig pgo;
  std::size_t window_cap = 32;
  std::string output_dir = "out";
  std::size_t workers = 1;

  /// Throws ConfigError.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Strict: versioned, unknown keys throw ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
/// FNV-1a of the canonical JSON form, 16 hex digits.
std::string config_hash(const RunConfig& cfg);

/// The policy the run configuration describes for `kind`, before tuning.
VerifierPolicy make_policy(const RunConfig& cfg, PolicyKind kind);

/// One sequence after the shared front end.
struct SequenceData
{
  std::string name;
  SyntheticWorld world;
  GroundTruth gt;
  std::size_t density_index = 0;
  std::vector<PairEvidence> evidence; // query order, then retrieval rank
};

std::vector<SyntheticWorld> load_sequences(const RunConfig& cfg);

/// Pooled (one entry) or per-sequence densities.
std::vector<DensityPair> fit_densities(const RunConfig& cfg, const std::vector<SyntheticWorld>& worlds);

/// Retrieval and stream construction for every query, fanned out to
/// cfg.workers threads; output order is independent of the worker count.
std::vector<PairEvidence> build_evidence(const RunConfig& cfg, const DescriptorTable& table, const DensityPair& dp);

/// Order-sensitive hash of all front-end outputs of a sequence.
std::string evidence_hash(const std::vector<PairEvidence>& evidence);

struct SequenceOutcome
{
  std::vector<SprtVerdict> verdicts;
  std::vector<WindowedResolver::Entry> retained;
  std::size_t cross_window_overlaps = 0;
  PoseGraph2 graph;
  Trajectory optimized;
  EvalReport report;
};

/// Verdicts for every pair, windowed conflict resolution, the three metric
/// tiers and (when `with_pgo`) the pose-graph stress test.
SequenceOutcome evaluate_sequence(const RunConfig& cfg,
                                  const VerifierPolicy& policy,
                                  const SequenceData& seq,
                                  const DensityPair& dp,
                                  bool with_pgo);

/// Grid search on the tuning sequence maximising F1@Khit; first best wins.
VerifierPolicy tune_policy(const RunConfig& cfg, const VerifierPolicy& base, const SequenceData& seq, const DensityPair& dp);

struct PolicyOutcome
{
  VerifierPolicy policy; // after tuning
  std::vector<SequenceOutcome> sequences; // evaluation sequences only
  EvalReport average;
};

struct ExperimentResult
{
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<SequenceData> sequences;
  std::vector<DensityPair> densities;
  std::vector<std::size_t> eval_indices;
  std::optional<std::size_t> tuning_index;
  std::vector<PolicyOutcome> outcomes;
};

/// Full pipeline. With write_artifacts, writes report.json, report.csv,
/// verdicts.jsonl, trajectory_optimized.csv and graph.g2o to
/// cfg.output_dir.
ExperimentResult run_experiment(const RunConfig& cfg, bool write_artifacts = true);

void write_artifacts(const RunConfig& cfg, const ExperimentResult& result);

struct SweepRow
{
  double value = 0.0;
  std::vector<EvalReport> averages; // one per configured policy
};

/// One run per value of the numeric config field at `axis` (JSON pointer
/// style with dots, e.g. "sprt.alpha"), sharing the seed.
std::vector<SweepRow> sweep(const RunConfig& base, const std::string& axis, const std::vector<double>& values);

} // namespace seqsprt
