#include "seqsprt/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "json_util.hpp"
#include "seqsprt/error.hpp"
#include "seqsprt/random.hpp"

namespace seqsprt {

namespace {

using nlohmann::json;
using detail::check_keys;
using detail::read_opt;

json information_to_json(const Information& m)
{
  return json::array({m(0, 0), m(0, 1), m(0, 2), m(1, 1), m(1, 2), m(2, 2)});
}

Information information_from_json(const json& j, const std::string& ctx)
{
  if (!j.is_array() || j.size() != 6)
    throw ConfigError(ctx + ": expected six upper-triangle entries");
  Information m;
  const auto v = j.get<std::vector<double>>();
  m << v[0], v[1], v[2], v[1], v[3], v[4], v[2], v[4], v[5];
  return m;
}

bool is_baseline(PolicyKind k) { return k != PolicyKind::seq_sprt && k != PolicyKind::seq_sprt_geom; }

// Runs fn(i) for i in [0, n) on `workers` threads; rethrows the first error.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn)
{
  if (workers == 0)
    workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i)
      fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error)
            error = std::current_exception();
        }
      }
    });
  pool.clear();
  if (error)
    std::rethrow_exception(error);
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t len)
{
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <class T>
std::uint64_t fnv_value(std::uint64_t h, T v)
{
  return fnv1a(h, &v, sizeof v);
}

std::string hex64(std::uint64_t v)
{
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

} // namespace

void RunConfig::validate() const
{
  if (version != kConfigVersion)
    throw ConfigError("config: unsupported version " + std::to_string(version));
  if (!input.world_dir) {
    input.synthetic.validate();
    if (input.n_sequences < 1)
      throw ConfigError("config: n_sequences must be >= 1");
  }
  if (retrieval.budget < 1)
    throw ConfigError("config: retrieval budget must be >= 1");
  if (tracker.nu_set.empty() || tracker.delta_max < 0)
    throw ConfigError("config: tracker needs a non-empty nu_set and delta_max >= 0");
  for (double nu : tracker.nu_set)
    if (!(nu > 0.0))
      throw ConfigError("config: velocity hypotheses must be positive");
  if (density.grid_size < 16 || !(density.floor > 0.0) || density.n_per_class < 10)
    throw ConfigError("config: density needs grid_size >= 16, floor > 0, n_per_class >= 10");
  if (density.alias_fraction < 0.0 || density.alias_fraction > 1.0)
    throw ConfigError("config: density.alias_fraction must lie in [0, 1]");
  try {
    sprt.validate();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("config.sprt: ") + e.what());
  }
  if (policies.empty())
    throw ConfigError("config: no policies");
  if (baselines.m < 1 || baselines.n < 1 || baselines.n > baselines.m)
    throw ConfigError("config: baselines need 1 <= n <= m");
  if (metrics.k < 1)
    throw ConfigError("config: K must be >= 1");
  if (window_cap < 1)
    throw ConfigError("config: window_cap must be >= 1");
  if (pgo.edges.stride < 1)
    throw ConfigError("config: pgo stride must be >= 1");
  for (auto k : policies)
    make_policy(*this, k).validate();
}

VerifierPolicy make_policy(const RunConfig& cfg, PolicyKind kind)
{
  VerifierPolicy p;
  p.kind = kind;
  p.score_threshold = cfg.baselines.score_threshold;
  p.llr_threshold = cfg.baselines.llr_threshold;
  p.n = cfg.baselines.n;
  p.m = cfg.baselines.m;
  p.step_threshold = cfg.baselines.step_threshold;
  p.mean_threshold = cfg.baselines.mean_threshold;
  p.rigid_stream = cfg.baselines.rigid_stream;
  p.sprt = cfg.sprt;
  p.geometric = cfg.geometric;
  return p;
}

json to_json(const RunConfig& c)
{
  json input{{"world_dir", c.input.world_dir ? json(*c.input.world_dir) : json(nullptr)},
             {"synthetic", to_json(c.input.synthetic)},
             {"n_sequences", c.input.n_sequences}};
  json policies = json::array();
  for (auto k : c.policies)
    policies.push_back(to_string(k));
  const auto& gt = c.metrics.gt;
  const auto& e = c.pgo.edges;
  const auto& o = c.pgo.optimize;
  return {
    {"version", c.version},
    {"seed", c.seed},
    {"input", input},
    {"metric", c.metric ? json(to_string(*c.metric)) : json(nullptr)},
    {"retrieval",
     {{"budget", c.retrieval.budget},
      {"exclusion", c.retrieval.exclusion},
      {"exclusivity", c.retrieval.exclusivity},
      {"ratio_gate", c.retrieval.ratio_gate},
      {"past_only", c.retrieval.past_only}}},
    {"tracker",
     {{"nu_set", c.tracker.nu_set},
      {"delta_max", c.tracker.delta_max},
      {"velocity_mode", c.tracker.velocity_mode == VelocityMode::per_step ? "per_step" : "per_stream"}}},
    {"density",
     {{"grid_size", c.density.grid_size},
      {"floor", c.density.floor},
      {"n_per_class", c.density.n_per_class},
      {"alias_fraction", c.density.alias_fraction},
      {"per_sequence", c.density.per_sequence},
      {"seed", c.density.seed}}},
    {"sprt", to_json(c.sprt)},
    {"policies", policies},
    {"baselines",
     {{"tune", c.baselines.tune},
      {"m", c.baselines.m},
      {"rigid_stream", c.baselines.rigid_stream},
      {"score_threshold", c.baselines.score_threshold},
      {"llr_threshold", c.baselines.llr_threshold},
      {"n", c.baselines.n},
      {"step_threshold", c.baselines.step_threshold},
      {"mean_threshold", c.baselines.mean_threshold}}},
    {"geometric", to_json(c.geometric)},
    {"metrics",
     {{"k", c.metrics.k},
      {"tolerance", c.metrics.tolerance},
      {"gap_tolerance", c.metrics.gap_tolerance},
      {"averaging", c.metrics.averaging == Averaging::macro ? "macro" : "micro"},
      {"gt",
       {{"translation_gate", gt.translation_gate},
        {"rotation_gate_deg", gt.rotation_gate_deg},
        {"min_separation", gt.min_separation},
        {"suppress_near_duplicates", gt.suppress_near_duplicates},
        {"gap_tolerance", gt.gap_tolerance}}}}},
    {"pgo",
     {{"enabled", c.pgo.enabled},
      {"stride", e.stride},
      {"noise_trans", e.noise_trans},
      {"noise_rot_deg", e.noise_rot_deg},
      {"basin_trans", e.basin_trans},
      {"basin_rot_deg", e.basin_rot_deg},
      {"odom_information", information_to_json(e.odom_information)},
      {"loop_information", information_to_json(e.loop_information)},
      {"edge_seed", e.seed},
      {"max_iters", o.max_iters},
      {"tol", o.tol},
      {"huber", o.huber_loops},
      {"huber_delta", o.huber_delta},
      {"rpe_delta", c.pgo.rpe_delta}}},
    {"window_cap", c.window_cap},
    {"output_dir", c.output_dir},
    {"workers", c.workers},
  };
}

RunConfig run_config_from_json(const json& j)
{
  const std::string ctx = "config";
  check_keys(j,
             {"version",
              "seed",
              "input",
              "metric",
              "retrieval",
              "tracker",
              "density",
              "sprt",
              "policies",
              "baselines",
              "geometric",
              "metrics",
              "pgo",
              "window_cap",
              "output_dir",
              "workers"},
             ctx);
  RunConfig c;
  if (!j.contains("version"))
    throw ConfigError("config: missing 'version'");
  read_opt(j, "version", c.version, ctx);
  if (c.version != kConfigVersion)
    throw ConfigError("config: unsupported version " + std::to_string(c.version));
  read_opt(j, "seed", c.seed, ctx);
  read_opt(j, "window_cap", c.window_cap, ctx);
  read_opt(j, "output_dir", c.output_dir, ctx);
  read_opt(j, "workers", c.workers, ctx);

  if (j.contains("input")) {
    const auto& in = j.at("input");
    check_keys(in, {"world_dir", "synthetic", "n_sequences"}, "config.input");
    if (in.contains("world_dir") && !in.at("world_dir").is_null()) {
      std::string dir;
      read_opt(in, "world_dir", dir, "config.input");
      c.input.world_dir = dir;
    }
    if (in.contains("synthetic"))
      c.input.synthetic = world_config_from_json(in.at("synthetic"));
    read_opt(in, "n_sequences", c.input.n_sequences, "config.input");
  }
  if (j.contains("metric") && !j.at("metric").is_null()) {
    std::string m;
    read_opt(j, "metric", m, ctx);
    try {
      c.metric = metric_from_string(m);
    } catch (const Error& e) {
      throw ConfigError(std::string("config.metric: ") + e.what());
    }
  }
  if (j.contains("retrieval")) {
    const auto& r = j.at("retrieval");
    const std::string rc = "config.retrieval";
    check_keys(r, {"budget", "exclusion", "exclusivity", "ratio_gate", "past_only"}, rc);
    read_opt(r, "budget", c.retrieval.budget, rc);
    read_opt(r, "exclusion", c.retrieval.exclusion, rc);
    read_opt(r, "exclusivity", c.retrieval.exclusivity, rc);
    read_opt(r, "ratio_gate", c.retrieval.ratio_gate, rc);
    read_opt(r, "past_only", c.retrieval.past_only, rc);
  }
  if (j.contains("tracker")) {
    const auto& t = j.at("tracker");
    const std::string tc = "config.tracker";
    check_keys(t, {"nu_set", "delta_max", "velocity_mode"}, tc);
    read_opt(t, "nu_set", c.tracker.nu_set, tc);
    read_opt(t, "delta_max", c.tracker.delta_max, tc);
    if (t.contains("velocity_mode")) {
      std::string m;
      read_opt(t, "velocity_mode", m, tc);
      if (m == "per_step")
        c.tracker.velocity_mode = VelocityMode::per_step;
      else if (m == "per_stream")
        c.tracker.velocity_mode = VelocityMode::per_stream;
      else
        throw ConfigError(tc + ".velocity_mode: expected per_step or per_stream");
    }
  }
  if (j.contains("density")) {
    const auto& d = j.at("density");
    const std::string dc = "config.density";
    check_keys(d, {"grid_size", "floor", "n_per_class", "alias_fraction", "per_sequence", "seed"}, dc);
    read_opt(d, "grid_size", c.density.grid_size, dc);
    read_opt(d, "floor", c.density.floor, dc);
    read_opt(d, "n_per_class", c.density.n_per_class, dc);
    read_opt(d, "alias_fraction", c.density.alias_fraction, dc);
    read_opt(d, "per_sequence", c.density.per_sequence, dc);
    read_opt(d, "seed", c.density.seed, dc);
  }
  if (j.contains("sprt"))
    c.sprt = sprt_config_from_json(j.at("sprt"));
  if (j.contains("policies")) {
    std::vector<std::string> names;
    read_opt(j, "policies", names, ctx);
    c.policies.clear();
    for (const auto& n : names)
      c.policies.push_back(policy_kind_from_string(n));
  }
  if (j.contains("baselines")) {
    const auto& b = j.at("baselines");
    const std::string bc = "config.baselines";
    check_keys(b,
               {"tune", "m", "rigid_stream", "score_threshold", "llr_threshold", "n", "step_threshold", "mean_threshold"},
               bc);
    read_opt(b, "tune", c.baselines.tune, bc);
    read_opt(b, "m", c.baselines.m, bc);
    read_opt(b, "rigid_stream", c.baselines.rigid_stream, bc);
    read_opt(b, "score_threshold", c.baselines.score_threshold, bc);
    read_opt(b, "llr_threshold", c.baselines.llr_threshold, bc);
    read_opt(b, "n", c.baselines.n, bc);
    read_opt(b, "step_threshold", c.baselines.step_threshold, bc);
    read_opt(b, "mean_threshold", c.baselines.mean_threshold, bc);
  }
  if (j.contains("geometric"))
    c.geometric = geometric_params_from_json(j.at("geometric"));
  if (j.contains("metrics")) {
    const auto& m = j.at("metrics");
    const std::string mc = "config.metrics";
    check_keys(m, {"k", "tolerance", "gap_tolerance", "averaging", "gt"}, mc);
    read_opt(m, "k", c.metrics.k, mc);
    read_opt(m, "tolerance", c.metrics.tolerance, mc);
    read_opt(m, "gap_tolerance", c.metrics.gap_tolerance, mc);
    if (m.contains("averaging")) {
      std::string a;
      read_opt(m, "averaging", a, mc);
      if (a == "macro")
        c.metrics.averaging = Averaging::macro;
      else if (a == "micro")
        c.metrics.averaging = Averaging::micro;
      else
        throw ConfigError(mc + ".averaging: expected macro or micro");
    }
    if (m.contains("gt")) {
      const auto& g = m.at("gt");
      const std::string gc = mc + ".gt";
      check_keys(g, {"translation_gate", "rotation_gate_deg", "min_separation", "suppress_near_duplicates", "gap_tolerance"}, gc);
      read_opt(g, "translation_gate", c.metrics.gt.translation_gate, gc);
      read_opt(g, "rotation_gate_deg", c.metrics.gt.rotation_gate_deg, gc);
      read_opt(g, "min_separation", c.metrics.gt.min_separation, gc);
      read_opt(g, "suppress_near_duplicates", c.metrics.gt.suppress_near_duplicates, gc);
      read_opt(g, "gap_tolerance", c.metrics.gt.gap_tolerance, gc);
    }
  }
  if (j.contains("pgo")) {
    const auto& p = j.at("pgo");
    const std::string pc = "config.pgo";
    check_keys(p,
               {"enabled",
                "stride",
                "noise_trans",
                "noise_rot_deg",
                "basin_trans",
                "basin_rot_deg",
                "odom_information",
                "loop_information",
                "edge_seed",
                "max_iters",
                "tol",
                "huber",
                "huber_delta",
                "rpe_delta"},
               pc);
    read_opt(p, "enabled", c.pgo.enabled, pc);
    read_opt(p, "stride", c.pgo.edges.stride, pc);
    read_opt(p, "noise_trans", c.pgo.edges.noise_trans, pc);
    read_opt(p, "noise_rot_deg", c.pgo.edges.noise_rot_deg, pc);
    read_opt(p, "basin_trans", c.pgo.edges.basin_trans, pc);
    read_opt(p, "basin_rot_deg", c.pgo.edges.basin_rot_deg, pc);
    if (p.contains("odom_information"))
      c.pgo.edges.odom_information = information_from_json(p.at("odom_information"), pc + ".odom_information");
    if (p.contains("loop_information"))
      c.pgo.edges.loop_information = information_from_json(p.at("loop_information"), pc + ".loop_information");
    read_opt(p, "edge_seed", c.pgo.edges.seed, pc);
    read_opt(p, "max_iters", c.pgo.optimize.max_iters, pc);
    read_opt(p, "tol", c.pgo.optimize.tol, pc);
    read_opt(p, "huber", c.pgo.optimize.huber_loops, pc);
    read_opt(p, "huber_delta", c.pgo.optimize.huber_delta, pc);
    read_opt(p, "rpe_delta", c.pgo.rpe_delta, pc);
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return run_config_from_json(j);
}

std::string config_hash(const RunConfig& cfg)
{
  const std::string s = to_json(cfg).dump();
  return hex64(fnv1a(0xcbf29ce484222325ULL, s.data(), s.size()));
}

std::vector<SyntheticWorld> load_sequences(const RunConfig& cfg)
{
  std::vector<SyntheticWorld> worlds;
  if (cfg.input.world_dir) {
    worlds.push_back(load_world(*cfg.input.world_dir));
  } else {
    for (std::size_t s = 0; s < cfg.input.n_sequences; ++s) {
      WorldConfig wc = cfg.input.synthetic;
      wc.seed = hash_key({cfg.seed, cfg.input.synthetic.seed, s});
      wc.gt = cfg.metrics.gt;
      worlds.push_back(generate_world(wc));
    }
  }
  if (cfg.metric)
    for (auto& w : worlds)
      w.descriptor_table.set_metric(*cfg.metric);
  return worlds;
}

std::vector<DensityPair> fit_densities(const RunConfig& cfg, const std::vector<SyntheticWorld>& worlds)
{
  const DensityFitOptions fit{cfg.density.grid_size, cfg.density.floor};
  const DatasetOptions ds{cfg.density.alias_fraction, cfg.density.seed};
  std::vector<DensityPair> out;
  if (cfg.density.per_sequence) {
    for (const auto& w : worlds)
      out.push_back(fit_density_pair(sample_distance_datasets(w, cfg.density.n_per_class, ds), fit));
    return out;
  }
  std::vector<DistanceSample> pooled;
  for (const auto& w : worlds) {
    const auto s = sample_distance_datasets(w, cfg.density.n_per_class, ds);
    pooled.insert(pooled.end(), s.begin(), s.end());
  }
  out.push_back(fit_density_pair(pooled, fit));
  return out;
}

std::vector<PairEvidence> build_evidence(const RunConfig& cfg, const DescriptorTable& table, const DensityPair& dp)
{
  TrackerConfig tc = cfg.tracker;
  tc.n_max = std::max(cfg.sprt.n_max, cfg.baselines.m);
  const bool rigid = cfg.baselines.rigid_stream;
  std::vector<std::vector<PairEvidence>> per_query(table.size());
  parallel_for(table.size(), cfg.workers, [&](std::size_t q) {
    const CandidateSet cs = retrieve(table, q, cfg.retrieval);
    for (const auto& c : cs.candidates) {
      PairEvidence ev;
      ev.query = q;
      ev.candidate = c.index;
      ev.x0 = c.distance;
      ev.stream = build_stream(table, dp, q, c.index, tc);
      if (rigid)
        ev.rigid = build_rigid_stream(table, q, c.index, tc.n_max);
      per_query[q].push_back(std::move(ev));
    }
  });
  std::vector<PairEvidence> out;
  for (auto& v : per_query)
    for (auto& e : v)
      out.push_back(std::move(e));
  return out;
}

std::string evidence_hash(const std::vector<PairEvidence>& evidence)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto add_stream = [&](const DistanceStream& s) {
    h = fnv_value(h, static_cast<std::uint64_t>(s.size()));
    for (const auto& o : s.observations) {
      h = fnv_value(h, static_cast<std::uint64_t>(o.step));
      h = fnv_value(h, static_cast<std::int64_t>(o.offset));
      h = fnv_value(h, std::bit_cast<std::uint64_t>(o.distance));
      h = fnv_value(h, std::bit_cast<std::uint64_t>(o.nu));
      h = fnv_value(h, static_cast<std::int64_t>(o.delta));
    }
  };
  for (const auto& e : evidence) {
    h = fnv_value(h, static_cast<std::uint64_t>(e.query));
    h = fnv_value(h, static_cast<std::uint64_t>(e.candidate));
    h = fnv_value(h, std::bit_cast<std::uint64_t>(e.x0));
    add_stream(e.stream);
    add_stream(e.rigid);
  }
  return hex64(h);
}

SequenceOutcome evaluate_sequence(const RunConfig& cfg,
                                  const VerifierPolicy& policy,
                                  const SequenceData& seq,
                                  const DensityPair& dp,
                                  bool with_pgo)
{
  SequenceOutcome out;
  out.verdicts.reserve(seq.evidence.size());
  for (const auto& ev : seq.evidence)
    out.verdicts.push_back(evaluate_policy(policy, ev, dp, &seq.world));

  WindowedResolver resolver(cfg.window_cap, cfg.sprt.n_max);
  for (std::size_t i = 0; i < out.verdicts.size(); ++i) {
    const auto& v = out.verdicts[i];
    resolver.advance_to(v.query);
    if (v.decision == Decision::accept)
      resolver.add(*v.committed, i);
  }
  resolver.finish();
  out.retained = resolver.retained();
  out.cross_window_overlaps = resolver.cross_window_overlaps();

  std::vector<IndexPair> anchors;
  for (const auto& v : out.verdicts)
    if (v.decision == Decision::accept)
      anchors.emplace_back(v.query, v.candidate);
  std::vector<IndexPair> steps;
  std::vector<LoopSegment> segments;
  for (const auto& e : out.retained) {
    steps.insert(steps.end(), e.segment.steps.begin(), e.segment.steps.end());
    segments.push_back(e.segment);
  }
  const auto predicted = group_runs(steps, cfg.metrics.gap_tolerance);

  const auto& m = cfg.metrics;
  const PairwiseResult pw = pairwise_pr(anchors, seq.gt, m.tolerance);
  const KhitResult kh = khit_pr(predicted, seq.gt, m.k, m.gap_tolerance, m.tolerance);
  EvalReport& r = out.report;
  r.sequence = seq.name;
  r.descriptor = seq.world.places.empty() ? "imported" : to_string(seq.world.config.descriptor);
  r.policy = to_string(policy.kind);
  r.pairwise = pw.score;
  r.tp = pw.tp;
  r.fp = pw.fp;
  r.fn = pw.fn;
  r.gt_pairs = pw.gt_pairs;
  r.khit = kh.score;
  r.k = kh.k;
  r.predicted_segments = kh.predicted_segments;
  r.gt_segments = kh.gt_segments;
  r.k_hits = kh.khit_predicted;
  r.gt_k_hits = kh.khit_gt;
  r.decision_tier = decision_tier(out.verdicts, seq.gt, m.tolerance);

  if (with_pgo && cfg.pgo.enabled && seq.world.size() > 0) {
    out.graph = build_graph(seq.world, segments, cfg.pgo.edges);
    const OptimizeResult opt = optimize(out.graph, cfg.pgo.optimize);
    out.optimized = opt.poses;
    const TrajectoryError err = ate_rpe(opt.poses, seq.world.gt_poses, cfg.pgo.rpe_delta);
    r.ate = err.ate_rmse;
    r.rpe = err.rpe_rmse;
    r.ate_odometry = ate_rpe(seq.world.odom_poses, seq.world.gt_poses, cfg.pgo.rpe_delta).ate_rmse;
  }
  return out;
}

VerifierPolicy tune_policy(const RunConfig& cfg, const VerifierPolicy& base, const SequenceData& seq, const DensityPair& dp)
{
  const auto grid = tuning_grid(base, seq.evidence, dp);
  VerifierPolicy best = grid.front();
  double best_f1 = -1.0;
  for (const auto& p : grid) {
    const double f1 = evaluate_sequence(cfg, p, seq, dp, false).report.khit.f1.value_or(0.0);
    if (f1 > best_f1) {
      best_f1 = f1;
      best = p;
    }
  }
  return best;
}

ExperimentResult run_experiment(const RunConfig& cfg, bool artifacts)
{
  cfg.validate();
  ExperimentResult res;
  res.config_hash = config_hash(cfg);
  res.seed = cfg.seed;
  std::string stage = "load";
  try {
    const auto worlds = load_sequences(cfg);
    stage = "fit";
    res.densities = fit_densities(cfg, worlds);
    stage = "front end";
    for (std::size_t s = 0; s < worlds.size(); ++s) {
      SequenceData sd;
      sd.name = "seq" + std::to_string(s);
      sd.world = worlds[s];
      sd.gt = label_ground_truth(sd.world.gt_poses, cfg.metrics.gt);
      sd.density_index = cfg.density.per_sequence ? s : 0;
      sd.evidence = build_evidence(cfg, sd.world.descriptor_table, res.densities[sd.density_index]);
      res.sequences.push_back(std::move(sd));
    }
    if (res.sequences.size() >= 2) {
      res.tuning_index = 0;
      for (std::size_t s = 1; s < res.sequences.size(); ++s)
        res.eval_indices.push_back(s);
    } else {
      res.tuning_index = 0;
      res.eval_indices.push_back(0);
    }

    for (auto kind : cfg.policies) {
      stage = "policy " + to_string(kind);
      PolicyOutcome po;
      po.policy = make_policy(cfg, kind);
      if (cfg.baselines.tune && is_baseline(kind)) {
        const auto& tseq = res.sequences[*res.tuning_index];
        po.policy = tune_policy(cfg, po.policy, tseq, res.densities[tseq.density_index]);
      }
      std::vector<EvalReport> reports;
      for (std::size_t s : res.eval_indices) {
        const auto& seq = res.sequences[s];
        po.sequences.push_back(evaluate_sequence(cfg, po.policy, seq, res.densities[seq.density_index], true));
        reports.push_back(po.sequences.back().report);
      }
      po.average = average_reports(reports, cfg.metrics.averaging);
      res.outcomes.push_back(std::move(po));
    }
    if (artifacts) {
      stage = "artifacts";
      write_artifacts(cfg, res);
    }
  } catch (const Error& e) {
    if (artifacts && stage != "artifacts") {
      std::filesystem::create_directories(cfg.output_dir);
      std::ofstream out(std::filesystem::path(cfg.output_dir) / "report.json");
      out << json{{"complete", false}, {"config_hash", res.config_hash}, {"seed", cfg.seed}, {"error", e.what()}}.dump(2)
          << '\n';
    }
    throw Error("run_experiment [" + stage + "]: " + e.what());
  }
  return res;
}

void write_artifacts(const RunConfig& cfg, const ExperimentResult& res)
{
  namespace fs = std::filesystem;
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);

  json front = json::array();
  for (const auto& s : res.sequences)
    front.push_back({{"sequence", s.name}, {"hash", evidence_hash(s.evidence)}, {"pairs", s.evidence.size()}});
  json policies = json::array();
  for (const auto& po : res.outcomes) {
    json seqs = json::array();
    std::size_t cross = 0;
    for (const auto& so : po.sequences) {
      seqs.push_back(to_json(so.report));
      cross += so.cross_window_overlaps;
    }
    policies.push_back({{"policy", to_string(po.policy.kind)},
                        {"params", to_json(po.policy)},
                        {"average", to_json(po.average)},
                        {"sequences", seqs},
                        {"cross_window_overlaps", cross}});
  }
  const json report{{"complete", true},
                    {"version", kConfigVersion},
                    {"config_hash", res.config_hash},
                    {"seed", res.seed},
                    {"front_end", front},
                    {"tuning_sequence",
                     res.tuning_index ? json(res.sequences[*res.tuning_index].name) : json(nullptr)},
                    {"policies", policies},
                    {"config", to_json(cfg)}};
  {
    std::ofstream out(dir / "report.json");
    if (!out)
      throw FormatError("cannot write report.json in " + cfg.output_dir);
    out << report.dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "report.csv");
    out << "# config_hash=" << res.config_hash << " seed=" << res.seed << '\n';
    out << report_csv_header() << '\n';
    for (const auto& po : res.outcomes) {
      for (const auto& so : po.sequences)
        out << report_csv_row(so.report) << '\n';
      out << report_csv_row(po.average) << '\n';
    }
  }
  {
    std::ofstream out(dir / "verdicts.jsonl");
    out << json{{"type", "header"}, {"config_hash", res.config_hash}, {"seed", res.seed}, {"version", kConfigVersion}}.dump()
        << '\n';
    for (const auto& po : res.outcomes) {
      const std::string name = to_string(po.policy.kind);
      for (std::size_t k = 0; k < po.sequences.size(); ++k) {
        const auto& so = po.sequences[k];
        const std::string seq = res.sequences[res.eval_indices[k]].name;
        for (const auto& v : so.verdicts) {
          json j = to_json(v);
          j["type"] = "verdict";
          j["policy"] = name;
          j["sequence"] = seq;
          out << j.dump() << '\n';
        }
        for (const auto& e : so.retained) {
          json j{{"type", "segment"},
                 {"resolved", true},
                 {"policy", name},
                 {"sequence", seq},
                 {"verdict", e.tag},
                 {"segment", to_json(e.segment)}};
          out << j.dump() << '\n';
        }
      }
    }
  }
  if (!res.outcomes.empty() && !res.outcomes.front().sequences.empty()) {
    const auto& so = res.outcomes.front().sequences.front();
    if (!so.optimized.empty()) {
      save_trajectory_csv(so.optimized, (dir / "trajectory_optimized.csv").string());
      save_g2o(so.graph, (dir / "graph.g2o").string());
    }
  }
}

std::vector<SweepRow> sweep(const RunConfig& base, const std::string& axis, const std::vector<double>& values)
{
  std::vector<SweepRow> rows;
  if (values.empty())
    return rows;
  const json base_json = to_json(base);
  std::string ptr = "/" + axis;
  std::replace(ptr.begin(), ptr.end(), '.', '/');
  const json::json_pointer jp(ptr);
  if (!base_json.contains(jp) || !base_json.at(jp).is_number())
    throw ConfigError("sweep: '" + axis + "' is not a numeric config field");
  const bool integral = base_json.at(jp).is_number_integer();
  for (double v : values) {
    json j = base_json;
    if (integral) {
      if (v < 0.0 || v != std::floor(v))
        throw ConfigError("sweep: '" + axis + "' takes non-negative integers");
      j[jp] = static_cast<std::uint64_t>(v);
    } else {
      j[jp] = v;
    }
    const RunConfig cfg = run_config_from_json(j);
    const ExperimentResult r = run_experiment(cfg, false);
    SweepRow row;
    row.value = v;
    for (const auto& po : r.outcomes)
      row.averages.push_back(po.average);
    rows.push_back(std::move(row));
  }
  return rows;
}

} // namespace seqsprt
