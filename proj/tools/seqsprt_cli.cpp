#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "seqsprt/error.hpp"
#include "seqsprt/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace seqsprt;

namespace {

json read_json(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw FormatError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j)
{
  std::ofstream out(path);
  if (!out)
    throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// "a.b.c=value": value is parsed as JSON, falling back to a plain string.
void apply_override(json& j, const std::string& assignment)
{
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("--set expects path=value, got '" + assignment + "'");
  std::string path = "/" + assignment.substr(0, eq);
  std::replace(path.begin(), path.end(), '.', '/');
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  const json::json_pointer ptr(path);
  if (!j.contains(ptr))
    throw ConfigError("--set: unknown config path '" + assignment.substr(0, eq) + "'");
  j[ptr] = value;
}

RunConfig build_config(const std::string& config_path, const std::vector<std::string>& sets)
{
  json j = config_path.empty() ? to_json(RunConfig{}) : to_json(load_run_config(config_path));
  for (const auto& s : sets)
    apply_override(j, s);
  return run_config_from_json(j);
}

WorldConfig build_world_config(const std::string& path, const std::vector<std::string>& sets)
{
  json j = path.empty() ? to_json(WorldConfig{}) : read_json(path);
  if (!path.empty())
    j = to_json(world_config_from_json(j));
  for (const auto& s : sets)
    apply_override(j, s);
  return world_config_from_json(j);
}

std::string fmt(const std::optional<double>& v)
{
  if (!v)
    return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

void print_summary(const std::vector<EvalReport>& rows)
{
  std::printf("%-14s %8s %8s %8s %8s %8s %8s %8s %8s\n", "policy", "P@Khit", "R@Khit", "F1@Khit", "Prec", "Rec", "F1",
              "ATE", "RPE");
  for (const auto& r : rows)
    std::printf("%-14s %8s %8s %8s %8s %8s %8s %8s %8s\n", r.policy.c_str(), fmt(r.khit.precision).c_str(),
                fmt(r.khit.recall).c_str(), fmt(r.khit.f1).c_str(), fmt(r.pairwise.precision).c_str(),
                fmt(r.pairwise.recall).c_str(), fmt(r.pairwise.f1).c_str(), fmt(r.ate).c_str(), fmt(r.rpe).c_str());
}

SequenceData single_sequence(const RunConfig& cfg, const std::string& world_dir, const DensityPair& dp)
{
  SequenceData sd;
  sd.name = fs::path(world_dir).filename().string();
  sd.world = load_world(world_dir);
  if (cfg.metric)
    sd.world.descriptor_table.set_metric(*cfg.metric);
  sd.gt = label_ground_truth(sd.world.gt_poses, cfg.metrics.gt);
  sd.evidence = build_evidence(cfg, sd.world.descriptor_table, dp);
  return sd;
}

std::vector<LoopSegment> read_segments(const std::string& path)
{
  const json j = read_json(path);
  if (!j.is_array())
    throw FormatError(path + ": expected an array of segments");
  std::vector<LoopSegment> out;
  for (const auto& s : j)
    out.push_back(loop_segment_from_json(s));
  return out;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Sequential loop-closure verification toolkit"};
  app.require_subcommand(1);

  // generate
  std::string gen_config, gen_out;
  std::uint64_t gen_seed = 0;
  std::vector<std::string> gen_sets;
  auto* gen = app.add_subcommand("generate", "Generate a synthetic world directory");
  gen->add_option("--config", gen_config, "WorldConfig JSON");
  gen->add_option("--seed", gen_seed, "World seed")->required();
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--set", gen_sets, "Override a WorldConfig field, path=value");

  // fit
  std::string fit_world, fit_out;
  std::size_t fit_n = 300;
  double fit_alias = 0.5;
  std::uint64_t fit_seed = 7;
  std::size_t fit_grid = 512;
  auto* fit = app.add_subcommand("fit", "Fit the H1/H0 distance densities of a world");
  fit->add_option("--world", fit_world, "World directory")->required();
  fit->add_option("--out", fit_out, "Densities JSON")->required();
  fit->add_option("--n-per-class", fit_n, "Samples per hypothesis");
  fit->add_option("--alias-fraction", fit_alias, "Share of aliased pairs among H0 samples");
  fit->add_option("--grid-size", fit_grid, "Evaluation grid nodes");
  fit->add_option("--seed", fit_seed, "Sampling seed");

  // verify
  std::string ver_world, ver_dens, ver_policy = "Seq-SPRT", ver_out, ver_config;
  std::vector<std::string> ver_sets;
  auto* ver = app.add_subcommand("verify", "Verify every retrieved pair of a world under one policy");
  ver->add_option("--world", ver_world, "World directory")->required();
  ver->add_option("--densities", ver_dens, "Densities JSON")->required();
  ver->add_option("--policy", ver_policy, "Policy name");
  ver->add_option("--config", ver_config, "RunConfig JSON for front-end and policy parameters");
  ver->add_option("--set", ver_sets, "Override a RunConfig field, path=value");
  ver->add_option("--out", ver_out, "Output directory")->required();

  // pgo
  std::string pgo_world, pgo_segments, pgo_out, pgo_config;
  std::vector<std::string> pgo_sets;
  auto* pgo = app.add_subcommand("pgo", "Optimize the pose graph of a world with resolved segments");
  pgo->add_option("--world", pgo_world, "World directory")->required();
  pgo->add_option("--segments", pgo_segments, "Resolved segments JSON")->required();
  pgo->add_option("--config", pgo_config, "RunConfig JSON for PGO parameters");
  pgo->add_option("--set", pgo_sets, "Override a RunConfig field, path=value");
  pgo->add_option("--out", pgo_out, "Output directory")->required();

  // evaluate
  std::string ev_world, ev_verdicts, ev_out, ev_config;
  std::vector<std::string> ev_sets;
  auto* ev = app.add_subcommand("evaluate", "Score a verdict log against a world's ground truth");
  ev->add_option("--world", ev_world, "World directory")->required();
  ev->add_option("--verdicts", ev_verdicts, "verdicts.jsonl from verify")->required();
  ev->add_option("--config", ev_config, "RunConfig JSON for metric parameters");
  ev->add_option("--set", ev_sets, "Override a RunConfig field, path=value");
  ev->add_option("--out", ev_out, "EvalReport JSON (stdout when omitted)");

  // run
  std::string run_config_path, run_out;
  std::uint64_t run_seed = 0;
  std::vector<std::string> run_sets;
  auto* run = app.add_subcommand("run", "Run every stage and write the report artifacts");
  run->add_option("--config", run_config_path, "RunConfig JSON");
  run->add_option("--seed", run_seed, "Run seed")->required();
  run->add_option("--out", run_out, "Output directory (overrides output_dir)");
  run->add_option("--set", run_sets, "Override a RunConfig field, path=value");

  // sweep
  std::string sw_config, sw_axis, sw_out;
  std::vector<double> sw_values;
  std::uint64_t sw_seed = 1;
  std::vector<std::string> sw_sets;
  auto* sw = app.add_subcommand("sweep", "Repeat a run over values of one numeric config field");
  sw->add_option("--config", sw_config, "RunConfig JSON");
  sw->add_option("--axis", sw_axis, "Dotted config path, e.g. sprt.alpha")->required();
  sw->add_option("--values", sw_values, "Values to sweep")->expected(0, -1);
  sw->add_option("--seed", sw_seed, "Run seed");
  sw->add_option("--set", sw_sets, "Override a RunConfig field, path=value");
  sw->add_option("--out", sw_out, "Sweep table CSV (stdout when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      WorldConfig wc = build_world_config(gen_config, gen_sets);
      wc.seed = gen_seed;
      const SyntheticWorld w = generate_world(wc);
      save_world(w, gen_out);
      std::printf("%zu keyframes, %zu loop pairs, %zu aliased pairs -> %s\n", w.size(), w.labels.loop_pairs.size(),
                  w.alias_pairs.size(), gen_out.c_str());
    } else if (*fit) {
      const SyntheticWorld w = load_world(fit_world);
      const auto samples = sample_distance_datasets(w, fit_n, {fit_alias, fit_seed});
      const DensityPair dp = fit_density_pair(samples, {fit_grid, 1e-9});
      std::ofstream out(fit_out);
      if (!out)
        throw FormatError("cannot write " + fit_out);
      out << to_json(dp).dump() << '\n';
      std::printf("KL(f1||f0) = %.4f nats\n", dp.kl_divergence_h1_h0());
    } else if (*ver) {
      const RunConfig cfg = build_config(ver_config, ver_sets);
      const DensityPair dp = density_pair_from_json(read_json(ver_dens));
      const SequenceData seq = single_sequence(cfg, ver_world, dp);
      const VerifierPolicy policy = make_policy(cfg, policy_kind_from_string(ver_policy));
      const SequenceOutcome so = evaluate_sequence(cfg, policy, seq, dp, false);
      fs::create_directories(ver_out);
      std::ofstream log(fs::path(ver_out) / "verdicts.jsonl");
      log << json{{"type", "header"}, {"config_hash", config_hash(cfg)}, {"seed", cfg.seed}, {"policy", ver_policy}}.dump()
          << '\n';
      for (const auto& v : so.verdicts) {
        json j = to_json(v);
        j["type"] = "verdict";
        log << j.dump() << '\n';
      }
      json segs = json::array();
      for (const auto& e : so.retained) {
        log << json{{"type", "segment"}, {"resolved", true}, {"verdict", e.tag}, {"segment", to_json(e.segment)}}.dump()
            << '\n';
        segs.push_back(to_json(e.segment));
      }
      write_json(fs::path(ver_out) / "segments.json", segs);
      std::printf("%zu verdicts, %zu resolved segments -> %s\n", so.verdicts.size(), so.retained.size(), ver_out.c_str());
    } else if (*pgo) {
      const RunConfig cfg = build_config(pgo_config, pgo_sets);
      const SyntheticWorld w = load_world(pgo_world);
      const auto segments = read_segments(pgo_segments);
      const PoseGraph2 g = build_graph(w, segments, cfg.pgo.edges);
      const OptimizeResult r = optimize(g, cfg.pgo.optimize);
      const TrajectoryError err = ate_rpe(r.poses, w.gt_poses, cfg.pgo.rpe_delta);
      const TrajectoryError odo = ate_rpe(w.odom_poses, w.gt_poses, cfg.pgo.rpe_delta);
      fs::create_directories(pgo_out);
      save_trajectory_csv(r.poses, (fs::path(pgo_out) / "trajectory_optimized.csv").string());
      save_g2o(g, (fs::path(pgo_out) / "graph.g2o").string());
      write_json(fs::path(pgo_out) / "pgo.json",
                 {{"ate", err.ate_rmse},
                  {"rpe", err.rpe_rmse},
                  {"ate_odometry", odo.ate_rmse},
                  {"chi2_initial", r.initial_chi2},
                  {"chi2", r.chi2},
                  {"iterations", r.iterations},
                  {"loop_edges", g.loop_edges.size()}});
      std::printf("ATE %.4f m (odometry %.4f m), RPE %.4f m, chi2 %.3f -> %.3f\n", err.ate_rmse, odo.ate_rmse,
                  err.rpe_rmse, r.initial_chi2, r.chi2);
    } else if (*ev) {
      const RunConfig cfg = build_config(ev_config, ev_sets);
      const SyntheticWorld w = load_world(ev_world);
      const GroundTruth gt = label_ground_truth(w.gt_poses, cfg.metrics.gt);
      std::ifstream in(ev_verdicts);
      if (!in)
        throw FormatError("cannot open " + ev_verdicts);
      std::vector<SprtVerdict> verdicts;
      std::vector<IndexPair> steps;
      std::string policy = "unknown";
      for (std::string line; std::getline(in, line);) {
        if (line.empty())
          continue;
        json j;
        try {
          j = json::parse(line);
        } catch (const json::exception& e) {
          throw FormatError(ev_verdicts + ": " + e.what());
        }
        const std::string type = j.value("type", "");
        if (type == "header") {
          policy = j.value("policy", policy);
        } else if (type == "verdict") {
          j.erase("type");
          j.erase("policy");
          j.erase("sequence");
          verdicts.push_back(verdict_from_json(j));
        } else if (type == "segment") {
          const LoopSegment s = loop_segment_from_json(j.at("segment"));
          steps.insert(steps.end(), s.steps.begin(), s.steps.end());
        } else {
          throw FormatError(ev_verdicts + ": unknown record type '" + type + "'");
        }
      }
      std::vector<IndexPair> anchors;
      for (const auto& v : verdicts)
        if (v.decision == Decision::accept)
          anchors.emplace_back(v.query, v.candidate);
      const auto& m = cfg.metrics;
      const PairwiseResult pw = pairwise_pr(anchors, gt, m.tolerance);
      const KhitResult kh = khit_pr(group_runs(steps, m.gap_tolerance), gt, m.k, m.gap_tolerance, m.tolerance);
      EvalReport r;
      r.sequence = fs::path(ev_world).filename().string();
      r.descriptor = to_string(w.config.descriptor);
      r.policy = policy;
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
      r.decision_tier = decision_tier(verdicts, gt, m.tolerance);
      if (ev_out.empty())
        std::cout << to_json(r).dump(2) << '\n';
      else
        write_json(ev_out, to_json(r));
    } else if (*run) {
      RunConfig cfg = build_config(run_config_path, run_sets);
      cfg.seed = run_seed;
      if (!run_out.empty())
        cfg.output_dir = run_out;
      const ExperimentResult res = run_experiment(cfg, true);
      std::vector<EvalReport> rows;
      for (const auto& po : res.outcomes)
        rows.push_back(po.average);
      print_summary(rows);
      std::printf("config %s, seed %llu -> %s\n", res.config_hash.c_str(), static_cast<unsigned long long>(res.seed),
                  cfg.output_dir.c_str());
    } else if (*sw) {
      RunConfig cfg = build_config(sw_config, sw_sets);
      cfg.seed = sw_seed;
      const auto rows = sweep(cfg, sw_axis, sw_values);
      std::ostringstream table;
      table << "value," << report_csv_header() << '\n';
      for (const auto& row : rows)
        for (const auto& r : row.averages)
          table << row.value << ',' << report_csv_row(r) << '\n';
      if (sw_out.empty()) {
        std::cout << table.str();
      } else {
        std::ofstream out(sw_out);
        if (!out)
          throw FormatError("cannot write " + sw_out);
        out << table.str();
      }
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
