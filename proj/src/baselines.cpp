#include "seqsprt/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "json_util.hpp"
#include "seqsprt/error.hpp"
#include "seqsprt/random.hpp"

namespace seqsprt {

namespace {

const std::vector<std::pair<PolicyKind, std::string>>& policy_names()
{
  static const std::vector<std::pair<PolicyKind, std::string>> names{
    {PolicyKind::single, "Single"},
    {PolicyKind::single_geom, "Single+Geom"},
    {PolicyKind::single_llr, "Single-LLR"},
    {PolicyKind::n_of_m, "N-of-M"},
    {PolicyKind::fixed_batch, "FixedBatch"},
    {PolicyKind::seq_sprt, "Seq-SPRT"},
    {PolicyKind::seq_sprt_geom, "Seq-SPRT+Geom"},
  };
  return names;
}

} // namespace

std::string to_string(PolicyKind k)
{
  for (const auto& [kind, name] : policy_names())
    if (kind == k)
      return name;
  return "Seq-SPRT";
}

PolicyKind policy_kind_from_string(const std::string& s)
{
  for (const auto& [kind, name] : policy_names())
    if (name == s)
      return kind;
  throw ConfigError("unknown policy '" + s + "'");
}

const std::vector<PolicyKind>& all_policies()
{
  static const std::vector<PolicyKind> all{PolicyKind::single,
                                           PolicyKind::single_geom,
                                           PolicyKind::single_llr,
                                           PolicyKind::n_of_m,
                                           PolicyKind::fixed_batch,
                                           PolicyKind::seq_sprt,
                                           PolicyKind::seq_sprt_geom};
  return all;
}

GeometricResult geometric_check(std::size_t q, std::size_t t, const SyntheticWorld& world, const GeometricCheckParams& p)
{
  if (q >= world.size() || t >= world.size())
    throw DomainError("geometric_check: keyframe outside the world");
  const Pose2 rel = world.gt_poses[q].between(world.gt_poses[t]);
  const double d = rel.translation_norm();
  const double r = std::abs(rel.theta);
  const double gate_rot = deg2rad(p.gate_rot_deg);
  auto rng = keyed_rng({p.seed, q, t});
  const double noise = p.sigma_fit * standard_normal(rng);

  GeometricResult res;
  if (d <= p.gate_trans && r <= gate_rot) {
    res.fitness = 1.0 - 0.5 * std::max(d / p.gate_trans, r / gate_rot) + noise;
  } else if (world.is_alias(q, t)) {
    res.fitness = (uniform01(rng) < p.p_alias ? p.alias_fitness : p.fitness_floor) + noise;
  } else {
    res.fitness = p.fitness_floor + noise;
  }
  res.decision = res.fitness > p.fitness_threshold ? Decision::accept : Decision::reject;
  return res;
}

Decision verify_single(double x0, double threshold) { return x0 <= threshold ? Decision::accept : Decision::reject; }

Decision verify_single_llr(double x0, const DensityPair& dp, double threshold)
{
  return dp.llr(x0) >= threshold ? Decision::accept : Decision::reject;
}

Decision verify_n_of_m(const DistanceStream& stream, const DensityPair& dp, std::size_t n, std::size_t m, double step_threshold)
{
  if (n > m)
    throw DomainError("verify_n_of_m: need N <= M");
  if (stream.size() < m)
    return Decision::reject;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < m; ++i)
    if (dp.llr(stream.observations[i].distance) > step_threshold)
      ++hits;
  return hits >= n ? Decision::accept : Decision::reject;
}

Decision verify_fixed_batch(const DistanceStream& stream, const DensityPair& dp, std::size_t m, double mean_threshold)
{
  if (m < 1)
    throw DomainError("verify_fixed_batch: M must be >= 1");
  if (stream.size() < m)
    return Decision::reject;
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    sum += dp.llr(stream.observations[i].distance);
  return sum / static_cast<double>(m) >= mean_threshold ? Decision::accept : Decision::reject;
}

void VerifierPolicy::validate() const
{
  if (!std::isfinite(score_threshold) || !std::isfinite(llr_threshold) || !std::isfinite(step_threshold) ||
      !std::isfinite(mean_threshold))
    throw ConfigError("policy: thresholds must be finite");
  if (m < 1 || n < 1 || n > m)
    throw ConfigError("policy: need 1 <= N <= M");
  try {
    sprt.validate();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("policy.sprt: ") + e.what());
  }
  if (!(geometric.gate_trans > 0.0) || !(geometric.gate_rot_deg > 0.0) || geometric.sigma_fit < 0.0 ||
      geometric.p_alias < 0.0 || geometric.p_alias > 1.0)
    throw ConfigError("policy.geometric: invalid oracle parameters");
}

SprtConfig one_step_config(double llr_threshold)
{
  SprtConfig c;
  c.n_min = 1;
  c.n_max = 1;
  c.min_run = 1;
  c.accept_override = llr_threshold;
  c.reject_override = llr_threshold - 1e6;
  c.llr_step_threshold = -std::numeric_limits<double>::max();
  return c;
}

namespace {

SprtVerdict single_step_verdict(const PairEvidence& ev, double llr0, Decision d, double bonus)
{
  SprtVerdict v;
  v.query = ev.query;
  v.candidate = ev.candidate;
  v.decision = d;
  v.tau = 1;
  v.cumulative_llr = llr0;
  v.llr_history = {llr0};
  v.reason = VerdictReason::policy_threshold;
  if (d == Decision::accept) {
    LoopSegment s;
    s.query_span = {ev.query, ev.query};
    s.db_span = {ev.candidate, ev.candidate};
    s.llr_sum = llr0;
    s.length = 1;
    s.score = llr0 + bonus;
    s.steps = {{ev.query, ev.candidate}};
    v.committed = s;
  }
  return v;
}

SprtVerdict batch_verdict(const PairEvidence& ev, const DistanceStream& stream, const DensityPair& dp, std::size_t m, Decision d, double bonus, double evidence_threshold)
{
  SprtVerdict v;
  v.query = ev.query;
  v.candidate = ev.candidate;
  v.reason = VerdictReason::policy_threshold;
  const std::size_t used = std::min(m, stream.size());
  for (std::size_t i = 0; i < used; ++i)
    v.llr_history.push_back(dp.llr(stream.observations[i].distance));
  v.tau = std::max<std::size_t>(used, 1);
  v.cumulative_llr = std::accumulate(v.llr_history.begin(), v.llr_history.end(), 0.0);
  if (stream.size() < m) {
    v.decision = Decision::reject;
    v.reason = VerdictReason::insufficient_observations;
    return v;
  }
  v.decision = d;
  if (d == Decision::accept) {
    const Subsegment sub = max_subsegment(v.llr_history);
    v.committed = commit_segment(ev.query, ev.candidate, stream.observations, v.llr_history, sub, bonus, evidence_threshold);
  }
  return v;
}

void apply_geometry(SprtVerdict& v, const VerifierPolicy& p, const SyntheticWorld* world)
{
  if (v.decision != Decision::accept)
    return;
  if (!world)
    throw ConfigError("policy " + to_string(p.kind) + " needs a world with ground-truth poses");
  auto fail = [&] {
    v.decision = Decision::reject;
    v.reason = VerdictReason::geometric_check_failed;
    v.committed.reset();
  };
  if (geometric_check(v.query, v.candidate, *world, p.geometric).decision == Decision::reject)
    return fail();
  // Only registered pairs become constraints; the spans keep the extent of
  // the accepted hypothesis.
  auto& steps = v.committed->steps;
  std::erase_if(steps, [&](const IndexPair& s) {
    return geometric_check(s.first, s.second, *world, p.geometric).decision == Decision::reject;
  });
  if (steps.empty())
    return fail();
}

} // namespace

SprtVerdict evaluate_policy(const VerifierPolicy& p, const PairEvidence& ev, const DensityPair& dp, const SyntheticWorld* world)
{
  const double bonus = p.sprt.length_bonus;
  const DistanceStream& batch_stream = p.rigid_stream ? ev.rigid : ev.stream;
  SprtVerdict v;
  switch (p.kind) {
  case PolicyKind::single:
  case PolicyKind::single_geom:
    v = single_step_verdict(ev, dp.llr(ev.x0), verify_single(ev.x0, p.score_threshold), bonus);
    break;
  case PolicyKind::single_llr:
    v = single_step_verdict(ev, dp.llr(ev.x0), verify_single_llr(ev.x0, dp, p.llr_threshold), bonus);
    break;
  case PolicyKind::n_of_m:
    v = batch_verdict(ev, batch_stream, dp, p.m, verify_n_of_m(batch_stream, dp, p.n, p.m, p.step_threshold), bonus, p.sprt.llr_step_threshold);
    break;
  case PolicyKind::fixed_batch:
    v = batch_verdict(ev, batch_stream, dp, p.m, verify_fixed_batch(batch_stream, dp, p.m, p.mean_threshold), bonus, p.sprt.llr_step_threshold);
    break;
  case PolicyKind::seq_sprt:
  case PolicyKind::seq_sprt_geom: {
    StreamSource src(ev.stream);
    v = verify(src, dp, p.sprt);
    break;
  }
  }
  if (p.uses_geometry())
    apply_geometry(v, p, world);
  return v;
}

namespace {

std::vector<double> quantile_grid(std::vector<double> values)
{
  std::vector<double> out;
  if (values.empty())
    return out;
  std::sort(values.begin(), values.end());
  for (int k = 1; k < 50; ++k) {
    const double pos = static_cast<double>(k) / 50.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    out.push_back(values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]));
  }
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

} // namespace

std::vector<VerifierPolicy> tuning_grid(const VerifierPolicy& base, std::span<const PairEvidence> evidence, const DensityPair& dp)
{
  std::vector<VerifierPolicy> grid;
  switch (base.kind) {
  case PolicyKind::single:
  case PolicyKind::single_geom: {
    std::vector<double> xs;
    for (const auto& e : evidence)
      xs.push_back(e.x0);
    for (double thr : quantile_grid(xs)) {
      VerifierPolicy p = base;
      p.score_threshold = thr;
      grid.push_back(p);
    }
    break;
  }
  case PolicyKind::single_llr: {
    std::vector<double> ls;
    for (const auto& e : evidence)
      ls.push_back(dp.llr(e.x0));
    for (double thr : quantile_grid(ls)) {
      VerifierPolicy p = base;
      p.llr_threshold = thr;
      grid.push_back(p);
    }
    break;
  }
  case PolicyKind::n_of_m:
    for (std::size_t n = 1; n <= base.m; ++n)
      for (double st : {-1.0, 0.0, 1.0, 2.0}) {
        VerifierPolicy p = base;
        p.n = n;
        p.step_threshold = st;
        grid.push_back(p);
      }
    break;
  case PolicyKind::fixed_batch: {
    std::vector<double> means;
    for (const auto& e : evidence) {
      const auto& s = base.rigid_stream ? e.rigid : e.stream;
      if (s.size() < base.m)
        continue;
      double sum = 0.0;
      for (std::size_t i = 0; i < base.m; ++i)
        sum += dp.llr(s.observations[i].distance);
      means.push_back(sum / static_cast<double>(base.m));
    }
    for (double thr : quantile_grid(means)) {
      VerifierPolicy p = base;
      p.mean_threshold = thr;
      grid.push_back(p);
    }
    break;
  }
  case PolicyKind::seq_sprt:
  case PolicyKind::seq_sprt_geom:
    break;
  }
  if (grid.empty())
    grid.push_back(base);
  return grid;
}

std::vector<PrPoint> pr_sweep(std::span<const IndexPair> pairs,
                              std::span<const double> scores,
                              bool higher_is_better,
                              const GroundTruth& gt,
                              std::size_t tolerance)
{
  if (pairs.size() != scores.size())
    throw DomainError("pr_sweep: pairs and scores differ in length");
  const PairLookup lookup = gt.lookup();
  std::map<std::size_t, std::vector<std::pair<std::size_t, std::size_t>>> gt_by_query; // q -> (t, gt index)
  for (std::size_t g = 0; g < gt.loop_pairs.size(); ++g)
    gt_by_query[gt.loop_pairs[g].first].emplace_back(gt.loop_pairs[g].second, g);

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return higher_is_better ? scores[a] > scores[b] : scores[a] < scores[b];
  });

  std::vector<bool> covered(gt.loop_pairs.size(), false);
  std::size_t n_covered = 0, tp = 0;
  std::vector<PrPoint> curve;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto& [q, t] = pairs[order[r]];
    if (lookup.contains(pairs[order[r]], tolerance))
      ++tp;
    for (std::size_t qq = q >= tolerance ? q - tolerance : 0; qq <= q + tolerance; ++qq) {
      auto it = gt_by_query.find(qq);
      if (it == gt_by_query.end())
        continue;
      for (const auto& [tt, g] : it->second)
        if (!covered[g] && (tt > t ? tt - t : t - tt) <= tolerance) {
          covered[g] = true;
          ++n_covered;
        }
    }
    const bool last_of_tie = r + 1 == order.size() || scores[order[r + 1]] != scores[order[r]];
    if (!last_of_tie)
      continue;
    PrPoint p;
    p.threshold = scores[order[r]];
    p.predictions = r + 1;
    p.precision = static_cast<double>(tp) / static_cast<double>(r + 1);
    p.recall = gt.loop_pairs.empty() ? 0.0 : static_cast<double>(n_covered) / static_cast<double>(gt.loop_pairs.size());
    curve.push_back(p);
  }
  return curve;
}

nlohmann::json to_json(const SprtConfig& c)
{
  nlohmann::json j{{"alpha", c.alpha},
                   {"beta", c.beta},
                   {"n_min", c.n_min},
                   {"n_max", c.n_max},
                   {"min_run", c.min_run},
                   {"gap_tolerance", c.gap_tolerance},
                   {"llr_step_threshold", c.llr_step_threshold},
                   {"length_bonus", c.length_bonus}};
  j["accept_override"] = c.accept_override ? nlohmann::json(*c.accept_override) : nlohmann::json(nullptr);
  j["reject_override"] = c.reject_override ? nlohmann::json(*c.reject_override) : nlohmann::json(nullptr);
  return j;
}

SprtConfig sprt_config_from_json(const nlohmann::json& j)
{
  using detail::read_opt;
  const std::string ctx = "sprt";
  detail::check_keys(j,
                     {"alpha",
                      "beta",
                      "n_min",
                      "n_max",
                      "min_run",
                      "gap_tolerance",
                      "llr_step_threshold",
                      "length_bonus",
                      "accept_override",
                      "reject_override"},
                     ctx);
  SprtConfig c;
  read_opt(j, "alpha", c.alpha, ctx);
  read_opt(j, "beta", c.beta, ctx);
  read_opt(j, "n_min", c.n_min, ctx);
  read_opt(j, "n_max", c.n_max, ctx);
  read_opt(j, "min_run", c.min_run, ctx);
  read_opt(j, "gap_tolerance", c.gap_tolerance, ctx);
  read_opt(j, "llr_step_threshold", c.llr_step_threshold, ctx);
  read_opt(j, "length_bonus", c.length_bonus, ctx);
  for (const char* key : {"accept_override", "reject_override"}) {
    if (j.contains(key) && !j.at(key).is_null()) {
      double v = 0.0;
      read_opt(j, key, v, ctx);
      (std::string(key) == "accept_override" ? c.accept_override : c.reject_override) = v;
    }
  }
  try {
    c.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

nlohmann::json to_json(const GeometricCheckParams& g)
{
  return {{"gate_trans", g.gate_trans},
          {"gate_rot_deg", g.gate_rot_deg},
          {"sigma_fit", g.sigma_fit},
          {"p_alias", g.p_alias},
          {"fitness_threshold", g.fitness_threshold},
          {"fitness_floor", g.fitness_floor},
          {"alias_fitness", g.alias_fitness},
          {"seed", g.seed}};
}

GeometricCheckParams geometric_params_from_json(const nlohmann::json& j)
{
  using detail::read_opt;
  const std::string ctx = "geometric";
  detail::check_keys(
    j, {"gate_trans", "gate_rot_deg", "sigma_fit", "p_alias", "fitness_threshold", "fitness_floor", "alias_fitness", "seed"}, ctx);
  GeometricCheckParams g;
  read_opt(j, "gate_trans", g.gate_trans, ctx);
  read_opt(j, "gate_rot_deg", g.gate_rot_deg, ctx);
  read_opt(j, "sigma_fit", g.sigma_fit, ctx);
  read_opt(j, "p_alias", g.p_alias, ctx);
  read_opt(j, "fitness_threshold", g.fitness_threshold, ctx);
  read_opt(j, "fitness_floor", g.fitness_floor, ctx);
  read_opt(j, "alias_fitness", g.alias_fitness, ctx);
  read_opt(j, "seed", g.seed, ctx);
  return g;
}

nlohmann::json to_json(const VerifierPolicy& p)
{
  return {{"kind", to_string(p.kind)},
          {"score_threshold", p.score_threshold},
          {"llr_threshold", p.llr_threshold},
          {"n", p.n},
          {"m", p.m},
          {"step_threshold", p.step_threshold},
          {"mean_threshold", p.mean_threshold},
          {"rigid_stream", p.rigid_stream},
          {"sprt", to_json(p.sprt)},
          {"geometric", to_json(p.geometric)}};
}

VerifierPolicy verifier_policy_from_json(const nlohmann::json& j)
{
  using detail::read_opt;
  const std::string ctx = "policy";
  detail::check_keys(
    j,
    {"kind", "score_threshold", "llr_threshold", "n", "m", "step_threshold", "mean_threshold", "rigid_stream", "sprt", "geometric"},
    ctx);
  VerifierPolicy p;
  if (j.contains("kind")) {
    std::string s;
    read_opt(j, "kind", s, ctx);
    p.kind = policy_kind_from_string(s);
  }
  read_opt(j, "score_threshold", p.score_threshold, ctx);
  read_opt(j, "llr_threshold", p.llr_threshold, ctx);
  read_opt(j, "n", p.n, ctx);
  read_opt(j, "m", p.m, ctx);
  read_opt(j, "step_threshold", p.step_threshold, ctx);
  read_opt(j, "mean_threshold", p.mean_threshold, ctx);
  read_opt(j, "rigid_stream", p.rigid_stream, ctx);
  if (j.contains("sprt"))
    p.sprt = sprt_config_from_json(j.at("sprt"));
  if (j.contains("geometric"))
    p.geometric = geometric_params_from_json(j.at("geometric"));
  p.validate();
  return p;
}

} // namespace seqsprt
