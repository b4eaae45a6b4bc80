#include "seqsprt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "seqsprt/error.hpp"

namespace seqsprt {

PairLookup::PairLookup(std::span<const IndexPair> pairs)
{
  for (const auto& [q, t] : pairs)
    by_query_[q].push_back(t);
  for (auto& [q, ts] : by_query_)
    std::sort(ts.begin(), ts.end());
}

bool PairLookup::contains(const IndexPair& p, std::size_t tol) const
{
  const std::size_t q_lo = p.first >= tol ? p.first - tol : 0;
  const std::size_t t_lo = p.second >= tol ? p.second - tol : 0;
  for (std::size_t q = q_lo; q <= p.first + tol; ++q) {
    auto it = by_query_.find(q);
    if (it == by_query_.end())
      continue;
    auto lb = std::lower_bound(it->second.begin(), it->second.end(), t_lo);
    if (lb != it->second.end() && *lb <= p.second + tol)
      return true;
  }
  return false;
}

std::vector<PairRun> group_runs(std::vector<IndexPair> pairs, std::size_t gap)
{
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  std::vector<PairRun> runs;
  std::vector<std::size_t> open; // indices into runs
  for (const auto& p : pairs) {
    const auto [q2, t2] = p;
    std::erase_if(open, [&](std::size_t r) { return runs[r].back().first + 1 + gap < q2; });

    std::size_t best = runs.size();
    std::size_t best_dq = 0;
    long best_skew = 0;
    for (std::size_t r : open) {
      const auto [q1, t1] = runs[r].back();
      if (q2 <= q1 || t2 < t1)
        continue;
      const std::size_t dq = q2 - q1;
      const std::size_t dt = t2 - t1;
      if (dq > 1 + gap || dt > 2 * dq + gap)
        continue;
      const long skew = std::labs(static_cast<long>(dt) - static_cast<long>(dq));
      if (best == runs.size() || dq < best_dq || (dq == best_dq && skew < best_skew)) {
        best = r;
        best_dq = dq;
        best_skew = skew;
      }
    }
    if (best == runs.size()) {
      runs.push_back({p});
      open.push_back(best);
    } else {
      runs[best].push_back(p);
    }
  }
  return runs;
}

GroundTruth label_ground_truth(std::span<const Pose2> poses, const GroundTruthParams& params)
{
  if (!(params.translation_gate > 0.0) || !(params.rotation_gate_deg > 0.0))
    throw DomainError("label_ground_truth: gates must be positive");
  const double rot_gate = deg2rad(params.rotation_gate_deg);
  const std::size_t n = poses.size();

  GroundTruth gt;
  gt.params = params;
  for (std::size_t q = 0; q < n; ++q) {
    std::vector<std::pair<std::size_t, double>> hits; // (t, distance), ascending t
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t sep = q > t ? q - t : t - q;
      if (sep < params.min_separation)
        continue;
      const double d = std::hypot(poses[q].x - poses[t].x, poses[q].y - poses[t].y);
      if (!(d < params.translation_gate))
        continue;
      if (!(std::abs(wrap_angle(poses[q].theta - poses[t].theta)) < rot_gate))
        continue;
      hits.emplace_back(t, d);
    }
    if (!params.suppress_near_duplicates) {
      for (const auto& h : hits)
        gt.loop_pairs.emplace_back(q, h.first);
      continue;
    }
    // one survivor per contiguous block of database indices
    for (std::size_t b = 0; b < hits.size();) {
      std::size_t e = b + 1;
      while (e < hits.size() && hits[e].first == hits[e - 1].first + 1)
        ++e;
      std::size_t keep = b;
      for (std::size_t i = b + 1; i < e; ++i)
        if (hits[i].second < hits[keep].second)
          keep = i;
      gt.loop_pairs.emplace_back(q, hits[keep].first);
      b = e;
    }
  }
  gt.segments = group_runs(gt.loop_pairs, params.gap_tolerance);
  return gt;
}

double harmonic_f1(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

namespace {

PrfScore make_score(std::size_t hit_pred, std::size_t n_pred, std::size_t hit_gt, std::size_t n_gt)
{
  PrfScore s;
  if (n_pred > 0)
    s.precision = static_cast<double>(hit_pred) / static_cast<double>(n_pred);
  if (n_gt > 0)
    s.recall = static_cast<double>(hit_gt) / static_cast<double>(n_gt);
  if (s.precision && s.recall)
    s.f1 = harmonic_f1(*s.precision, *s.recall);
  else if (s.recall)
    s.f1 = 0.0; // nothing predicted, something to find
  return s;
}

} // namespace

PairwiseResult pairwise_pr(std::span<const IndexPair> predicted, const GroundTruth& gt, std::size_t tolerance)
{
  std::vector<IndexPair> pred(predicted.begin(), predicted.end());
  std::sort(pred.begin(), pred.end());
  pred.erase(std::unique(pred.begin(), pred.end()), pred.end());

  PairwiseResult r;
  const PairLookup gt_lookup = gt.lookup();
  for (const auto& p : pred) {
    if (gt_lookup.contains(p, tolerance))
      ++r.tp;
    else
      ++r.fp;
  }
  const PairLookup pred_lookup(pred);
  std::size_t gt_hit = 0;
  for (const auto& g : gt.loop_pairs)
    if (pred_lookup.contains(g, tolerance))
      ++gt_hit;
  r.gt_pairs = gt.loop_pairs.size();
  r.fn = r.gt_pairs - gt_hit;
  r.score = make_score(r.tp, pred.size(), gt_hit, r.gt_pairs);
  return r;
}

namespace {

std::size_t run_overlap_with(const PairRun& predicted, const PairLookup& g, std::size_t tol, std::size_t gap)
{
  std::size_t best = 0;
  bool open = false;
  std::size_t first = 0, last = 0;
  for (const auto& step : predicted) {
    if (!g.contains(step, tol))
      continue;
    if (open && step.first >= last && step.first - last <= gap + 1) {
      last = step.first;
    } else {
      open = true;
      first = last = step.first;
    }
    best = std::max(best, last - first + 1);
  }
  return best;
}

} // namespace

std::size_t run_overlap(const PairRun& predicted, const PairRun& gt_segment, std::size_t tol, std::size_t gap_tolerance)
{
  return run_overlap_with(predicted, PairLookup(gt_segment), tol, gap_tolerance);
}

KhitResult khit_pr(std::span<const PairRun> predicted_segments,
                   const GroundTruth& gt,
                   std::size_t k,
                   std::size_t gap_tolerance,
                   std::size_t tolerance)
{
  if (k < 1)
    throw DomainError("khit_pr: K must be >= 1");
  std::vector<PairLookup> lookups;
  lookups.reserve(gt.segments.size());
  for (const auto& g : gt.segments)
    lookups.emplace_back(g);

  KhitResult r;
  r.k = k;
  r.predicted_segments = predicted_segments.size();
  r.gt_segments = gt.segments.size();
  std::vector<bool> reached(gt.segments.size(), false);
  for (const auto& p : predicted_segments) {
    bool hit = false;
    for (std::size_t g = 0; g < lookups.size(); ++g) {
      if (run_overlap_with(p, lookups[g], tolerance, gap_tolerance) >= k) {
        hit = true;
        reached[g] = true;
      }
    }
    if (hit)
      ++r.khit_predicted;
  }
  r.khit_gt = static_cast<std::size_t>(std::count(reached.begin(), reached.end(), true));
  r.score = make_score(r.khit_predicted, r.predicted_segments, r.khit_gt, r.gt_segments);
  return r;
}

DecisionTier decision_tier(std::span<const SprtVerdict> verdicts, const GroundTruth& gt, std::size_t tolerance)
{
  const PairLookup lookup = gt.lookup();
  double acc = 0.0, rej = 0.0, delay = 0.0;
  std::size_t n_acc = 0, n_rej = 0, n_true = 0;
  for (const auto& v : verdicts) {
    if (v.decision == Decision::accept) {
      acc += static_cast<double>(v.tau);
      ++n_acc;
      if (lookup.contains({v.query, v.candidate}, tolerance)) {
        delay += static_cast<double>(v.tau) - 1.0;
        ++n_true;
      }
    } else {
      rej += static_cast<double>(v.tau);
      ++n_rej;
    }
  }
  DecisionTier d;
  if (n_acc)
    d.asn_acc = acc / static_cast<double>(n_acc);
  if (n_rej)
    d.asn_rej = rej / static_cast<double>(n_rej);
  if (n_true)
    d.delay = delay / static_cast<double>(n_true);
  return d;
}

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j, const char* key)
{
  if (!j.contains(key) || j.at(key).is_null())
    return std::nullopt;
  return j.at(key).get<double>();
}

std::string csv_field(const std::optional<double>& v)
{
  if (!v)
    return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

} // namespace

nlohmann::json to_json(const EvalReport& r)
{
  return {{"sequence", r.sequence},
          {"descriptor", r.descriptor},
          {"policy", r.policy},
          {"pairwise", {{"precision", opt(r.pairwise.precision)}, {"recall", opt(r.pairwise.recall)}, {"f1", opt(r.pairwise.f1)}}},
          {"khit",
           {{"p_at_khit", opt(r.khit.precision)},
            {"r_at_khit", opt(r.khit.recall)},
            {"f1_at_khit", opt(r.khit.f1)},
            {"K", r.k}}},
          {"decision_tier",
           {{"asn_acc", opt(r.decision_tier.asn_acc)},
            {"asn_rej", opt(r.decision_tier.asn_rej)},
            {"delay_frames", opt(r.decision_tier.delay)}}},
          {"counts",
           {{"tp", r.tp},
            {"fp", r.fp},
            {"fn", r.fn},
            {"gt_pairs", r.gt_pairs},
            {"predicted_segments", r.predicted_segments},
            {"gt_segments", r.gt_segments},
            {"k_hits", r.k_hits},
            {"gt_k_hits", r.gt_k_hits}}},
          {"trajectory", {{"ate", opt(r.ate)}, {"rpe", opt(r.rpe)}, {"ate_odometry", opt(r.ate_odometry)}}}};
}

EvalReport eval_report_from_json(const nlohmann::json& j)
{
  try {
    EvalReport r;
    r.sequence = j.at("sequence").get<std::string>();
    r.descriptor = j.at("descriptor").get<std::string>();
    r.policy = j.at("policy").get<std::string>();
    const auto& pw = j.at("pairwise");
    r.pairwise = {opt_from(pw, "precision"), opt_from(pw, "recall"), opt_from(pw, "f1")};
    const auto& kh = j.at("khit");
    r.khit = {opt_from(kh, "p_at_khit"), opt_from(kh, "r_at_khit"), opt_from(kh, "f1_at_khit")};
    r.k = kh.at("K").get<std::size_t>();
    const auto& dt = j.at("decision_tier");
    r.decision_tier = {opt_from(dt, "asn_acc"), opt_from(dt, "asn_rej"), opt_from(dt, "delay_frames")};
    const auto& c = j.at("counts");
    r.tp = c.at("tp").get<std::size_t>();
    r.fp = c.at("fp").get<std::size_t>();
    r.fn = c.at("fn").get<std::size_t>();
    r.gt_pairs = c.at("gt_pairs").get<std::size_t>();
    r.predicted_segments = c.at("predicted_segments").get<std::size_t>();
    r.gt_segments = c.at("gt_segments").get<std::size_t>();
    r.k_hits = c.at("k_hits").get<std::size_t>();
    r.gt_k_hits = c.at("gt_k_hits").get<std::size_t>();
    const auto& tr = j.at("trajectory");
    r.ate = opt_from(tr, "ate");
    r.rpe = opt_from(tr, "rpe");
    r.ate_odometry = opt_from(tr, "ate_odometry");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report JSON: ") + e.what());
  }
}

std::string report_csv_header() { return "sequence,descriptor,policy,P@Khit,R@Khit,F1@Khit,Prec,Rec,F1,ATE,RPE"; }

std::string report_csv_row(const EvalReport& r)
{
  std::string row = r.sequence + "," + r.descriptor + "," + r.policy;
  for (const auto& v : {r.khit.precision,
                        r.khit.recall,
                        r.khit.f1,
                        r.pairwise.precision,
                        r.pairwise.recall,
                        r.pairwise.f1,
                        r.ate,
                        r.rpe})
    row += "," + csv_field(v);
  return row;
}

namespace {

std::optional<double> mean_of(std::span<const EvalReport> rs, std::optional<double> EvalReport::*field)
{
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& r : rs)
    if (r.*field) {
      acc += *(r.*field);
      ++n;
    }
  if (!n)
    return std::nullopt;
  return acc / static_cast<double>(n);
}

template <class Get>
std::optional<double> mean_by(std::span<const EvalReport> rs, Get get)
{
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& r : rs)
    if (auto v = get(r)) {
      acc += *v;
      ++n;
    }
  if (!n)
    return std::nullopt;
  return acc / static_cast<double>(n);
}

} // namespace

EvalReport average_reports(std::span<const EvalReport> rs, Averaging mode)
{
  if (rs.empty())
    throw DomainError("average_reports: no reports");
  EvalReport out;
  out.sequence = mode == Averaging::macro ? "macro" : "micro";
  out.descriptor = rs.front().descriptor;
  out.policy = rs.front().policy;
  out.k = rs.front().k;
  for (const auto& r : rs) {
    out.tp += r.tp;
    out.fp += r.fp;
    out.fn += r.fn;
    out.gt_pairs += r.gt_pairs;
    out.predicted_segments += r.predicted_segments;
    out.gt_segments += r.gt_segments;
    out.k_hits += r.k_hits;
    out.gt_k_hits += r.gt_k_hits;
  }
  if (mode == Averaging::macro) {
    out.pairwise.precision = mean_by(rs, [](const EvalReport& r) { return r.pairwise.precision; });
    out.pairwise.recall = mean_by(rs, [](const EvalReport& r) { return r.pairwise.recall; });
    out.pairwise.f1 = mean_by(rs, [](const EvalReport& r) { return r.pairwise.f1; });
    out.khit.precision = mean_by(rs, [](const EvalReport& r) { return r.khit.precision; });
    out.khit.recall = mean_by(rs, [](const EvalReport& r) { return r.khit.recall; });
    out.khit.f1 = mean_by(rs, [](const EvalReport& r) { return r.khit.f1; });
  } else {
    out.pairwise = make_score(out.tp, out.tp + out.fp, out.gt_pairs - out.fn, out.gt_pairs);
    out.khit = make_score(out.k_hits, out.predicted_segments, out.gt_k_hits, out.gt_segments);
  }
  out.decision_tier.asn_acc = mean_by(rs, [](const EvalReport& r) { return r.decision_tier.asn_acc; });
  out.decision_tier.asn_rej = mean_by(rs, [](const EvalReport& r) { return r.decision_tier.asn_rej; });
  out.decision_tier.delay = mean_by(rs, [](const EvalReport& r) { return r.decision_tier.delay; });
  out.ate = mean_of(rs, &EvalReport::ate);
  out.rpe = mean_of(rs, &EvalReport::rpe);
  out.ate_odometry = mean_of(rs, &EvalReport::ate_odometry);
  return out;
}

nlohmann::json to_json(const GroundTruth& gt)
{
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [q, t] : gt.loop_pairs)
    pairs.push_back({q, t});
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& run : gt.segments) {
    nlohmann::json s = nlohmann::json::array();
    for (const auto& [q, t] : run)
      s.push_back({q, t});
    segs.push_back(std::move(s));
  }
  return {{"params",
           {{"translation_gate", gt.params.translation_gate},
            {"rotation_gate_deg", gt.params.rotation_gate_deg},
            {"min_separation", gt.params.min_separation},
            {"suppress_near_duplicates", gt.params.suppress_near_duplicates},
            {"gap_tolerance", gt.params.gap_tolerance}}},
          {"loop_pairs", pairs},
          {"segments", segs}};
}

GroundTruth ground_truth_from_json(const nlohmann::json& j)
{
  try {
    GroundTruth gt;
    const auto& p = j.at("params");
    gt.params.translation_gate = p.at("translation_gate").get<double>();
    gt.params.rotation_gate_deg = p.at("rotation_gate_deg").get<double>();
    gt.params.min_separation = p.at("min_separation").get<std::size_t>();
    gt.params.suppress_near_duplicates = p.at("suppress_near_duplicates").get<bool>();
    gt.params.gap_tolerance = p.at("gap_tolerance").get<std::size_t>();
    for (const auto& e : j.at("loop_pairs"))
      gt.loop_pairs.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
    for (const auto& s : j.at("segments")) {
      PairRun run;
      for (const auto& e : s)
        run.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
      gt.segments.push_back(std::move(run));
    }
    return gt;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("ground truth JSON: ") + e.what());
  }
}

} // namespace seqsprt
