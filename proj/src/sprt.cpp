#include "seqsprt/sprt.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "seqsprt/error.hpp"

namespace seqsprt {

void SprtConfig::validate() const
{
  if (!(alpha > 0.0 && alpha < 0.5))
    throw DomainError("SprtConfig: alpha must lie in (0, 0.5)");
  if (!(beta > 0.0 && beta < 0.5))
    throw DomainError("SprtConfig: beta must lie in (0, 0.5)");
  if (n_min < 1 || n_max < n_min)
    throw DomainError("SprtConfig: need 1 <= n_min <= n_max");
  if (min_run < 1)
    throw DomainError("SprtConfig: min_run must be >= 1");
  if (!std::isfinite(llr_step_threshold) || !std::isfinite(length_bonus))
    throw DomainError("SprtConfig: thresholds must be finite");
  const Thresholds b = boundaries();
  if (!(b.reject < b.accept))
    throw DomainError("SprtConfig: reject boundary must lie below the accept boundary");
}

Thresholds SprtConfig::boundaries() const
{
  Thresholds b = thresholds(alpha, beta);
  if (accept_override)
    b.accept = *accept_override;
  if (reject_override)
    b.reject = *reject_override;
  return b;
}

Thresholds thresholds(double alpha, double beta)
{
  if (!(alpha > 0.0 && alpha < 0.5) || !(beta > 0.0 && beta < 0.5))
    throw DomainError("thresholds: alpha and beta must lie in (0, 0.5)");
  return {std::log((1.0 - beta) / alpha), std::log(beta / (1.0 - alpha))};
}

Subsegment max_subsegment(std::span<const double> h)
{
  if (h.empty())
    throw EmptyHistory("max_subsegment: empty history");
  Subsegment best{0, 0, h[0]};
  double cur = h[0];
  std::size_t cur_start = 0;
  for (std::size_t k = 1; k < h.size(); ++k) {
    if (cur >= 0.0) {
      cur += h[k];
    } else {
      cur = h[k];
      cur_start = k;
    }
    if (cur > best.sum || (cur == best.sum && cur_start < best.begin))
      best = {cur_start, k, cur};
  }
  return best;
}

std::size_t longest_run(std::span<const double> values, double threshold, std::size_t gap_tolerance)
{
  std::size_t best = 0;
  bool open = false;
  std::size_t first = 0, last = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] > threshold))
      continue;
    if (open && i - last - 1 <= gap_tolerance) {
      last = i;
    } else {
      open = true;
      first = last = i;
    }
    best = std::max(best, last - first + 1);
  }
  return best;
}

std::string to_string(Decision d) { return d == Decision::accept ? "ACCEPT" : "REJECT"; }

std::string to_string(VerdictReason r)
{
  switch (r) {
  case VerdictReason::accept_boundary:
    return "accept_boundary";
  case VerdictReason::reject_boundary:
    return "reject_boundary";
  case VerdictReason::truncation:
    return "truncation";
  case VerdictReason::run_guard_failed:
    return "run_guard_failed";
  case VerdictReason::geometric_check_failed:
    return "geometric_check_failed";
  case VerdictReason::policy_threshold:
    return "policy_threshold";
  case VerdictReason::insufficient_observations:
    return "insufficient_observations";
  }
  return "truncation";
}

Decision decision_from_string(const std::string& s)
{
  if (s == "ACCEPT")
    return Decision::accept;
  if (s == "REJECT")
    return Decision::reject;
  throw FormatError("unknown decision '" + s + "'");
}

VerdictReason reason_from_string(const std::string& s)
{
  for (auto r : {VerdictReason::accept_boundary,
                 VerdictReason::reject_boundary,
                 VerdictReason::truncation,
                 VerdictReason::run_guard_failed,
                 VerdictReason::geometric_check_failed,
                 VerdictReason::policy_threshold,
                 VerdictReason::insufficient_observations})
    if (to_string(r) == s)
      return r;
  throw FormatError("unknown verdict reason '" + s + "'");
}

SequentialTest::SequentialTest(const SprtConfig& cfg)
  : cfg_(cfg)
  , bounds_(cfg.boundaries())
{
  cfg_.validate();
  history_.reserve(cfg_.n_max);
}

SequentialTest::Status SequentialTest::observe(double llr)
{
  if (status_ != Status::undecided)
    throw DomainError("SequentialTest: observation after a terminal decision");
  sum_ += llr;
  history_.push_back(llr);
  if (sum_ <= bounds_.reject) {
    status_ = Status::reject;
  } else if (history_.size() >= cfg_.n_min && sum_ >= bounds_.accept) {
    status_ = Status::accept;
  } else if (history_.size() >= cfg_.n_max) {
    status_ = Status::reject;
  }
  return status_;
}

LoopSegment commit_segment(std::size_t query,
                           std::size_t candidate,
                           std::span<const Observation> obs,
                           std::span<const double> llrs,
                           const Subsegment& sub,
                           double length_bonus,
                           double evidence_threshold)
{
  LoopSegment seg;
  double sum = 0.0;
  for (std::size_t m = sub.begin; m <= sub.end; ++m)
    sum += llrs[m];
  const bool any = std::any_of(llrs.begin() + static_cast<long>(sub.begin), llrs.begin() + static_cast<long>(sub.end) + 1,
                               [&](double l) { return l > evidence_threshold; });
  for (std::size_t m = sub.begin; m <= sub.end; ++m)
    if (!any || llrs[m] > evidence_threshold)
      seg.steps.emplace_back(query + obs[m].step, static_cast<std::size_t>(static_cast<long>(candidate) + obs[m].offset));
  auto [qlo, qhi] = std::minmax_element(seg.steps.begin(), seg.steps.end(),
                                        [](const IndexPair& a, const IndexPair& b) { return a.first < b.first; });
  auto [tlo, thi] = std::minmax_element(seg.steps.begin(), seg.steps.end(),
                                        [](const IndexPair& a, const IndexPair& b) { return a.second < b.second; });
  seg.query_span = {qlo->first, qhi->first};
  seg.db_span = {tlo->second, thi->second};
  seg.llr_sum = sum;
  seg.length = sub.end - sub.begin + 1;
  seg.score = seg.llr_sum + length_bonus * static_cast<double>(seg.length);
  return seg;
}

namespace {

SprtVerdict run_test(std::size_t query,
                     std::size_t candidate,
                     const std::function<std::optional<std::pair<Observation, double>>()>& next,
                     const SprtConfig& cfg)
{
  SequentialTest test(cfg);
  std::vector<Observation> observed;
  SprtVerdict v;
  v.query = query;
  v.candidate = candidate;

  while (test.status() == SequentialTest::Status::undecided) {
    auto item = next();
    if (!item)
      break;
    observed.push_back(item->first);
    test.observe(item->second);
  }
  if (observed.empty())
    throw EmptyStream("verify: source yielded no observations");

  v.tau = test.count();
  v.cumulative_llr = test.cumulative();
  v.llr_history = test.history();

  switch (test.status()) {
  case SequentialTest::Status::reject:
    v.decision = Decision::reject;
    v.reason = test.cumulative() <= test.bounds().reject ? VerdictReason::reject_boundary : VerdictReason::truncation;
    break;
  case SequentialTest::Status::undecided:
    // source ran dry before n_max
    v.decision = Decision::reject;
    v.reason = VerdictReason::truncation;
    break;
  case SequentialTest::Status::accept: {
    const Subsegment sub = max_subsegment(v.llr_history);
    const std::span<const double> window(v.llr_history.data() + sub.begin, sub.end - sub.begin + 1);
    if (longest_run(window, cfg.llr_step_threshold, cfg.gap_tolerance) >= cfg.min_run) {
      v.decision = Decision::accept;
      v.reason = VerdictReason::accept_boundary;
      v.committed = commit_segment(query, candidate, observed, v.llr_history, sub, cfg.length_bonus, cfg.llr_step_threshold);
    } else {
      v.decision = Decision::reject;
      v.reason = VerdictReason::run_guard_failed;
    }
    break;
  }
  }
  return v;
}

} // namespace

SprtVerdict verify(ObservationSource& source, const DensityPair& dp, const SprtConfig& cfg)
{
  return run_test(
    source.query(),
    source.candidate(),
    [&]() -> std::optional<std::pair<Observation, double>> {
      auto o = source.next();
      if (!o)
        return std::nullopt;
      return std::make_pair(*o, dp.llr(o->distance));
    },
    cfg);
}

SprtVerdict verify_llrs(std::span<const double> llrs, const SprtConfig& cfg)
{
  std::size_t i = 0;
  return run_test(
    0,
    0,
    [&]() -> std::optional<std::pair<Observation, double>> {
      if (i >= llrs.size())
        return std::nullopt;
      Observation o{i, static_cast<long>(i), 0.0, 1.0, 0};
      const double l = llrs[i++];
      return std::make_pair(o, l);
    },
    cfg);
}

nlohmann::json to_json(const LoopSegment& s)
{
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& [q, t] : s.steps)
    steps.push_back({q, t});
  return {{"query_span", {s.query_span.lo, s.query_span.hi}},
          {"db_span", {s.db_span.lo, s.db_span.hi}},
          {"llr_sum", s.llr_sum},
          {"length", s.length},
          {"score", s.score},
          {"steps", steps}};
}

LoopSegment loop_segment_from_json(const nlohmann::json& j)
{
  LoopSegment s;
  s.query_span = {j.at("query_span").at(0).get<std::size_t>(), j.at("query_span").at(1).get<std::size_t>()};
  s.db_span = {j.at("db_span").at(0).get<std::size_t>(), j.at("db_span").at(1).get<std::size_t>()};
  s.llr_sum = j.at("llr_sum").get<double>();
  s.length = j.at("length").get<std::size_t>();
  s.score = j.at("score").get<double>();
  if (j.contains("steps"))
    for (const auto& p : j.at("steps"))
      s.steps.emplace_back(p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>());
  return s;
}

nlohmann::json to_json(const SprtVerdict& v)
{
  nlohmann::json j{{"query", v.query},
                   {"candidate", v.candidate},
                   {"decision", to_string(v.decision)},
                   {"tau", v.tau},
                   {"reason", to_string(v.reason)},
                   {"S", v.cumulative_llr},
                   {"llr_history", v.llr_history}};
  j["committed"] = v.committed ? to_json(*v.committed) : nlohmann::json(nullptr);
  return j;
}

SprtVerdict verdict_from_json(const nlohmann::json& j)
{
  try {
    SprtVerdict v;
    v.query = j.at("query").get<std::size_t>();
    v.candidate = j.at("candidate").get<std::size_t>();
    v.decision = decision_from_string(j.at("decision").get<std::string>());
    v.tau = j.at("tau").get<std::size_t>();
    v.reason = reason_from_string(j.at("reason").get<std::string>());
    v.cumulative_llr = j.at("S").get<double>();
    if (j.contains("llr_history"))
      v.llr_history = j.at("llr_history").get<std::vector<double>>();
    if (j.contains("committed") && !j.at("committed").is_null())
      v.committed = loop_segment_from_json(j.at("committed"));
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("verdict JSON: ") + e.what());
  }
}

} // namespace seqsprt
