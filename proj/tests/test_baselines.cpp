#include <doctest.h>

#include <cmath>
#include <limits>

#include "seqsprt/baselines.hpp"
#include "seqsprt/error.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace seqsprt;

namespace {

// Tabulation whose llr at x = i is exactly values[i] (log f0 fixed at 0).
DensityPair llr_table(const std::vector<double>& values)
{
  std::vector<double> g, lf1, lf0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    g.push_back(static_cast<double>(i));
    lf1.push_back(values[i]);
    lf0.push_back(0.0);
  }
  return DensityPair(g, lf1, lf0, 1.0, 1.0, 1e-9);
}

// A stream whose i-th observation has llr values[i] under llr_table(values).
DistanceStream stream_of(std::size_t n)
{
  DistanceStream s{10, 100, {}};
  for (std::size_t i = 0; i < n; ++i)
    s.observations.push_back({i, static_cast<long>(i), static_cast<double>(i), 1.0, 0});
  return s;
}

const SyntheticWorld& world()
{
  static const SyntheticWorld w = generate_world(WorldConfig{});
  return w;
}

} // namespace

TEST_SUITE("baselines")
{
  TEST_CASE("single-frame score threshold is inclusive")
  {
    CHECK(verify_single(0.2, 0.3) == Decision::accept);
    CHECK(verify_single(0.3, 0.3) == Decision::accept);
    CHECK(verify_single(0.31, 0.3) == Decision::reject);
  }

  TEST_CASE("single-frame llr threshold")
  {
    const DensityPair same({0.0, 1.0}, {0.0, 0.0}, {0.0, 0.0}, 1.0, 1.0, 1e-9);
    CHECK(verify_single_llr(0.4, same, 0.0) == Decision::accept);
    const DensityPair sep = test::gaussian_pair(0.0, 0.5, 3.0, 0.5);
    CHECK(verify_single_llr(0.1, sep, 0.0) == Decision::accept);
    CHECK(verify_single_llr(0.1, sep, std::numeric_limits<double>::infinity()) == Decision::reject);
  }

  TEST_CASE("N-of-M counts strict exceedances")
  {
    const std::vector<double> a{1, 1, 1, -1, -1};
    CHECK(verify_n_of_m(stream_of(5), llr_table(a), 3, 5, 0.0) == Decision::accept);
    const std::vector<double> b{1, 1, -1, -1, -1};
    CHECK(verify_n_of_m(stream_of(5), llr_table(b), 3, 5, 0.0) == Decision::reject);
    CHECK(verify_n_of_m(stream_of(4), llr_table(a), 3, 5, 0.0) == Decision::reject);
    const std::vector<double> zero{0, 0, 0, 0, 0};
    CHECK(verify_n_of_m(stream_of(5), llr_table(zero), 1, 5, 0.0) == Decision::reject);
  }

  TEST_CASE("fixed batch thresholds the mean llr inclusively")
  {
    const std::vector<double> a{2, 2, -1};
    CHECK(verify_fixed_batch(stream_of(3), llr_table(a), 3, 0.5) == Decision::accept);
    CHECK(verify_fixed_batch(stream_of(3), llr_table(a), 3, 1.01) == Decision::reject);
    const std::vector<double> zero{0, 0, 0};
    CHECK(verify_fixed_batch(stream_of(3), llr_table(zero), 3, 0.0) == Decision::accept);
    CHECK(verify_fixed_batch(stream_of(3), llr_table(zero), 3, 0.1) == Decision::reject);
    CHECK(verify_fixed_batch(stream_of(2), llr_table(a), 3, -10.0) == Decision::reject);
  }

  TEST_CASE("batch policies report in the common verdict schema")
  {
    const std::vector<double> l{-1, 2, 2, 2, -1, -1};
    PairEvidence ev;
    ev.query = 10;
    ev.candidate = 100;
    ev.stream = stream_of(6);
    VerifierPolicy p;
    p.kind = PolicyKind::n_of_m;
    p.n = 3;
    p.m = 6;
    const SprtVerdict v = evaluate_policy(p, ev, llr_table(l), nullptr);
    CHECK(v.decision == Decision::accept);
    CHECK(v.tau == 6);
    CHECK(v.reason == VerdictReason::policy_threshold);
    REQUIRE(v.committed);
    CHECK(v.committed->query_span == IndexRange{11, 13});
    CHECK(v.committed->llr_sum == 6.0);
    p.m = 7;
    const SprtVerdict s = evaluate_policy(p, ev, llr_table(l), nullptr);
    CHECK(s.decision == Decision::reject);
    CHECK(s.reason == VerdictReason::insufficient_observations);
  }

  TEST_CASE("geometric oracle: true loop, far pair, aliased pair")
  {
    const SyntheticWorld& w = world();
    REQUIRE(!w.labels.loop_pairs.empty());
    GeometricCheckParams exact;
    exact.sigma_fit = 0.0;
    const auto [q, t] = w.labels.loop_pairs.front();
    CHECK(geometric_check(q, t, w, exact).decision == Decision::accept);
    CHECK(geometric_check(q, q, w, exact).fitness == 1.0);

    // a non-aliased pair about 15 m apart
    bool found = false;
    for (std::size_t b = 0; b < w.size() && !found; ++b) {
      const Pose2 rel = w.gt_poses[0].between(w.gt_poses[b]);
      if (rel.translation_norm() > 14.0 && rel.translation_norm() < 16.0 && !w.is_alias(0, b)) {
        found = true;
        CHECK(geometric_check(0, b, w, GeometricCheckParams{}).decision == Decision::reject);
      }
    }
    CHECK(found);
  }

  TEST_CASE("geometric oracle passes aliased pairs at the alias rate")
  {
    const SyntheticWorld& w = world();
    REQUIRE(w.alias_pairs.size() > 100);
    GeometricCheckParams p;
    REQUIRE(p.p_alias == 0.3);
    std::size_t pass = 0;
    const std::size_t trials = 10000;
    for (std::size_t s = 0; s < trials; ++s) {
      p.seed = 1000 + s;
      const auto& [q, t] = w.alias_pairs[s % w.alias_pairs.size()];
      pass += geometric_check(q, t, w, p).decision == Decision::accept;
    }
    CHECK(static_cast<double>(pass) / trials == doctest::Approx(0.3).epsilon(0.02 / 0.3));
  }

  TEST_CASE("geometric variants filter committed pairs and keep the spans")
  {
    const SyntheticWorld& w = world();
    const auto& seg = w.labels.segments.front();
    REQUIRE(seg.size() >= 13);
    const std::size_t q = seg.front().first, t = seg.front().second;
    PairEvidence ev;
    ev.query = q;
    ev.candidate = t;
    ev.x0 = 0.0;
    ev.stream = {q, t, {}};
    for (std::size_t i = 0; i < 13; ++i)
      ev.stream.observations.push_back({i, static_cast<long>(seg[i].second) - static_cast<long>(t), 0.0, 1.0, 0});
    const DensityPair dp = test::gaussian_pair(0.0, 0.5, 3.0, 0.5);
    VerifierPolicy plain;
    plain.kind = PolicyKind::seq_sprt;
    VerifierPolicy geom = plain;
    geom.kind = PolicyKind::seq_sprt_geom;
    const SprtVerdict a = evaluate_policy(plain, ev, dp, &w);
    const SprtVerdict b = evaluate_policy(geom, ev, dp, &w);
    REQUIRE(a.committed);
    REQUIRE(b.committed);
    CHECK(b.committed->query_span == a.committed->query_span);
    CHECK(b.committed->db_span == a.committed->db_span);
    CHECK(b.committed->steps.size() <= a.committed->steps.size());
    CHECK_THROWS_AS(evaluate_policy(geom, ev, dp, nullptr), ConfigError);

    // an anchor far from any place it could register with fails outright
    PairEvidence far = ev;
    bool found = false;
    for (std::size_t c = 0; c < w.size() && !found; ++c)
      if (w.gt_poses[q].between(w.gt_poses[c]).translation_norm() > 10.0 && !w.is_alias(q, c)) {
        far.candidate = far.stream.candidate = c;
        found = true;
      }
    REQUIRE(found);
    const SprtVerdict f = evaluate_policy(geom, far, dp, &w);
    CHECK(f.decision == Decision::reject);
    CHECK(f.reason == VerdictReason::geometric_check_failed);
  }

  TEST_CASE("property: one-step collapse reproduces single-frame llr accepts")
  {
    for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
      const auto f = oracle::make_collapse_fixture(seed);
      const auto [single, seq] = oracle::collapse_accept_sets(f);
      CAPTURE(seed);
      CHECK(single == seq);
    }
  }

  TEST_CASE("all policies read identical evidence")
  {
    const auto f = oracle::make_collapse_fixture(5);
    const auto copy = f.evidence;
    for (PolicyKind k : all_policies()) {
      VerifierPolicy p;
      p.kind = k;
      p.m = 1;
      p.n = 1;
      for (const auto& e : f.evidence)
        if (!p.uses_geometry())
          evaluate_policy(p, e, f.dp, nullptr);
    }
    CHECK(copy == f.evidence);
  }

  TEST_CASE("policy names, parsing and validation")
  {
    for (PolicyKind k : all_policies())
      CHECK(policy_kind_from_string(to_string(k)) == k);
    CHECK(all_policies().size() == 7);
    CHECK_THROWS_AS(policy_kind_from_string("Oracle"), ConfigError);
    VerifierPolicy p;
    p.kind = PolicyKind::n_of_m;
    p.n = 14;
    p.m = 13;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.n = 7;
    CHECK(verifier_policy_from_json(to_json(p)).n == 7);
    auto j = to_json(p);
    j["surprise"] = true;
    CHECK_THROWS_AS(verifier_policy_from_json(j), ConfigError);
  }

  TEST_CASE("tuning grid is deterministic and fixed for sequential policies")
  {
    const auto f = oracle::make_collapse_fixture(7);
    VerifierPolicy base;
    base.kind = PolicyKind::single;
    const auto a = tuning_grid(base, f.evidence, f.dp);
    const auto b = tuning_grid(base, f.evidence, f.dp);
    REQUIRE(a.size() == b.size());
    CHECK(a.size() > 1);
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(a[i].score_threshold == b[i].score_threshold);
    base.kind = PolicyKind::seq_sprt;
    CHECK(tuning_grid(base, f.evidence, f.dp).size() == 1);
  }

  TEST_CASE("pr sweep matches direct counting")
  {
    GroundTruth gt;
    gt.loop_pairs = {{0, 100}, {1, 101}, {50, 300}};
    gt.segments = group_runs(gt.loop_pairs, 1);
    const std::vector<IndexPair> pairs{{0, 100}, {1, 101}, {20, 200}, {50, 300}};
    const std::vector<double> scores{0.1, 0.3, 0.2, 0.5};
    const auto curve = pr_sweep(pairs, scores, false, gt, 0);
    REQUIRE(!curve.empty());
    for (const auto& pt : curve) {
      std::vector<IndexPair> acc;
      for (std::size_t i = 0; i < pairs.size(); ++i)
        if (scores[i] <= pt.threshold)
          acc.push_back(pairs[i]);
      const auto r = pairwise_pr(acc, gt, 0);
      CHECK(pt.predictions == acc.size());
      CHECK(pt.precision == doctest::Approx(r.score.precision.value_or(0.0)));
      CHECK(pt.recall == doctest::Approx(*r.score.recall));
    }
  }
}
