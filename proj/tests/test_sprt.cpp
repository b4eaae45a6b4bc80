#include <doctest.h>

#include <cmath>
#include <random>

#include "seqsprt/error.hpp"
#include "seqsprt/sprt.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace seqsprt;

namespace {

std::size_t brute_longest_run(const std::vector<double>& v, double thr, std::size_t gap)
{
  std::size_t best = 0;
  for (std::size_t a = 0; a < v.size(); ++a) {
    if (!(v[a] > thr))
      continue;
    for (std::size_t b = a; b < v.size(); ++b) {
      if (!(v[b] > thr))
        continue;
      // every stretch of non-hits between a and b must be <= gap
      std::size_t miss = 0;
      bool ok = true;
      for (std::size_t i = a; i <= b; ++i) {
        miss = v[i] > thr ? 0 : miss + 1;
        ok = ok && miss <= gap;
      }
      if (ok)
        best = std::max(best, b - a + 1);
    }
  }
  return best;
}

SprtConfig cfg_min_run(std::size_t r)
{
  SprtConfig c;
  c.min_run = r;
  return c;
}

} // namespace

TEST_SUITE("sprt")
{
  TEST_CASE("thresholds at the default error targets")
  {
    const Thresholds t = thresholds(1e-5, 0.009);
    CHECK(t.accept == doctest::Approx(11.5).epsilon(0.005));
    CHECK(t.reject == doctest::Approx(-4.71).epsilon(0.005));
    CHECK(t.accept == std::log(0.991 / 1e-5));
    CHECK(t.reject == std::log(0.009 / (1.0 - 1e-5)));
  }

  TEST_CASE("symmetric targets give symmetric thresholds")
  {
    const Thresholds t = thresholds(0.01, 0.01);
    CHECK(t.accept == doctest::Approx(std::log(99.0)).epsilon(1e-12));
    CHECK(t.accept == doctest::Approx(4.595).epsilon(1e-3));
    CHECK(t.reject == doctest::Approx(-t.accept).epsilon(1e-12));
    for (double eps : {1e-2, 1e-4, 1e-6}) {
      const Thresholds l = thresholds(0.5 - eps, 0.5 - eps);
      CHECK(l.accept > 0.0);
      CHECK(l.reject < 0.0);
      CHECK(l.accept < 5.0 * eps);
      CHECK(l.reject > -5.0 * eps);
    }
  }

  TEST_CASE("thresholds outside the domain throw")
  {
    CHECK_THROWS_AS(thresholds(0.0, 0.1), DomainError);
    CHECK_THROWS_AS(thresholds(0.5, 0.1), DomainError);
    CHECK_THROWS_AS(thresholds(0.1, -0.1), DomainError);
    CHECK_THROWS_AS(thresholds(0.1, 0.7), DomainError);
  }

  TEST_CASE("acceptance is deferred to n_min")
  {
    const std::vector<double> l(6, 3.0);
    const SprtVerdict v = verify_llrs(l, cfg_min_run(1));
    CHECK(v.decision == Decision::accept);
    CHECK(v.tau == 6);
    CHECK(v.cumulative_llr == 18.0);
    CHECK(v.reason == VerdictReason::accept_boundary);
    REQUIRE(v.committed);
    CHECK(v.committed->length == 6);
  }

  TEST_CASE("rejection is allowed from the first sample")
  {
    const std::vector<double> l{-5.0, 10.0, 10.0};
    const SprtVerdict v = verify_llrs(l, SprtConfig{});
    CHECK(v.decision == Decision::reject);
    CHECK(v.tau == 1);
    CHECK(v.reason == VerdictReason::reject_boundary);
    CHECK(!v.committed);
  }

  TEST_CASE("undecided evidence is rejected at truncation")
  {
    const std::vector<double> l(20, 0.5);
    const SprtVerdict v = verify_llrs(l, SprtConfig{});
    CHECK(v.decision == Decision::reject);
    CHECK(v.tau == 13);
    CHECK(v.cumulative_llr == doctest::Approx(6.5));
    CHECK(v.reason == VerdictReason::truncation);
  }

  TEST_CASE("a source that runs dry before n_max is a truncation reject")
  {
    const std::vector<double> l(4, 0.5);
    const SprtVerdict v = verify_llrs(l, SprtConfig{});
    CHECK(v.tau == 4);
    CHECK(v.reason == VerdictReason::truncation);
    CHECK_THROWS_AS(verify_llrs(std::vector<double>{}, SprtConfig{}), EmptyStream);
  }

  TEST_CASE("run guard rejects a single burst of evidence")
  {
    // S crosses A at n_min, but only one positive step carries it
    const std::vector<double> l{0.0, 0.0, 0.0, 0.0, 0.0, 12.0};
    const SprtVerdict v = verify_llrs(l, SprtConfig{});
    CHECK(v.decision == Decision::reject);
    CHECK(v.reason == VerdictReason::run_guard_failed);
    CHECK(v.tau == 6);
    const SprtVerdict w = verify_llrs(l, cfg_min_run(1));
    CHECK(w.decision == Decision::accept);
  }

  TEST_CASE("max_subsegment examples")
  {
    const std::vector<double> h{-2, 4, 4, 4, 1, 1, -3};
    CHECK(max_subsegment(h) == Subsegment{1, 5, 14.0});
    const std::vector<double> pos{1, 2, 3};
    CHECK(max_subsegment(pos) == Subsegment{0, 2, 6.0});
    const std::vector<double> neg{-3, -1, -2};
    CHECK(max_subsegment(neg) == Subsegment{1, 1, -1.0});
    CHECK_THROWS_AS(max_subsegment(std::vector<double>{}), EmptyHistory);
  }

  TEST_CASE("committed segment of the worked history")
  {
    const std::vector<double> h{-2, 4, 4, 4, 1, 1, -3};
    std::vector<Observation> obs;
    for (std::size_t i = 0; i < h.size(); ++i)
      obs.push_back({i, static_cast<long>(i) + (i >= 3 ? 1 : 0), 0.0, 1.0, 0});
    const LoopSegment s = commit_segment(100, 500, obs, h, max_subsegment(h), 0.25, 0.0);
    CHECK(s.query_span == IndexRange{101, 105});
    CHECK(s.db_span == IndexRange{501, 506});
    CHECK(s.llr_sum == 14.0);
    CHECK(s.length == 5);
    CHECK(s.score == doctest::Approx(14.0 + 0.25 * 5));
    CHECK(s.steps.size() == 5);
  }

  TEST_CASE("committed steps keep evidence-bearing pairs only")
  {
    const std::vector<double> h{3, -0.5, 3, 3};
    std::vector<Observation> obs;
    for (std::size_t i = 0; i < h.size(); ++i)
      obs.push_back({i, static_cast<long>(i), 0.0, 1.0, 0});
    const LoopSegment s = commit_segment(0, 50, obs, h, {0, 3, 8.5}, 0.25, 0.0);
    CHECK(s.length == 4);
    CHECK(s.llr_sum == 8.5);
    REQUIRE(s.steps.size() == 3);
    CHECK(s.steps[1] == IndexPair{2, 52});
    const std::vector<double> flat{-1, -1};
    const LoopSegment f = commit_segment(0, 50, obs, flat, {0, 1, -2.0}, 0.25, 0.0);
    CHECK(f.steps.size() == 2);
  }

  TEST_CASE("property: Kadane equals exhaustive enumeration")
  {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 10000; ++trial) {
      const std::size_t n = 1 + rng() % 50;
      std::vector<double> h(n);
      // half the trials use small integers so that ties are common
      for (auto& x : h)
        x = trial % 2 ? static_cast<double>(static_cast<int>(rng() % 7) - 3) : 10.0 * uniform01(rng) - 5.0;
      const Subsegment got = max_subsegment(h);
      const Subsegment want = oracle::max_subsegment(h);
      CAPTURE(trial);
      CHECK(got.begin == want.begin);
      CHECK(got.end == want.end);
      CHECK(got.sum == doctest::Approx(want.sum).epsilon(1e-12));
    }
  }

  TEST_CASE("property: longest run equals brute force")
  {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 3000; ++trial) {
      const std::size_t n = rng() % 20;
      std::vector<double> v(n);
      for (auto& x : v)
        x = static_cast<double>(static_cast<int>(rng() % 3) - 1);
      const std::size_t gap = rng() % 3;
      CHECK(longest_run(v, 0.0, gap) == brute_longest_run(v, 0.0, gap));
    }
  }

  TEST_CASE("property: boundary semantics and stopping-time bounds")
  {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20000; ++trial) {
      SprtConfig cfg;
      cfg.n_min = 1 + rng() % 8;
      cfg.n_max = cfg.n_min + rng() % 10;
      cfg.min_run = 1 + rng() % 3;
      const Thresholds b = cfg.boundaries();
      std::vector<double> l(1 + rng() % 20);
      const double drift = 4.0 * uniform01(rng) - 1.5;
      for (auto& x : l)
        x = drift + 2.0 * standard_normal(rng);
      const SprtVerdict v = verify_llrs(l, cfg);
      CAPTURE(trial);
      REQUIRE(v.tau >= 1);
      REQUIRE(v.tau <= cfg.n_max);
      CHECK(v.llr_history.size() == v.tau);
      double s = 0.0;
      for (std::size_t i = 0; i + 1 < v.tau; ++i) {
        s += v.llr_history[i];
        CHECK(s > b.reject);
        if (i + 1 >= cfg.n_min)
          CHECK(s < b.accept);
      }
      if (v.decision == Decision::accept) {
        CHECK(v.tau >= cfg.n_min);
        CHECK(v.cumulative_llr >= b.accept);
        CHECK(v.reason == VerdictReason::accept_boundary);
        REQUIRE(v.committed);
        const Subsegment sub = max_subsegment(v.llr_history);
        double sum = 0.0;
        for (std::size_t m = sub.begin; m <= sub.end; ++m)
          sum += v.llr_history[m];
        CHECK(v.committed->llr_sum == doctest::Approx(sum).epsilon(1e-12));
        CHECK(v.committed->length == sub.end - sub.begin + 1);
      } else {
        CHECK(!v.committed);
        if (v.reason == VerdictReason::reject_boundary)
          CHECK(v.cumulative_llr <= b.reject);
      }
    }
  }

  TEST_CASE("property: a positive shift never turns an accept into a reject")
  {
    std::mt19937_64 rng(4);
    std::size_t accepts = 0;
    for (int trial = 0; trial < 20000; ++trial) {
      std::vector<double> l(13);
      for (auto& x : l)
        x = 1.0 + 2.0 * standard_normal(rng);
      const SprtVerdict v = verify_llrs(l, SprtConfig{});
      if (v.decision != Decision::accept)
        continue;
      ++accepts;
      const double c = 3.0 * uniform01(rng) + 1e-3;
      auto shifted = l;
      for (auto& x : shifted)
        x += c;
      CAPTURE(trial);
      // recomputed on the original path up to tau: still over A, guard still met
      const std::span<const double> prefix(shifted.data(), v.tau);
      double s = 0.0;
      for (double x : prefix)
        s += x;
      const Subsegment sub = max_subsegment(prefix);
      CHECK(s >= SprtConfig{}.boundaries().accept);
      CHECK(longest_run(prefix.subspan(sub.begin, sub.end - sub.begin + 1), 0.0, 1) >= 3);
      // a full rerun can only lose the accept by stopping earlier on the guard
      const SprtVerdict again = verify_llrs(shifted, SprtConfig{});
      if (again.decision == Decision::reject) {
        CHECK(again.reason == VerdictReason::run_guard_failed);
        CHECK(again.tau < v.tau);
      }
    }
    CHECK(accepts > 100);
  }

  TEST_CASE("online accumulator")
  {
    SequentialTest t(SprtConfig{});
    CHECK(t.observe(-1.0) == SequentialTest::Status::undecided);
    CHECK(t.observe(-4.0) == SequentialTest::Status::reject);
    CHECK_THROWS_AS(t.observe(1.0), DomainError);
    SprtConfig bad;
    bad.n_min = 5;
    bad.n_max = 4;
    CHECK_THROWS_AS(SequentialTest{bad}, DomainError);
    SprtConfig ov;
    ov.accept_override = 2.0;
    ov.reject_override = -1.0;
    CHECK(ov.boundaries().accept == 2.0);
    CHECK(ov.boundaries().reject == -1.0);
  }

  TEST_CASE("verify reads an observation source through the densities")
  {
    const DensityPair dp = test::gaussian_pair(0.0, 1.0, 3.0, 1.0);
    DistanceStream s{40, 200, {}};
    for (std::size_t i = 0; i < 13; ++i)
      s.observations.push_back({i, static_cast<long>(i) + 1, 0.0, 1.0, 1});
    StreamSource src(s);
    const SprtVerdict v = verify(src, dp, SprtConfig{});
    CHECK(v.decision == Decision::accept);
    CHECK(v.tau == 6);
    CHECK(v.llr_history.front() == doctest::Approx(dp.llr(0.0)));
    REQUIRE(v.committed);
    CHECK(v.committed->query_span == IndexRange{40, 45});
    CHECK(v.committed->db_span == IndexRange{201, 206});
  }

  TEST_CASE("verdict json round trip")
  {
    const std::vector<double> l{2, 3, 2, 3, 2, 3};
    SprtVerdict v = verify_llrs(l, SprtConfig{});
    v.query = 7;
    v.candidate = 99;
    const SprtVerdict back = verdict_from_json(nlohmann::json::parse(to_json(v).dump()));
    CHECK(back.decision == v.decision);
    CHECK(back.tau == v.tau);
    CHECK(back.reason == v.reason);
    CHECK(back.cumulative_llr == v.cumulative_llr);
    CHECK(back.llr_history == v.llr_history);
    CHECK(back.committed == v.committed);
    CHECK(back.query == 7);
    CHECK(reason_from_string(to_string(VerdictReason::run_guard_failed)) == VerdictReason::run_guard_failed);
    CHECK_THROWS_AS(decision_from_string("MAYBE"), FormatError);
  }
}
