#include <doctest.h>

#include <algorithm>
#include <random>

#include "seqsprt/conflict.hpp"
#include "seqsprt/error.hpp"
#include "seqsprt/random.hpp"
#include "oracles.hpp"

using namespace seqsprt;

namespace {

LoopSegment seg(std::size_t q0, std::size_t q1, std::size_t t0, std::size_t t1, double score)
{
  LoopSegment s;
  s.query_span = {q0, q1};
  s.db_span = {t0, t1};
  s.length = q1 - q0 + 1;
  s.llr_sum = score;
  s.score = score;
  return s;
}

std::vector<LoopSegment> random_pool(std::mt19937_64& rng, std::size_t n)
{
  std::vector<LoopSegment> pool;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t q0 = rng() % 60, t0 = 100 + rng() % 60;
    const std::size_t len = 1 + rng() % 12;
    // integer-valued scores make equal totals common
    const double score = rng() % 3 ? static_cast<double>(1 + rng() % 10) : 0.5 + 20.0 * uniform01(rng);
    pool.push_back(seg(q0, q0 + len - 1, t0, t0 + len - 1 + rng() % 3, score));
  }
  return pool;
}

bool feasible(const std::vector<LoopSegment>& kept)
{
  for (std::size_t a = 0; a < kept.size(); ++a)
    for (std::size_t b = a + 1; b < kept.size(); ++b)
      if (segments_conflict(kept[a], kept[b]))
        return false;
  return true;
}

} // namespace

TEST_SUITE("conflict")
{
  TEST_CASE("overlap on either axis is a conflict")
  {
    CHECK(segments_conflict(seg(0, 5, 100, 105, 1), seg(5, 9, 200, 204, 1)));
    CHECK(segments_conflict(seg(0, 5, 100, 105, 1), seg(20, 25, 105, 110, 1)));
    CHECK(!segments_conflict(seg(0, 5, 100, 105, 1), seg(6, 9, 106, 110, 1)));
  }

  TEST_CASE("disjoint segments are both retained")
  {
    const std::vector<LoopSegment> pool{seg(0, 5, 100, 105, 3), seg(10, 15, 200, 205, 4)};
    CHECK(resolve(pool).size() == 2);
  }

  TEST_CASE("the dominant score wins a pairwise conflict")
  {
    const std::vector<LoopSegment> pool{seg(0, 5, 100, 105, 7), seg(3, 8, 300, 305, 10)};
    const auto kept = resolve(pool);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].score == 10.0);
  }

  TEST_CASE("chain: two outer segments beat the middle one")
  {
    const LoopSegment a = seg(0, 5, 100, 105, 5);
    const LoopSegment b = seg(4, 10, 200, 206, 8);
    const LoopSegment c = seg(9, 14, 300, 305, 5);
    const std::vector<LoopSegment> pool{b, a, c};
    CHECK(resolve_indices(pool) == std::vector<std::size_t>{1, 2});
    CHECK(total_score(resolve(pool)) == 10.0);
  }

  TEST_CASE("equal totals break ties deterministically")
  {
    const std::vector<LoopSegment> pool{seg(10, 15, 100, 105, 5), seg(0, 12, 300, 305, 5)};
    std::vector<LoopSegment> reversed(pool.rbegin(), pool.rend());
    const auto a = resolve(pool), b = resolve(reversed);
    REQUIRE(a.size() == 1);
    CHECK(a == b);
    CHECK(a[0].query_span.lo == 0);
  }

  TEST_CASE("window cap")
  {
    std::vector<LoopSegment> pool;
    for (std::size_t i = 0; i < 33; ++i)
      pool.push_back(seg(10 * i, 10 * i + 3, 1000 + 10 * i, 1003 + 10 * i, 1));
    CHECK_THROWS_AS(resolve(pool), WindowOverflow);
    CHECK(resolve(pool, 40).size() == 33);
  }

  TEST_CASE("property: exact optimality against subset enumeration")
  {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 1000; ++trial) {
      const auto pool = random_pool(rng, 1 + rng() % 15);
      const auto kept = resolve(pool);
      CAPTURE(trial);
      CHECK(feasible(kept));
      CHECK(total_score(kept) == doctest::Approx(oracle::best_total_score(pool)).epsilon(1e-12));
    }
  }

  TEST_CASE("property: determinism under input permutation")
  {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 300; ++trial) {
      auto pool = random_pool(rng, 2 + rng() % 12);
      auto kept = resolve(pool);
      std::shuffle(pool.begin(), pool.end(), rng);
      auto again = resolve(pool);
      std::sort(kept.begin(), kept.end(), canonical_less);
      std::sort(again.begin(), again.end(), canonical_less);
      CHECK(kept == again);
    }
  }

  TEST_CASE("property: a disjoint addition never lowers the total")
  {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 300; ++trial) {
      auto pool = random_pool(rng, 1 + rng() % 12);
      const double before = total_score(resolve(pool));
      pool.push_back(seg(500, 505, 900, 905, 0.5 + uniform01(rng)));
      CHECK(total_score(resolve(pool)) >= before);
    }
  }

  TEST_CASE("windowed resolution flushes on query gaps")
  {
    WindowedResolver w(32, 13);
    w.advance_to(0);
    w.add(seg(0, 5, 100, 105, 5), 0);
    w.add(seg(2, 7, 102, 107, 9), 1);
    w.advance_to(10); // within 13 of the pending span: same window
    w.add(seg(10, 14, 300, 304, 4), 2);
    w.advance_to(40); // beyond: flush
    CHECK(w.windows_flushed() == 1);
    w.add(seg(40, 45, 101, 106, 6), 3);
    w.finish();
    CHECK(w.windows_flushed() == 2);
    std::vector<std::size_t> tags;
    for (const auto& e : w.retained())
      tags.push_back(e.tag);
    CHECK(tags == std::vector<std::size_t>{1, 2, 3});
    // segment 3 overlaps segment 1 on the database axis across windows
    CHECK(w.cross_window_overlaps() == 1);
    CHECK_THROWS_AS(WindowedResolver(0, 13), DomainError);
  }

  TEST_CASE("a full window is flushed before it overflows")
  {
    WindowedResolver w(4, 13);
    for (std::size_t i = 0; i < 10; ++i)
      w.add(seg(i, i + 2, 100 + i, 102 + i, 1.0 + i), i);
    w.finish();
    CHECK(w.windows_flushed() == 3);
    CHECK(!w.retained().empty());
  }
}
