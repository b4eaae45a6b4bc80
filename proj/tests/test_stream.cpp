#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <tuple>

#include "seqsprt/error.hpp"
#include "seqsprt/stream.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace seqsprt;

namespace {

DescriptorTable random_table(std::size_t n, std::size_t dim, std::uint64_t seed, Metric m = Metric::euclidean)
{
  std::mt19937_64 rng(seed);
  std::vector<double> v(n * dim);
  for (auto& x : v)
    x = uniform01(rng);
  return DescriptorTable(dim, std::move(v), m);
}

// Monotone decreasing llr in distance.
const DensityPair& linear_llr()
{
  static const DensityPair dp = test::gaussian_pair(0.0, 1.0, 3.0, 1.0);
  return dp;
}

} // namespace

TEST_SUITE("stream")
{
  TEST_CASE("native distances")
  {
    const auto rows = std::vector<std::vector<double>>{{1.0, 0.0}, {0.0, 2.0}, {2.0, 0.0}};
    auto tab = DescriptorTable::from_rows(rows, Metric::euclidean);
    CHECK(tab.distance(0, 1) == doctest::Approx(std::sqrt(5.0)));
    tab.set_metric(Metric::manhattan);
    CHECK(tab.distance(0, 1) == doctest::Approx(3.0));
    tab.set_metric(Metric::cosine);
    CHECK(tab.distance(0, 1) == doctest::Approx(1.0));
    CHECK(tab.distance(0, 2) == doctest::Approx(0.0));
    CHECK(metric_from_string(to_string(Metric::cosine)) == Metric::cosine);
    CHECK_THROWS_AS(metric_from_string("hamming"), ConfigError);
    CHECK_THROWS_AS(DescriptorTable::from_rows({{1.0}, {1.0, 2.0}}, Metric::euclidean), DomainError);
  }

  TEST_CASE("csv round trip")
  {
    const auto tab = random_table(20, 5, 1);
    const auto path = std::filesystem::temp_directory_path() / "seqsprt_desc_test.csv";
    tab.save_csv(path.string());
    const auto back = DescriptorTable::load_csv(path.string(), Metric::euclidean);
    REQUIRE(back.size() == 20);
    for (std::size_t a = 0; a < 20; ++a)
      CHECK(back.distance(a, (a + 3) % 20) == tab.distance(a, (a + 3) % 20));
    std::filesystem::remove(path);
  }

  TEST_CASE("identical descriptors: ties break by ascending index")
  {
    const DescriptorTable tab(2, std::vector<double>(20, 0.5), Metric::euclidean);
    const auto c = retrieve(tab, 5, 3, 2, 0);
    REQUIRE(c.candidates.size() == 3);
    CHECK(c.candidates[0].index == 0);
    CHECK(c.candidates[1].index == 1);
    CHECK(c.candidates[2].index == 2);
  }

  TEST_CASE("exclusion covering all earlier frames leaves only later ones")
  {
    const auto tab = random_table(40, 4, 2);
    const auto c = retrieve(tab, 3, 10, 5, 0);
    REQUIRE(!c.candidates.empty());
    for (const auto& k : c.candidates)
      CHECK(k.index > 8);
  }

  TEST_CASE("a planted duplicate ranks first")
  {
    auto rows = std::vector<std::vector<double>>();
    std::mt19937_64 rng(3);
    for (int i = 0; i < 100; ++i)
      rows.push_back({uniform01(rng), uniform01(rng), uniform01(rng)});
    rows[90] = rows[10];
    const auto tab = DescriptorTable::from_rows(rows, Metric::euclidean);
    const auto c = retrieve(tab, 10, 5, 30, 10);
    REQUIRE(!c.candidates.empty());
    CHECK(c.candidates[0].index == 90);
    CHECK(c.candidates[0].distance == 0.0);
  }

  TEST_CASE("ratio gate drops distant candidates")
  {
    const auto tab = DescriptorTable::from_rows({{0.0}, {5.0}, {1.0}, {1.4}, {2.0}, {10.0}}, Metric::euclidean);
    RetrievalParams p;
    p.budget = 5;
    p.exclusion = 0;
    p.exclusivity = 0;
    p.ratio_gate = 1.5;
    const auto c = retrieve(tab, 0, p);
    REQUIRE(c.candidates.size() == 2);
    CHECK(c.candidates[0].index == 2);
    CHECK(c.candidates[1].index == 3);
    p.past_only = true;
    CHECK(retrieve(tab, 3, p).candidates.front().index == 2);
    CHECK_THROWS_AS(retrieve(tab, 6, p), DomainError);
  }

  TEST_CASE("property: retrieval equals the brute-force oracle")
  {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 20 + rng() % 481;
      const auto metric = static_cast<Metric>(rng() % 3);
      // coarse values make distance ties common
      std::vector<double> v(n * 3);
      for (auto& x : v)
        x = static_cast<double>(rng() % 4);
      const DescriptorTable tab(3, std::move(v), metric);
      const std::size_t q = rng() % n;
      const std::size_t budget = 1 + rng() % 8;
      const std::size_t excl = rng() % 40;
      const std::size_t exv = rng() % 15;
      const auto got = retrieve(tab, q, budget, excl, exv);
      std::vector<std::size_t> idx;
      for (const auto& c : got.candidates) {
        idx.push_back(c.index);
        CHECK(c.distance == tab.distance(q, c.index));
      }
      CAPTURE(trial);
      CHECK(idx == oracle::retrieve(tab, q, budget, excl, exv));
    }
  }

  TEST_CASE("aligned diagonal is chosen when it is the unique best match")
  {
    // query frames 0..9 repeat at 40..49; everything else is far away
    std::vector<std::vector<double>> rows(80, std::vector<double>(2, 0.0));
    for (std::size_t k = 0; k < 80; ++k)
      rows[k] = {static_cast<double>(k) * 10.0, 0.0};
    for (std::size_t i = 0; i < 10; ++i)
      rows[40 + i] = rows[i];
    const auto tab = DescriptorTable::from_rows(rows, Metric::euclidean);
    const auto s = build_stream(tab, linear_llr(), 0, 40, {0.5, 0.75, 1.0, 1.25, 1.5, 2.0}, 2, 10);
    REQUIRE(s.size() == 10);
    for (const auto& o : s.observations) {
      CHECK(o.offset == static_cast<long>(o.step));
      // at step 0 every velocity lands on offset 0 and the smallest wins
      CHECK(o.nu == (o.step == 0 ? 0.5 : 1.0));
      CHECK(o.delta == 0);
      CHECK(o.distance == 0.0);
    }
  }

  TEST_CASE("nu_set {1} with no jitter is the rigid diagonal")
  {
    const auto tab = random_table(60, 4, 5);
    const auto s = build_stream(tab, linear_llr(), 3, 30, {1.0}, 0, 13);
    const auto r = build_rigid_stream(tab, 3, 30, 13);
    REQUIRE(s.size() == 13);
    CHECK(s == r);
    for (std::size_t i = 0; i < s.size(); ++i)
      CHECK(s.observations[i].distance == tab.distance(3 + i, 30 + i));
  }

  TEST_CASE("half-speed revisit selects nu = 2")
  {
    std::mt19937_64 rng(8);
    std::vector<std::vector<double>> rows(80);
    for (auto& r : rows)
      r = {uniform01(rng), uniform01(rng), uniform01(rng), uniform01(rng)};
    for (std::size_t i = 0; i < 13; ++i)
      rows[40 + 2 * i] = rows[i];
    const auto tab = DescriptorTable::from_rows(rows, Metric::euclidean);
    const std::vector<double> nus{1.0, 2.0};
    const auto s = build_stream(tab, linear_llr(), 0, 40, nus, 2, 13);
    REQUIRE(s.size() == 13);
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto& o = s.observations[i];
      CAPTURE(i);
      CHECK(o.offset == static_cast<long>(2 * i));
      CHECK(o.distance == 0.0);
      if (i > 0)
        CHECK(o.nu == 2.0);
      // exhaustive enumeration: no reachable index beats the exact repeat
      for (double nu : nus)
        for (int d = -2; d <= 2; ++d) {
          const long k = static_cast<long>(std::floor(nu * static_cast<double>(i) + d));
          if (k + 40 >= 0 && k + 40 < 80)
            CHECK(tab.distance(i, static_cast<std::size_t>(40 + k)) >= o.distance);
        }
    }
  }

  TEST_CASE("property: greedy dominance, tie-break and boundary safety")
  {
    std::mt19937_64 rng(21);
    const std::vector<double> nus{0.5, 0.75, 1.0, 1.25, 1.5, 2.0};
    for (int trial = 0; trial < 300; ++trial) {
      const std::size_t n = 30 + rng() % 50;
      std::vector<double> v(n * 2);
      for (auto& x : v)
        x = static_cast<double>(rng() % 3); // many exact ties
      const DescriptorTable tab(2, std::move(v), Metric::euclidean);
      const std::size_t q = rng() % n, t = rng() % n;
      const int dmax = static_cast<int>(rng() % 3);
      const auto s = build_stream(tab, linear_llr(), q, t, nus, dmax, 13);
      CHECK(s.size() <= std::min<std::size_t>(13, n - q));
      if (s.size() < std::min<std::size_t>(13, n - q))
        CHECK(!track_step(tab, linear_llr(), q, t, s.size(), nus, dmax));
      for (std::size_t i = 0; i < s.size(); ++i) {
        const auto& o = s.observations[i];
        CHECK(o.step == i);
        CHECK(q + i < n);
        CHECK(static_cast<long>(t) + o.offset >= 0);
        CHECK(static_cast<long>(t) + o.offset < static_cast<long>(n));
        CHECK(std::abs(o.delta) <= dmax);
        CHECK(o.offset == static_cast<long>(std::floor(o.nu * static_cast<double>(i) + o.delta)));
        CHECK(o.distance == tab.distance(q + i, static_cast<std::size_t>(static_cast<long>(t) + o.offset)));
        const double chosen = linear_llr().llr(o.distance);
        std::tuple<int, double, int> best_key{1 << 20, 0.0, 0};
        for (double nu : nus)
          for (int d = -dmax; d <= dmax; ++d) {
            const long k = static_cast<long>(std::floor(nu * static_cast<double>(i) + d));
            const long idx = static_cast<long>(t) + k;
            if (idx < 0 || idx >= static_cast<long>(n))
              continue;
            const double l = linear_llr().llr(tab.distance(q + i, static_cast<std::size_t>(idx)));
            CHECK(chosen >= l);
            if (l == chosen)
              best_key = std::min(best_key, std::tuple<int, double, int>{std::abs(d), nu, d});
          }
        CHECK(std::get<0>(best_key) == std::abs(o.delta));
        CHECK(std::get<1>(best_key) == o.nu);
      }
    }
  }

  TEST_CASE("incremental tracker replays build_stream")
  {
    const auto tab = random_table(50, 3, 9);
    const std::vector<double> nus{0.5, 1.0, 2.0};
    const auto s = build_stream(tab, linear_llr(), 10, 35, nus, 2, 13);
    StreamTracker tr(tab, linear_llr(), 10, 35, nus, 2, 13);
    std::vector<Observation> got;
    while (auto o = tr.next())
      got.push_back(*o);
    CHECK(got == s.observations);
    StreamSource src(s);
    std::size_t n = 0;
    while (src.next())
      ++n;
    CHECK(n == s.size());
  }

  TEST_CASE("per-stream velocity mode commits to one nu")
  {
    const auto tab = random_table(60, 3, 10);
    TrackerConfig cfg;
    cfg.velocity_mode = VelocityMode::per_stream;
    const auto s = build_stream(tab, linear_llr(), 0, 30, cfg);
    const auto nu = s.nu_trace();
    CHECK(std::all_of(nu.begin(), nu.end(), [&](double v) { return v == nu.front(); }));
  }

  TEST_CASE("invalid stream requests")
  {
    const auto tab = random_table(10, 2, 1);
    CHECK_THROWS_AS(build_stream(tab, linear_llr(), 0, 5, {}, 2, 13), DomainError);
    CHECK_THROWS_AS(build_stream(tab, linear_llr(), 10, 5, {1.0}, 2, 13), DomainError);
    CHECK(build_stream(tab, linear_llr(), 9, 0, {1.0}, 0, 13).size() == 1);
  }
}
