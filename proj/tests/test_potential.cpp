#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <set>

#include "nlam/potential.hpp"
#include "nlam/rng.hpp"

using namespace nlam;

TEST_CASE("counter rng is deterministic and in [0,1)") {
  std::set<double> seen;
  for (std::int64_t j = -50; j <= 50; ++j) {
    const double u = rng::uniform(7, j);
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    REQUIRE(u == rng::uniform(7, j));  // pure function of (seed, site)
    seen.insert(u);
  }
  REQUIRE(seen.size() == 101);  // no collisions across sites
  REQUIRE(rng::uniform(7, 3) != rng::uniform(8, 3));
  // the 3-key stream is a different stream
  REQUIRE(rng::uniform(7, 0, 3) != rng::uniform(7, 3));
}

TEST_CASE("sampled potential matches the rng and extends beyond its window") {
  const Potential p = sample_potential(42, 10);
  REQUIRE(p.radius == 10);
  for (std::int32_t j = -10; j <= 10; ++j)
    REQUIRE(p.value(j) == rng::uniform(42, j));
  // seeded extension: identical no matter which window was materialized
  const Potential big = sample_potential(42, 100);
  REQUIRE(p.value(55) == big.value(55));
  REQUIRE(p.value(-73) == big.value(-73));
  REQUIRE_THROWS_AS(sample_potential(1, 0), std::invalid_argument);
}

TEST_CASE("explicit potentials do not extend") {
  const Potential p = potential_from_values({0.1, 0.2, 0.3});
  REQUIRE(p.radius == 1);
  REQUIRE(p.value(-1) == 0.1);
  REQUIRE(p.value(1) == 0.3);
  REQUIRE_THROWS_AS(p.value(2), std::out_of_range);
  REQUIRE_THROWS_AS(potential_from_values({0.1, 0.2}), std::invalid_argument);
  REQUIRE_THROWS_AS(potential_from_values({}), std::invalid_argument);
}

TEST_CASE("potential csv dump") {
  const Potential p = sample_potential(5, 3);
  const std::string path =
      std::filesystem::temp_directory_path().string() + "/nlam_pot.csv";
  p.dump_csv(path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "site,value");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  REQUIRE(rows == 7);
  std::remove(path.c_str());
}

TEST_CASE("integer vectors normalize and measure themselves") {
  IntegerVector k({{3, -2}, {-1, 1}, {5, 0}});
  REQUIRE(k.entries.size() == 2);  // zero entry dropped
  REQUIRE(k.entries.front().first == -1);
  REQUIRE(k.l1() == 3);
  REQUIRE(k.diameter() == 4);  // 3 - (-1)
  REQUIRE_FALSE(k.zero());

  REQUIRE(IntegerVector{}.zero());
  REQUIRE_THROWS_AS(IntegerVector({{2, 1}, {2, 1}}), std::invalid_argument);
  REQUIRE_THROWS_AS(IntegerVector{}.diameter(), std::invalid_argument);
}

TEST_CASE("small divisor is the k-weighted potential sum") {
  const Potential p = potential_from_values({0.25, 0.5, 0.125});
  const IntegerVector k({{-1, 1}, {1, -2}});
  // 1*0.25 + (-2)*0.125 = 0
  REQUIRE(small_divisor(p, k) == 0.0);
  const IntegerVector k2({{0, 3}});
  REQUIRE(small_divisor(p, k2) == 1.5);
  REQUIRE_THROWS_AS(small_divisor(p, IntegerVector{}), std::invalid_argument);
}

TEST_CASE("nonresonance threshold formula") {
  const double gamma = 0.9;
  // single site, |k| = 1, diameter 0 (regularized to 1): gamma / (1 * 1^2)
  REQUIRE(nonresonance_threshold(IntegerVector({{4, 1}}), gamma) ==
          Catch::Approx(gamma));
  // adjacent (1,-1): diameter 1, |k| = 2: gamma / (1 * 2^3)
  REQUIRE(nonresonance_threshold(IntegerVector({{0, 1}, {1, -1}}), gamma) ==
          Catch::Approx(gamma / 8.0));
  // diameter 3, |k| = 2: gamma / (9 * 2^5)
  REQUIRE(nonresonance_threshold(IntegerVector({{0, 1}, {3, -1}}), gamma) ==
          Catch::Approx(gamma / 288.0));
}

TEST_CASE("nonresonance check flags exact resonances") {
  const Potential p = potential_from_values({0.3, 0.7, 0.3});
  const IntegerVector k({{-1, 1}, {1, -1}});  // divisor exactly 0
  const NonresonanceReport bad = check_nonresonance(p, k, 0.5);
  REQUIRE_FALSE(bad.ok);
  REQUIRE(bad.divisor == 0.0);
  REQUIRE(bad.threshold > 0.0);

  const IntegerVector k2({{0, 1}});  // divisor 0.7
  REQUIRE(check_nonresonance(p, k2, 0.5).ok);
  // gamma -> 0 makes any nonzero divisor pass
  REQUIRE(check_nonresonance(p, k2, 1e-300).ok);
}
