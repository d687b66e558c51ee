#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "nlam/resonance.hpp"

using namespace nlam;

namespace {

std::set<std::string> rep_set(const std::vector<Monomial>& reps) {
  std::set<std::string> out;
  for (const Monomial& m : reps) out.insert(m.to_string());
  return out;
}

}  // namespace

TEST_CASE("monomial resonance thresholds") {
  const double gamma = 0.9;
  // single site q_0^2: diameter regularized to 1, |n| = 2
  REQUIRE(monomial_threshold(Monomial({{0, 2, 0}}), gamma) == 0.9 / 4.0);
  // hopping: Delta = 1, |n| = 2 -> gamma / 2^3
  REQUIRE(monomial_threshold(hopping_monomial(0, 1), gamma) == 0.9 / 8.0);
  // spread hopping: Delta = 2 -> gamma / (4 * 2^4)
  REQUIRE(monomial_threshold(Monomial({{0, 1, 0}, {2, 0, 1}}), gamma) ==
          0.9 / 64.0);

  REQUIRE_THROWS_AS(monomial_threshold(action_monomial(0), gamma),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(monomial_threshold(hopping_monomial(0, 1), 0.0),
                    std::invalid_argument);
}

TEST_CASE("minimal representative of a divisor class") {
  const Monomial two = minimal_representative(IntegerVector({{0, 2}, {1, -1}}));
  REQUIRE(two == Monomial({{0, 2, 0}, {1, 0, 1}}));
  REQUIRE(two.degree() == 3);

  // |k| = 1 classes get an action factor so the representative is cubic
  const Monomial up = minimal_representative(IntegerVector({{5, 1}}));
  REQUIRE(up == Monomial({{5, 2, 1}}));
  const Monomial down = minimal_representative(IntegerVector({{3, -1}}));
  REQUIRE(down == Monomial({{3, 1, 2}}));
  REQUIRE_FALSE(down.resonant());

  // the representative reproduces its class vector
  const IntegerVector k({{-2, 1}, {0, -3}, {4, 2}});
  const IntegerVector back = minimal_representative(k).divisor_vector();
  REQUIRE(back.entries == k.entries);

  REQUIRE_THROWS_AS(minimal_representative(IntegerVector{}),
                    std::invalid_argument);
}

TEST_CASE("class enumeration matches the small brute force count") {
  // top site 0, diameter <= 1, degree <= 2: |c|=2 at 0, or +-1 at 0 and -1
  const std::vector<Monomial> reps = enumerate_divisor_classes(0, 1.0, 2.0);
  REQUIRE(reps.size() == 6);
  const std::set<std::string> got = rep_set(reps);
  REQUIRE(got.count(Monomial({{0, 2, 0}}).to_string()) == 1);
  REQUIRE(got.count(Monomial({{0, 0, 2}}).to_string()) == 1);
  REQUIRE(got.count(Monomial({{-1, 1, 0}, {0, 1, 0}}).to_string()) == 1);
  REQUIRE(got.count(Monomial({{-1, 0, 1}, {0, 1, 0}}).to_string()) == 1);
  REQUIRE(got.count(Monomial({{-1, 1, 0}, {0, 0, 1}}).to_string()) == 1);
  REQUIRE(got.count(Monomial({{-1, 0, 1}, {0, 0, 1}}).to_string()) == 1);

  for (const Monomial& m : reps) {
    REQUIRE(m.j_plus() == 0);
    REQUIRE(m.diameter() <= 1);
    REQUIRE(m.divisor_vector().l1() == 2);
  }

  // raising the degree cap only adds classes
  const std::set<std::string> wider = rep_set(enumerate_divisor_classes(0, 1.0, 3.0));
  for (const std::string& s : got) REQUIRE(wider.count(s) == 1);
  REQUIRE(wider.size() > got.size());

  // |k|=1 classes appear once their padded cubic representative fits
  const std::vector<Monomial> single = enumerate_divisor_classes(0, 0.0, 3.0);
  REQUIRE(single.size() == 6);  // c in {+-1, +-2, +-3} at the top site
  REQUIRE(rep_set(single).count(Monomial({{0, 2, 1}}).to_string()) == 1);

  // impossible cutoffs give nothing
  REQUIRE(enumerate_divisor_classes(0, 1.0, 1.5).empty());
  REQUIRE(enumerate_divisor_classes(0, -1.0, 5.0).empty());
}

TEST_CASE("class floor prunes by threshold only") {
  const std::vector<Monomial> all = enumerate_divisor_classes(5, 4.0, 5.0, 0.9);
  const std::vector<Monomial> kept =
      enumerate_divisor_classes(5, 4.0, 5.0, 0.9, 1e-3);
  REQUIRE(kept.size() < all.size());
  const std::set<std::string> universe = rep_set(all);
  for (const Monomial& m : kept) {
    REQUIRE(universe.count(m.to_string()) == 1);
    REQUIRE(monomial_threshold(m, 0.9) >= 1e-3);
  }
  // every dropped class really is below the floor
  const std::set<std::string> kept_set = rep_set(kept);
  for (const Monomial& m : all)
    if (kept_set.count(m.to_string()) == 0)
      REQUIRE(monomial_threshold(m, 0.9) < 1e-3);
}

TEST_CASE("both orientations of every class are kept") {
  for (const Monomial& m : enumerate_divisor_classes(3, 3.0, 4.0)) {
    IntegerVector neg = m.divisor_vector();
    for (auto& [site, c] : neg.entries) c = -c;
    REQUIRE(rep_set(enumerate_divisor_classes(3, 3.0, 4.0))
                .count(minimal_representative(neg).to_string()) == 1);
  }
}

TEST_CASE("constrained enumeration enforces the window") {
  const NormalFormSchedule sch = build_schedule(1e-4, 0.009, 50, 2.0);
  REQUIRE(sch.M == 1);
  // ln 50 = 3.912: sites 47..53 are admissible, 54 and 44 are not
  REQUIRE_NOTHROW(enumerate_constrained(47, 1, sch, 2.0, 1e-4));
  REQUIRE_NOTHROW(enumerate_constrained(-53, 1, sch, 2.0, 1e-4));
  REQUIRE_THROWS_AS(enumerate_constrained(54, 1, sch, 2.0),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(enumerate_constrained(44, 1, sch, 2.0),
                    std::invalid_argument);

  const std::vector<Monomial> reps = enumerate_constrained(50, 1, sch, 2.0, 1e-4);
  REQUIRE_FALSE(reps.empty());
  for (const Monomial& m : reps) {
    REQUIRE(m.j_plus() == 50);
    REQUIRE(m.diameter() <= 10);  // 10 ln eps_1 / ln eps = 10 at s = 1
    REQUIRE(static_cast<double>(m.degree()) <= 5.0);  // 10 / kappa
  }
}

TEST_CASE("monte carlo matches closed form resonance probabilities") {
  // d = 2 v_0, threshold 0.225: p = 0.1125
  const Monomial sq({{0, 2, 0}});
  const auto [p1, s1] = resonant_probability_mc(sq, 0.9, 100000, 42);
  REQUIRE(std::abs(p1 - 0.1125) <= 3.0e-3);
  REQUIRE_THAT(s1, Catch::Matchers::WithinRel(
                       std::sqrt(p1 * (1.0 - p1) / 1e5), 1e-12));

  // d = v_0 - v_1, threshold t = 0.1125: p = t (2 - t)
  const auto [p2, s2] = resonant_probability_mc(hopping_monomial(0, 1), 0.9,
                                                100000, 42);
  REQUIRE(std::abs(p2 - 0.21234375) <= 3.9e-3);

  REQUIRE_THROWS_AS(resonant_probability_mc(action_monomial(0), 0.9, 2000, 1),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(resonant_probability_mc(sq, 0.9, 999, 1),
                    std::invalid_argument);
}

TEST_CASE("shared draws make the estimate monotone in gamma") {
  const Monomial n({{0, 1, 0}, {1, 0, 2}});
  double prev = 0.0;
  for (const double gamma : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const auto [p, se] = resonant_probability_mc(n, gamma, 5000, 7);
    REQUIRE(p >= prev);  // exact: same potentials, nested resonance sets
    prev = p;
  }
  // and the estimator is a pure function of its arguments
  const auto a = resonant_probability_mc(n, 0.5, 5000, 7);
  const auto b = resonant_probability_mc(n, 0.5, 5000, 7);
  REQUIRE(a.first == b.first);
  REQUIRE(a.second == b.second);
}

TEST_CASE("union estimate stays under the step bound") {
  const NormalFormSchedule sch = build_schedule(1e-4, 0.009, 50, 2.0);
  const MeasureEstimate m = union_measure_bound(50, 1, sch, 2.0, 2000, 3, 1e-5);
  REQUIRE(m.classes > 0);
  REQUIRE(m.samples == 2000);
  REQUIRE_THAT(m.bound, Catch::Matchers::WithinRel(0.954992586021436, 1e-12));
  REQUIRE(m.estimate <= m.bound);
  REQUIRE(m.std_err < 0.02);

  // s >= 2 uses eps_s^{1/125}; deeper steps shrink gamma, so with shared
  // draws the union estimate cannot grow
  const NormalFormSchedule sch2 = build_schedule(1e-4, 0.009, 50, 1.25);
  REQUIRE(sch2.M == 23);
  const MeasureEstimate u1 = union_measure_bound(50, 1, sch2, 1.25, 2000, 3, 1e-4);
  const MeasureEstimate u2 = union_measure_bound(50, 2, sch2, 1.25, 2000, 3, 1e-4);
  REQUIRE_THAT(u2.bound, Catch::Matchers::WithinRel(0.9289108143520829, 1e-12));
  REQUIRE(u2.estimate <= u1.estimate);
  REQUIRE(u2.estimate <= u2.bound);
}

TEST_CASE("best effort schedule handles both regimes") {
  bool conv = false;
  const NormalFormSchedule good =
      build_schedule_best_effort(1e-4, 0.009, 50, 2.0, &conv);
  REQUIRE(conv);
  const NormalFormSchedule ref = build_schedule(1e-4, 0.009, 50, 2.0);
  REQUIRE(good.M == ref.M);
  REQUIRE(good.steps.size() == ref.steps.size());
  for (std::size_t i = 0; i < ref.steps.size(); ++i)
    REQUIRE(good.steps[i].eps_s == ref.steps[i].eps_s);

  // the headline measure configuration sits below the target already, so the
  // recurrence closes in one step even though eps_2 > eps_1
  const NormalFormSchedule headline =
      build_schedule_best_effort(1e-3, 0.005, 50, 2.0, &conv);
  REQUIRE(conv);
  REQUIRE(headline.M == 1);

  // above the target the same growth means divergence
  const NormalFormSchedule bad =
      build_schedule_best_effort(5e-3, 0.005, 50, 2.0, &conv);
  REQUIRE_FALSE(conv);
  REQUIRE(bad.M == 1);
  REQUIRE(bad.steps.size() == 2);
  REQUIRE(bad.steps[1].eps_s > bad.steps[0].eps_s);
}

TEST_CASE("nonresonant measure on the headline configuration") {
  const NonresonantResult r =
      nonresonant_measure(50, 1e-3, 0.005, 2.0, 1500, 9, 1e-5);
  REQUIRE(r.window_sites == 14);  // sites 47..53, both signs
  REQUIRE(r.classes > 0);
  REQUIRE(r.samples == 1500);
  REQUIRE(r.schedule_converged);
  REQUIRE(r.schedule_M == 1);
  REQUIRE_THAT(r.lower_bound,
               Catch::Matchers::WithinRel(7.522353482060459e-11, 1e-12));
  // the observed clear probability sits far above the analytic floor
  REQUIRE(r.estimate + 3.0 * r.std_err >= r.lower_bound);

  const NonresonantResult again =
      nonresonant_measure(50, 1e-3, 0.005, 2.0, 1500, 9, 1e-5);
  REQUIRE(again.estimate == r.estimate);
}

TEST_CASE("dyadic success probability") {
  REQUIRE_THROWS_AS(dyadic_success(9.9, 0.5), std::invalid_argument);
  REQUIRE_THROWS_AS(dyadic_success(1000.0, -0.1), std::invalid_argument);
  REQUIRE_THROWS_AS(dyadic_success(1000.0, 1.1), std::invalid_argument);
  REQUIRE(dyadic_success(1000.0, 0.0) == 0.0);
  REQUIRE(dyadic_success(1000.0, 1.0) == 1.0);
  // 28 trials at p = 1/2: 1 - 2^{-28}
  REQUIRE_THAT(dyadic_success(1000.0, 0.5),
               Catch::Matchers::WithinRel(0.9999999962747097, 1e-12));
}

TEST_CASE("dyadic check in the deep subcritical regime") {
  const double trials[] = {28.0, 217.0, 1737.0};
  const double jb[] = {1e3, 1e4, 1e5};
  for (int i = 0; i < 3; ++i) {
    const DyadicCheck c = dyadic_check(jb[i], -2100.0);
    REQUIRE(c.trials == trials[i]);
    REQUIRE(c.p_single > 0.5);
    REQUIRE(c.p_single < 0.75);
    REQUIRE(c.log_rhs == -std::sqrt(jb[i]));
    REQUIRE(c.log_fail < c.log_rhs);
    REQUIRE(c.holds);
  }
  REQUIRE_THAT(dyadic_check(1e3, -2100.0).p_single,
               Catch::Matchers::WithinRel(0.7194836310252063, 1e-12));

  // at eps = 1e-3 the single-trial probability collapses and the
  // inequality fails by hundreds of orders of magnitude
  const DyadicCheck weak = dyadic_check(1e3, -3.0);
  REQUIRE(weak.p_single < 1e-17);
  REQUIRE_FALSE(weak.holds);

  REQUIRE_THROWS_AS(dyadic_check(5.0, -2100.0), std::invalid_argument);
}

TEST_CASE("census covers the window and echoes the overall measure") {
  const ResonanceCensus c = run_census(50, 1e-4, 0.009, 2.0, 1200, 5, 1e-5);
  REQUIRE(c.j0 == 50);
  REQUIRE(c.per_k.size() == 14);
  for (std::int32_t a = 47; a <= 53; ++a) {
    REQUIRE(c.per_k.count(a) == 1);
    REQUIRE(c.per_k.count(-a) == 1);
  }
  for (const auto& [k, pk] : c.per_k) {
    REQUIRE(pk.classes > 0);
    REQUIRE_THAT(pk.bound, Catch::Matchers::WithinRel(0.954992586021436, 1e-12));
    REQUIRE(pk.estimate <= pk.bound);
  }
  REQUIRE(c.schedule_converged);
  REQUIRE(c.schedule_M == 1);
  REQUIRE(c.lower_bound > 0.0);
  REQUIRE(c.overall_estimate >= 0.0);
  REQUIRE(c.overall_estimate <= 1.0);
}
