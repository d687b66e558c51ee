#include <catch2/catch_amalgamated.hpp>

#include <complex>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "nlam/lattice.hpp"
#include "nlam/rng.hpp"

using namespace nlam;

namespace {
LatticeState random_state(std::int32_t radius, std::uint64_t seed,
                          std::int32_t exclude = -1) {
  LatticeState q(radius);
  for (std::int32_t j = -radius; j <= radius; ++j) {
    if (std::abs(j) <= exclude) continue;
    q.at(j) = cplx(2.0 * rng::uniform(seed, 0, j) - 1.0,
                   2.0 * rng::uniform(seed, 1, j) - 1.0);
  }
  return q;
}
}  // namespace

TEST_CASE("state indexing and bounds") {
  LatticeState q(3);
  REQUIRE(q.size() == 7);
  REQUIRE(q.contains(3));
  REQUIRE(q.contains(-3));
  REQUIRE_FALSE(q.contains(4));
  q.at(-3) = cplx(1.0, 2.0);
  q.at(3) = cplx(0.0, -1.0);
  REQUIRE(q.amp.front() == cplx(1.0, 2.0));
  REQUIRE(q.amp.back() == cplx(0.0, -1.0));
  REQUIRE_THROWS_AS(q.at(4), std::out_of_range);
}

TEST_CASE("l2 norm and second moment") {
  LatticeState q(5);
  q.at(0) = cplx(1.0, 0.0);
  REQUIRE(l2_norm_sq(q) == 1.0);
  REQUIRE(diffusion_moment(q) == 0.0);

  q.at(3) = cplx(0.0, 2.0);
  // D = 0^2 * 1 + 3^2 * 4 = 36
  REQUIRE(l2_norm_sq(q) == 5.0);
  REQUIRE(diffusion_moment(q) == 36.0);

  q.at(-4) = cplx(1.0, 1.0);
  // symmetric contribution: 16 * 2
  REQUIRE(diffusion_moment(q) == Catch::Approx(36.0 + 32.0));
}

TEST_CASE("sobolev norms") {
  LatticeState q(4);
  q.at(0) = cplx(2.0, 0.0);
  q.at(2) = cplx(1.0, 0.0);
  q.at(-3) = cplx(0.0, 1.0);

  // s = 0 is the plain l2 norm, origin included.
  REQUIRE(sobolev_norm_sq(q, 0.0) == 6.0);
  // s = 1: 2^2*1 + 3^2*1; origin drops out (|0|^2 weight).
  REQUIRE(sobolev_norm_sq(q, 1.0) == 13.0);
  // s = 2: 2^4 + 3^4 = 97.
  REQUIRE(sobolev_norm_sq(q, 2.0) == 97.0);
  REQUIRE(sobolev_norm(q, 2.0) == Catch::Approx(std::sqrt(97.0)));
  REQUIRE_THROWS_AS(sobolev_norm_sq(q, -1.0), std::invalid_argument);
}

TEST_CASE("tail mass beyond the barrier") {
  LatticeState q(6);
  for (std::int32_t j = -6; j <= 6; ++j) q.at(j) = 1.0;
  REQUIRE(tail_mass(q, 4) == 4.0);  // sites -6,-5,5,6
  REQUIRE(tail_mass(q, 6) == 0.0);
  REQUIRE_THROWS_AS(tail_mass(q, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(tail_mass(q, 7), std::invalid_argument);
}

TEST_CASE("convolution against hand-computed values") {
  LatticeState p(1), q(1);
  p.at(0) = 1.0;
  p.at(1) = cplx(0.0, 1.0);
  q.at(-1) = 2.0;
  q.at(1) = cplx(1.0, 1.0);
  const LatticeState c = convolution(p, q);
  REQUIRE(c.radius == 2);
  REQUIRE(c.at(-1) == cplx(2.0, 0.0));                  // p0*q-1
  REQUIRE(c.at(0) == cplx(0.0, 2.0));                   // p1*q-1
  REQUIRE(c.at(1) == cplx(1.0, 1.0));                   // p0*q1
  REQUIRE(c.at(2) == cplx(0.0, 1.0) * cplx(1.0, 1.0));  // p1*q1
}

TEST_CASE("delta is the convolution identity") {
  LatticeState d(0);
  d.at(0) = 1.0;
  const LatticeState q = random_state(5, 11);
  const LatticeState c = convolution(d, q);
  for (std::int32_t j = -5; j <= 5; ++j) REQUIRE(c.at(j) == q.at(j));
}

TEST_CASE("tame constant and inequality on origin-free states") {
  REQUIRE(tame_constant(1.0) == 4.0);
  REQUIRE(tame_constant(2.0) == 8.0);
  REQUIRE_THROWS_AS(convolution_tame_check(LatticeState(1), LatticeState(1), -0.5),
                    std::invalid_argument);

  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const LatticeState p = random_state(24, seed, 0);
    const LatticeState q = random_state(24, seed + 1000, 0);
    for (double s : {1.0, 2.0, 3.0}) {
      const TameCheck c = convolution_tame_check(p, q, s);
      INFO("seed " << seed << " s " << s);
      REQUIRE(c.lhs <= c.rhs);
    }
  }
}

TEST_CASE("state csv dump and binary round-trip") {
  const LatticeState q = random_state(7, 3);
  const std::string dir = std::filesystem::temp_directory_path().string();
  const std::string csv = dir + "/nlam_test_state.csv";
  const std::string bin = dir + "/nlam_test_state.dat";

  dump_state_csv(q, csv);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  REQUIRE(header.find("site") != std::string::npos);

  save_state(q, bin);
  const LatticeState r = load_state(bin);
  REQUIRE(r.radius == q.radius);
  REQUIRE(r.amp == q.amp);  // bitwise
  std::remove(csv.c_str());
  std::remove(bin.c_str());
}

TEST_CASE("load rejects corrupt state files") {
  const std::string path =
      std::filesystem::temp_directory_path().string() + "/nlam_bad_state.dat";
  {
    std::ofstream out(path, std::ios::binary);
    out << "not a state";
  }
  REQUIRE_THROWS_AS(load_state(path), std::runtime_error);
  std::remove(path.c_str());
}
