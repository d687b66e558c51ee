#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "nlam/dynamics.hpp"
#include "nlam/lattice.hpp"
#include "nlam/potential.hpp"

using namespace nlam;

namespace {
LatticeState random_state(std::int32_t radius, std::uint64_t seed) {
  LatticeState q(radius);
  for (std::int32_t j = -radius; j <= radius; ++j)
    q.at(j) = cplx(2.0 * rng::uniform(seed, 10, j) - 1.0,
                   2.0 * rng::uniform(seed, 11, j) - 1.0);
  return q;
}

double l2_error(const LatticeState& a, const LatticeState& b) {
  REQUIRE(a.radius == b.radius);
  double s = 0.0;
  for (std::size_t i = 0; i < a.amp.size(); ++i) s += std::norm(a.amp[i] - b.amp[i]);
  return std::sqrt(s);
}

LatticeState evolve(const LatticeState& q0, const Potential& pot,
                    ModelParams p, double t_final) {
  StrangStepper st(pot, p, q0.radius);
  LatticeState q = q0;
  const std::int64_t n = std::llround(t_final / p.dt);
  for (std::int64_t k = 0; k < n; ++k) st.step(q);
  return q;
}
}  // namespace

TEST_CASE("zero hopping reduces to the exact onsite flow") {
  const Potential pot = sample_potential(3, 16);
  const LatticeState q0 = random_state(16, 9);
  ModelParams p;
  p.eps = 0.0;
  p.delta = 0.3;
  p.dt = 0.01;
  p.boundary = Boundary::dirichlet;
  const LatticeState got = evolve(q0, pot, p, 5.0);
  const LatticeState want = exact_onsite_solution(q0, pot, p.delta, 5.0);
  REQUIRE(l2_error(got, want) <= 1e-12);
}

TEST_CASE("exact onsite solution, single site by hand") {
  const Potential pot = potential_from_values({0.0, 0.3, 0.0});
  LatticeState q0(1);
  q0.at(0) = cplx(2.0, 0.0);
  const LatticeState q1 = exact_onsite_solution(q0, pot, 0.5, 1.0);
  // theta = (0.3 + 0.5 * 4) * 1 = 2.3
  REQUIRE(q1.at(0).real() == Catch::Approx(2.0 * std::cos(2.3)));
  REQUIRE(q1.at(0).imag() == Catch::Approx(-2.0 * std::sin(2.3)));
}

TEST_CASE("linear model matches the dense spectral propagator") {
  for (Boundary b : {Boundary::dirichlet, Boundary::periodic}) {
    const Potential pot = sample_potential(17, 24);
    LatticeState q0(24);
    q0.at(0) = 1.0;  // delta_0
    ModelParams p;
    p.eps = 0.25;
    p.delta = 0.0;
    p.dt = 1e-3;
    p.boundary = b;
    p.boundary_abort_fraction = 1.0;  // short run, no abort policing here
    const LatticeState got = evolve(q0, pot, p, 2.0);
    const LatticeState want = exact_linear_solution(q0, pot, p.eps, 2.0, b);
    INFO("boundary " << to_string(b));
    REQUIRE(l2_error(got, want) <= 1e-5);
  }
}

TEST_CASE("second-order convergence in dt") {
  const Potential pot = sample_potential(5, 12);
  const LatticeState q0 = random_state(12, 4);
  ModelParams p;
  p.eps = 0.3;
  p.delta = 0.3;
  p.boundary = Boundary::dirichlet;

  auto run = [&](double dt) {
    ModelParams pp = p;
    pp.dt = dt;
    return evolve(q0, pot, pp, 1.0);
  };
  const LatticeState ref = run(1.0 / 1600.0);
  const double e1 = l2_error(run(1.0 / 50.0), ref);
  const double e2 = l2_error(run(1.0 / 100.0), ref);
  const double ratio = e1 / e2;
  INFO("e1 " << e1 << " e2 " << e2);
  REQUIRE(ratio >= 3.5);
  REQUIRE(ratio <= 4.5);
}

TEST_CASE("mass is conserved to roundoff, energy to splitting order") {
  const Potential pot = sample_potential(8, 64);
  LatticeState q0(64);
  q0.at(0) = 1.0;
  ModelParams p;
  p.eps = 0.1;
  p.delta = 0.1;
  p.dt = 0.01;
  p.boundary = Boundary::dirichlet;

  StrangStepper st(pot, p, q0.radius);
  LatticeState q = q0;
  const double m0 = l2_norm_sq(q);
  const double e0 = hamiltonian_energy(q, pot, p);
  for (int k = 0; k < 10000; ++k) st.step(q);  // T = 100
  // squared-mass error accrues at ~1 ulp per step through the DST pair
  REQUIRE(std::abs(l2_norm_sq(q) / m0 - 1.0) <= 2e-12);
  REQUIRE(std::abs(hamiltonian_energy(q, pot, p) - e0) / std::abs(e0) <= 1e-4);
}

TEST_CASE("half steps compose exactly when hopping is off") {
  const Potential pot = sample_potential(2, 8);
  const LatticeState q0 = random_state(8, 5);
  ModelParams p;
  p.eps = 0.0;
  p.delta = 0.4;
  p.dt = 0.02;
  StrangStepper st(pot, p, q0.radius);
  LatticeState a = q0;
  st.step_with(a, 0.01);
  st.step_with(a, 0.01);
  LatticeState b = q0;
  st.step_with(b, 0.02);
  REQUIRE(l2_error(a, b) <= 1e-14);
}

TEST_CASE("integrator aborts when mass reaches the window edge") {
  const Potential pot = sample_potential(1, 8);
  LatticeState q0(8);
  q0.at(0) = 1.0;
  ModelParams p;
  p.eps = 1.0;
  p.delta = 0.0;
  p.dt = 0.01;
  p.boundary = Boundary::dirichlet;
  std::vector<double> grid;
  for (int t = 0; t <= 50; ++t) grid.push_back(t);
  REQUIRE_THROWS_AS(integrate(q0, pot, p, 50.0, grid, 4), BoundaryAbort);
}

TEST_CASE("integrator validates its grid and barrier") {
  const Potential pot = sample_potential(1, 8);
  LatticeState q0(8);
  q0.at(0) = 1.0;
  ModelParams p;
  p.dt = 0.1;
  REQUIRE_THROWS_AS(integrate(q0, pot, p, 1.0, {0.5, 0.25}, 4),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(integrate(q0, pot, p, 1.0, {0.5, 2.0}, 4),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(integrate(q0, pot, p, 1.0, {0.5}, 9),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(integrate(q0, pot, p, 1.0, {0.5}, 0),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(integrate(q0, pot, p, -1.0, {}, 4),
                    std::invalid_argument);
}

TEST_CASE("trace csv round-trips bit-exactly") {
  const Potential pot = sample_potential(6, 32);
  LatticeState q0(32);
  q0.at(0) = 1.0;
  ModelParams p;
  p.eps = 0.2;
  p.delta = 0.1;
  p.dt = 0.05;
  p.boundary = Boundary::dirichlet;
  const DiffusionTrace tr = integrate(q0, pot, p, 5.0, {0.0, 1.0, 2.0, 5.0}, 16);
  REQUIRE(tr.sample_times.size() == 4);
  REQUIRE(tr.diffusion_values[0] == 0.0);  // delta_0 has zero second moment

  const std::string path =
      std::filesystem::temp_directory_path().string() + "/nlam_trace.csv";
  write_trace_csv(tr, path);
  const DiffusionTrace rt = read_trace_csv(path);
  REQUIRE(rt.sample_times == tr.sample_times);
  REQUIRE(rt.diffusion_values == tr.diffusion_values);
  REQUIRE(rt.l2_values == tr.l2_values);
  REQUIRE(rt.energy_values == tr.energy_values);
  REQUIRE(rt.tail_values == tr.tail_values);
  std::remove(path.c_str());
}

TEST_CASE("potential must cover the state window") {
  const Potential small = potential_from_values(std::vector<double>(9, 0.5));
  LatticeState q(8);
  q.at(0) = 1.0;
  ModelParams p;
  REQUIRE_THROWS_AS(rhs(q, small, p), std::invalid_argument);
  const Potential seeded = sample_potential(1, 4);
  REQUIRE_NOTHROW(rhs(q, seeded, p));  // seeded potentials extend
}

TEST_CASE("stepper rejects nonpositive dt") {
  const Potential pot = sample_potential(1, 4);
  ModelParams p;
  p.dt = 0.0;
  REQUIRE_THROWS_AS(StrangStepper(pot, p, 4), std::invalid_argument);
}
