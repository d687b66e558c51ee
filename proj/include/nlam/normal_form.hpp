#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nlam/formal.hpp"
#include "nlam/monomial.hpp"
#include "nlam/potential.hpp"

namespace nlam {

struct ScheduleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ScheduleRow {
  std::int32_t s = 0;
  double eps_s = 0.0;
  double delta_s = 0.0;
  double n_s = 0.0;  // annulus half-width at step s
};

// The iteration schedule: eps_1 = eps, eps_s = eps_{s-1}^{3/2} +
// j0^{-tau/2} eps_{s-1}; delta_s = prod_{j<s} (1 - 1/(5 j^2));
// N_s = ln j0 - 20 ln eps_s / ln eps.  Stops at eps_{M+1} <= j0^{-3/kappa}.
// Rows cover s = 1 .. M+1 so exit checks at s = M have their values.
struct NormalFormSchedule {
  double eps = 0.0;
  double tau = 0.0;
  double kappa = 1.0;
  std::int32_t j0 = 0;
  std::vector<ScheduleRow> steps;
  std::int32_t M = 0;

  const ScheduleRow& row(std::int32_t s) const {
    if (s < 1 || s > static_cast<std::int32_t>(steps.size()))
      throw std::out_of_range("schedule: step " + std::to_string(s) +
                              " outside 1.." + std::to_string(steps.size()));
    return steps[static_cast<std::size_t>(s - 1)];
  }
  double eps_at(std::int32_t s) const { return row(s).eps_s; }
  double delta_at(std::int32_t s) const { return row(s).delta_s; }
  double n_at(std::int32_t s) const { return row(s).n_s; }
  double gamma_at(std::int32_t s) const { return std::pow(eps_at(s), 0.01); }
  double target() const {
    return std::pow(static_cast<double>(j0), -3.0 / kappa);
  }
};

inline NormalFormSchedule build_schedule(double eps, double tau,
                                         std::int32_t j0, double kappa) {
  if (!(eps > 0.0 && eps < 1.0))
    throw std::invalid_argument("build_schedule: eps outside (0,1)");
  if (!(tau > 0.0 && tau < 0.01))
    throw std::invalid_argument("build_schedule: tau outside (0, 1/100)");
  if (!(kappa > 0.0)) throw std::invalid_argument("build_schedule: kappa <= 0");
  if (j0 < 10) throw std::invalid_argument("build_schedule: j0 < 10");

  NormalFormSchedule sch;
  sch.eps = eps;
  sch.tau = tau;
  sch.kappa = kappa;
  sch.j0 = j0;
  const double target = sch.target();
  const double hop = std::pow(static_cast<double>(j0), -tau / 2.0);
  const double log_eps = std::log(eps);
  const double log_j0 = std::log(static_cast<double>(j0));
  constexpr std::int32_t max_steps = 10000;

  double eps_s = eps, delta_s = 1.0;
  for (std::int32_t s = 1;; ++s) {
    sch.steps.push_back({s, eps_s, delta_s, log_j0 - 20.0 * std::log(eps_s) / log_eps});
    const double eps_next = std::pow(eps_s, 1.5) + hop * eps_s;
    const double delta_next = delta_s * (1.0 - 1.0 / (5.0 * s * s));
    if (eps_next <= target) {
      sch.M = s;
      sch.steps.push_back(
          {s + 1, eps_next, delta_next, log_j0 - 20.0 * std::log(eps_next) / log_eps});
      return sch;
    }
    if (eps_next >= eps_s)
      throw ScheduleError(
          "epsilon above threshold: sqrt(eps_s) + j0^{-tau/2} = " +
          std::to_string(std::sqrt(eps_s) + hop) + " >= 1 at s = " +
          std::to_string(s) + ", target " + std::to_string(target) +
          " unreachable");
    if (s >= max_steps)
      throw ScheduleError(
          "epsilon above threshold: no convergence within 10000 steps");
    eps_s = eps_next;
    delta_s = delta_next;
  }
}

// Empirical largest eps for which build_schedule succeeds, by geometric
// bisection.  Near the analytic boundary sqrt(eps) = 1 - j0^{-tau/2} the
// step count blows past the cap, so the empirical value sits slightly below.
inline double epsilon_threshold(double tau, std::int32_t j0, double kappa,
                                double rel_tol = 1e-6) {
  auto converges = [&](double e) {
    try {
      build_schedule(e, tau, j0, kappa);
      return true;
    } catch (const ScheduleError&) {
      return false;
    }
  };
  double lo = 1e-12, hi = 1.0 - 1e-12;
  if (!converges(lo)) return 0.0;
  if (converges(hi)) return hi;
  while (hi - lo > rel_tol * hi) {
    const double mid = std::sqrt(lo * hi);
    (converges(mid) ? lo : hi) = mid;
  }
  return lo;
}

// Desk-scale schedule: true eps_s / delta_s recurrences and stopping rule,
// but a fixed annulus half-width instead of N_s = ln j0 - 20 ln eps_s/ln eps.
// The formula widths are positive only for j0 > e^20, so at any desk-scale
// j0 the annulus would be empty and the iteration would trivially do
// nothing; a fixed width keeps the elimination observable.
inline NormalFormSchedule desk_schedule(double eps, double tau,
                                        std::int32_t j0, double kappa,
                                        double annulus_width) {
  NormalFormSchedule sch = build_schedule(eps, tau, j0, kappa);
  for (auto& r : sch.steps) r.n_s = annulus_width;
  return sch;
}

inline Potential materialize_potential(const Potential& pot,
                                       std::int32_t radius) {
  if (radius < 1)
    throw std::invalid_argument("materialize_potential: radius < 1");
  Potential out;
  out.seed = pot.seed;
  out.seeded = false;
  out.radius = radius;
  out.values.reserve(static_cast<std::size_t>(2 * radius + 1));
  for (std::int32_t j = -radius; j <= radius; ++j)
    out.values.push_back(pot.value(j));
  return out;
}

struct RemovalCutoffs {
  double annulus_width = -1.0;  // ceil(N_s); negative = empty annulus
  double max_diameter = 0.0;    // 10 ln eps_{s+1} / ln eps
  double max_degree = 0.0;      // 10 / kappa
};

inline RemovalCutoffs removal_cutoffs(const NormalFormSchedule& sch,
                                      std::int32_t s) {
  RemovalCutoffs cut;
  cut.annulus_width = std::ceil(sch.n_at(s));
  cut.max_diameter = 10.0 * std::log(sch.eps_at(s + 1)) / std::log(sch.eps);
  cut.max_degree = 10.0 / sch.kappa;
  return cut;
}

// Split R into the removable part (non-resonant, annulus-touching, degree-
// and diameter-capped) and everything else.
inline std::pair<FormalHamiltonian, FormalHamiltonian> select_removable(
    const FormalHamiltonian& r, const NormalFormSchedule& sch, std::int32_t s,
    const TameWindow& w) {
  (void)w;
  const RemovalCutoffs cut = removal_cutoffs(sch, s);
  FormalHamiltonian sel, rest;
  for (const auto& [n, c] : r.terms) {
    const bool pick = !n.resonant() && n.degree() <= cut.max_degree &&
                      n.diameter() <= cut.max_diameter &&
                      n.touches_annulus(sch.j0, cut.annulus_width);
    (pick ? sel : rest).terms.emplace(n, c);
  }
  return {std::move(sel), std::move(rest)};
}

inline FormalHamiltonian annulus_part(const FormalHamiltonian& h,
                                      std::int32_t j0, double width) {
  FormalHamiltonian out;
  for (const auto& [n, c] : h.terms)
    if (n.touches_annulus(j0, width)) out.terms.emplace(n, c);
  return out;
}

inline std::string to_string(const IntegerVector& k) {
  std::string s = "(";
  for (std::size_t i = 0; i < k.entries.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(k.entries[i].first) + ":" +
         std::to_string(k.entries[i].second);
  }
  return s + ")";
}

// A homological solve hit a divisor below its non-resonance threshold; the
// quantification of how often this happens is the measure module's job.
struct ResonanceAbort : std::runtime_error {
  IntegerVector k;
  double divisor = 0.0;
  double threshold = 0.0;
  double gamma = 0.0;

  ResonanceAbort(IntegerVector k_, double d, double t, double g)
      : std::runtime_error("resonance: divisor " + std::to_string(d) +
                           " below threshold " + std::to_string(t) +
                           " for k = " + nlam::to_string(k_) +
                           " at gamma = " + std::to_string(g)),
        k(std::move(k_)),
        divisor(d),
        threshold(t),
        gamma(g) {}
};

// F(n) = R(n) / (i d(n)) with d(n) = sum (n_j - n'_j) v_j, and
// dF/dv_j = (dR/dv_j)/(i d) - R(n) (n_j - n'_j)/(i d^2).
inline FormalHamiltonian solve_homological(const FormalHamiltonian& target,
                                           const Potential& pot,
                                           double gamma) {
  FormalHamiltonian f;
  for (const auto& [n, c] : target.terms) {
    if (n.resonant())
      throw std::invalid_argument("solve_homological: resonant monomial " +
                                  n.to_string());
    const IntegerVector k = n.divisor_vector();
    const NonresonanceReport rep = check_nonresonance(pot, k, gamma);
    if (!rep.ok) throw ResonanceAbort(k, rep.divisor, rep.threshold, gamma);
    const double d = rep.divisor;
    const cplx inv_id = cplx(0.0, -1.0) / d;  // 1/(i d)
    Coefficient fc;
    fc.value = c.value * inv_id;
    for (const auto& [site, dr] : c.v_derivatives)
      fc.v_derivatives[site] += dr * inv_id;
    for (const auto& [site, kj] : k.entries)
      fc.v_derivatives[site] +=
          cplx(0.0, 1.0) * c.value * static_cast<double>(kj) / (d * d);
    f.terms.emplace(n, fc);
  }
  return f;
}

// (L_V F)(n) = i d(n) F(n), including the product-rule derivative term
// i k_j F(n); with F from solve_homological this reconstructs the solve's
// input termwise, derivatives included.
inline FormalHamiltonian apply_diagonal_derivation(const FormalHamiltonian& f,
                                                   const Potential& pot) {
  FormalHamiltonian out;
  for (const auto& [n, c] : f.terms) {
    const IntegerVector k = n.divisor_vector();
    const double d = small_divisor(pot, k);
    Coefficient rc = c.scaled(cplx(0.0, d));
    for (const auto& [site, kj] : k.entries)
      rc.v_derivatives[site] +=
          cplx(0.0, static_cast<double>(kj)) * c.value;
    out.terms.emplace(n, rc);
  }
  return out;
}

struct LieDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LieResult {
  FormalHamiltonian transformed;
  std::int32_t orders_used = 0;
  double last_term_norm = 0.0;
  double tail_bound = 0.0;  // geometric extrapolation of what was discarded
};

// Truncated Lie series H o X_F^1 = sum_s H^(s)/s! with H^(s) = 2{H^(s-1),F}.
// The factor 2 comes from the bracket normalization: along the generator
// flow i dq/dt = -2 dF/dqbar one has dG/dt = 2{G,F}.
inline LieResult lie_transform(const FormalHamiltonian& h,
                               const FormalHamiltonian& f,
                               std::int32_t order_cap, double floor,
                               const TameWindow& w,
                               double prune_floor = default_prune_floor) {
  if (order_cap < 1) throw std::invalid_argument("lie_transform: order_cap < 1");
  if (floor < 0.0) throw std::invalid_argument("lie_transform: floor < 0");
  LieResult res;
  res.transformed = h;
  if (f.empty() || h.empty()) return res;

  FormalHamiltonian term = h;
  double prev_norm = -1.0, ratio = 0.0;
  std::int32_t growth_streak = 0;
  for (std::int32_t s = 1; s <= order_cap; ++s) {
    term = scaled(poisson_bracket(term, f), 2.0 / s);
    term.prune(prune_floor);
    const double norm = triple_norm_sup(term, w);
    res.transformed = add(res.transformed, term);
    res.orders_used = s;
    res.last_term_norm = norm;
    if (prev_norm >= 0.0) {
      growth_streak = norm > prev_norm ? growth_streak + 1 : 0;
      ratio = prev_norm > 0.0 ? norm / prev_norm : 0.0;
      if (growth_streak >= 3)
        throw LieDivergence(
            "lie series: term norm grew 3 consecutive orders (last " +
            std::to_string(norm) + " at order " + std::to_string(s) +
            "); generator too large for a convergent truncation");
    }
    if (term.empty() || norm <= floor) break;
    prev_norm = norm;
  }
  res.tail_bound = (ratio > 0.0 && ratio < 1.0)
                       ? res.last_term_norm * ratio / (1.0 - ratio)
                       : res.last_term_norm;
  res.transformed.prune(prune_floor);
  return res;
}

struct Margin {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool enforced = true;
  std::string detail;
  double abs_slack = 0.0;

  double margin() const { return rhs - lhs; }
  bool ok(double rel_slack) const {
    return lhs <= rhs * (1.0 + rel_slack) + abs_slack;
  }
};

struct BoundViolation : std::runtime_error {
  Margin violated;
  explicit BoundViolation(const Margin& m)
      : std::runtime_error("bound violated: " + m.name + " lhs = " +
                           std::to_string(m.lhs) + " > rhs = " +
                           std::to_string(m.rhs) +
                           (m.detail.empty() ? "" : " [" + m.detail + "]")),
        violated(m) {}
};

struct NormalFormOptions {
  // strict: abort on any enforced bound failing beyond slack.  permissive:
  // record the margins and keep going (desk-scale parameters violate the
  // generator bound long before the elimination itself degrades).
  bool strict = true;
  double slack = 1e-8;
  std::int32_t order_cap = -1;  // <= 0: ceil(10/kappa) + 4
  double floor_scale = 1e-3;    // lie floor = eps_{s+1} * floor_scale
  double prune_floor = default_prune_floor;
  bool check_entry = true;
};

struct StepReport {
  std::int32_t s = 0;
  double eps_s = 0.0, eps_next = 0.0;
  double delta_s = 0.0, delta_next = 0.0;
  double n_s = 0.0, n_next = 0.0;
  double gamma = 0.0;
  std::size_t r_terms_in = 0, selected = 0, rest_terms = 0;
  std::size_t d_terms_out = 0, z_terms_out = 0, r_terms_out = 0;
  std::size_t constants_dropped = 0;
  std::int32_t lie_orders_max = 0;
  double lie_tail_bound = 0.0;
  double max_surviving_targeted = 0.0;
  double freq_shift_sup = 0.0;
  double offwindow_shift_sup = 0.0;
  std::vector<Margin> margins;
  double wall_seconds = 0.0;

  const Margin* find_margin(const std::string& name) const {
    for (const auto& m : margins)
      if (m.name == name) return &m;
    return nullptr;
  }
};

struct NormalFormState {
  std::int32_t s = 1;
  FormalHamiltonian diagonal;   // D_s
  FormalHamiltonian resonant;   // Z_s (n = n', |n| >= 4)
  FormalHamiltonian remainder;  // R_s (n != n')
  Potential potential_s;        // shifted frequencies v_{sj}
  std::vector<FormalHamiltonian> transforms;  // generators F_1..F_{s-1}
};

namespace detail {

// Worst per-monomial margin of triple(n) <= j0^{d (2-|n|) tau} eps^{d max(Delta,1)}.
inline Margin per_monomial_margin(const FormalHamiltonian& h,
                                  const TameWindow& w, double delta_exp,
                                  double eps_base, std::string name,
                                  bool enforced) {
  Margin m;
  m.name = std::move(name);
  m.enforced = enforced;
  m.lhs = 0.0;
  m.rhs = 1.0;
  double worst_ratio = -1.0;
  for (const auto& [n, c] : h.terms) {
    const double lhs = triple_norm(h, w, n);
    const double dreg = std::max<std::int32_t>(n.diameter(), 1);
    const double rhs =
        std::pow(static_cast<double>(w.j0),
                 delta_exp * (2.0 - n.degree()) * w.tau) *
        std::pow(eps_base, delta_exp * dreg);
    const double ratio = rhs > 0.0 ? lhs / rhs : std::numeric_limits<double>::infinity();
    if (ratio > worst_ratio) {
      worst_ratio = ratio;
      m.lhs = lhs;
      m.rhs = rhs;
      m.detail = n.to_string();
    }
  }
  if (worst_ratio < 0.0) m.detail = "no terms";
  return m;
}

}  // namespace detail

struct StepResult {
  NormalFormState next;
  StepReport report;
};

// One elimination pass: select the removable part of R_s, solve the
// homological equation at the shifted frequencies, push D + Z + R through
// the generator's time-1 flow part by part, re-sort the result into D/Z/R,
// refresh the frequencies from the new diagonal, and record every bound the
// pass must respect as a (lhs, rhs) margin.
inline StepResult normal_form_step(const NormalFormState& st,
                                   const NormalFormSchedule& sch,
                                   const TameWindow& w,
                                   const NormalFormOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::int32_t s = st.s;
  if (s < 1 || s > sch.M)
    throw std::invalid_argument("normal_form_step: step " + std::to_string(s) +
                                " outside schedule 1.." + std::to_string(sch.M));

  StepReport rep;
  rep.s = s;
  rep.eps_s = sch.eps_at(s);
  rep.eps_next = sch.eps_at(s + 1);
  rep.delta_s = sch.delta_at(s);
  rep.delta_next = sch.delta_at(s + 1);
  rep.n_s = sch.n_at(s);
  rep.n_next = sch.n_at(s + 1);
  rep.gamma = sch.gamma_at(s);
  rep.r_terms_in = st.remainder.size();

  if (opts.check_entry) {
    rep.margins.push_back(detail::per_monomial_margin(
        st.resonant, w, rep.delta_s, sch.eps, "entry_Z", true));
    rep.margins.push_back(detail::per_monomial_margin(
        st.remainder, w, rep.delta_s, sch.eps, "entry_R", true));
    const FormalHamiltonian script_r =
        annulus_part(st.remainder, sch.j0, std::ceil(rep.n_s));
    rep.margins.push_back(Margin{"entry_scriptR", triple_norm_sup(script_r, w),
                                 rep.eps_s, true, "", 0.0});
  }

  auto [targeted, rest] = select_removable(st.remainder, sch, s, w);
  rep.selected = targeted.size();
  rep.rest_terms = rest.size();

  NormalFormState next;
  next.s = s + 1;
  next.transforms = st.transforms;
  next.potential_s = st.potential_s;

  FormalHamiltonian total;
  if (targeted.empty()) {
    // Nothing removable: the transform is the identity and H is unchanged.
    next.diagonal = st.diagonal;
    next.resonant = st.resonant;
    next.remainder = st.remainder;
    next.transforms.push_back(FormalHamiltonian{});
    rep.margins.push_back(Margin{"generator_norm", 0.0,
                                 std::pow(rep.eps_s, 0.9), true, "F = 0", 0.0});
  } else {
    FormalHamiltonian f = solve_homological(targeted, st.potential_s, rep.gamma);
    rep.margins.push_back(Margin{"generator_norm", triple_norm_sup(f, w),
                                 std::pow(rep.eps_s, 0.9), true, "", 0.0});

    const std::int32_t cap =
        opts.order_cap > 0
            ? opts.order_cap
            : static_cast<std::int32_t>(std::ceil(10.0 / sch.kappa)) + 4;
    const double floor = rep.eps_next * opts.floor_scale;

    // Taylor-expansion split: D, Z, removable, window-but-kept, off-window.
    FormalHamiltonian rest_window, rest_off;
    const double width_s = std::ceil(rep.n_s);
    for (const auto& [n, c] : rest.terms)
      (n.touches_annulus(sch.j0, width_s) ? rest_window : rest_off)
          .terms.emplace(n, c);

    const FormalHamiltonian* parts[] = {&st.diagonal, &st.resonant, &targeted,
                                        &rest_window, &rest_off};
    for (const FormalHamiltonian* part : parts) {
      LieResult lr =
          lie_transform(*part, f, cap, floor, w, opts.prune_floor);
      rep.lie_orders_max = std::max(rep.lie_orders_max, lr.orders_used);
      rep.lie_tail_bound += lr.tail_bound;
      total = add(total, lr.transformed);
    }
    total.prune(opts.prune_floor);

    // Re-sort into the three classes; quadratic resonant terms are actions
    // and belong to the diagonal.
    for (const auto& [n, c] : total.terms) {
      if (n.degree() == 0) {
        ++rep.constants_dropped;
        continue;
      }
      if (n.resonant())
        (n.degree() == 2 ? next.diagonal : next.resonant).add_term(n, c);
      else
        next.remainder.add_term(n, c);
    }

    // Refresh frequencies from the new diagonal: D = 1/2 sum v_{(s+1)j}|q_j|^2.
    Potential vp = st.potential_s;
    const double log_j0 = std::log(static_cast<double>(sch.j0));
    double imag_sup = 0.0;
    for (std::int32_t j = -vp.radius; j <= vp.radius; ++j) {
      const Coefficient* c = next.diagonal.find(action_monomial(j));
      const double vnew = c ? 2.0 * c->value.real() : 0.0;
      if (c) imag_sup = std::max(imag_sup, std::abs(c->value.imag()));
      const double dv = std::abs(vnew - st.potential_s.value(j));
      rep.freq_shift_sup = std::max(rep.freq_shift_sup, dv);
      if (std::abs(std::abs(static_cast<double>(j)) - sch.j0) > log_j0)
        rep.offwindow_shift_sup = std::max(rep.offwindow_shift_sup, dv);
      vp.values[static_cast<std::size_t>(j + vp.radius)] = vnew;
    }
    next.potential_s = vp;
    next.transforms.push_back(std::move(f));

    rep.margins.push_back(
        Margin{"diagonal_imag", imag_sup, 0.0, true, "", 1e-10});
    rep.margins.push_back(Margin{"offwindow_shift", rep.offwindow_shift_sup,
                                 0.0, true, "", 1e-12});
    rep.margins.push_back(Margin{"freq_shift_total", rep.freq_shift_sup, 0.0,
                                 false, "recorded only", 0.0});

    double surviving = 0.0;
    for (const auto& [n, c] : targeted.terms)
      surviving = std::max(surviving, triple_norm(next.remainder, w, n));
    rep.max_surviving_targeted = surviving;
    rep.margins.push_back(
        Margin{"surviving_targeted", surviving, rep.eps_next, true, "", 0.0});
  }

  rep.d_terms_out = next.diagonal.size();
  rep.z_terms_out = next.resonant.size();
  rep.r_terms_out = next.remainder.size();

  rep.margins.push_back(detail::per_monomial_margin(
      next.resonant, w, rep.delta_next, sch.eps, "exit_Z", true));
  rep.margins.push_back(detail::per_monomial_margin(
      next.remainder, w, rep.delta_next, sch.eps, "exit_R", true));
  const FormalHamiltonian script_r_next =
      annulus_part(next.remainder, sch.j0, std::ceil(rep.n_next));
  rep.margins.push_back(Margin{"exit_scriptR",
                               triple_norm_sup(script_r_next, w),
                               rep.eps_next, true, "", 0.0});

  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  if (opts.strict)
    for (const auto& m : rep.margins)
      if (m.enforced && !m.ok(opts.slack)) throw BoundViolation(m);

  return {std::move(next), std::move(rep)};
}

struct RunReport {
  NormalFormSchedule schedule;
  std::vector<StepReport> steps;
  double final_residual_norm = 0.0;  // |||R~||| over annulus width ln(j0)/2
  double final_target = 0.0;         // j0^{-3/kappa}
  std::vector<Margin> final_margins;
  bool reached = false;
};

inline std::pair<NormalFormState, RunReport> run_normal_form_with_schedule(
    const Potential& pot, const NormalFormSchedule& sch, std::int32_t window,
    const NormalFormOptions& opts = {}) {
  TameWindow w(sch.tau, sch.j0);
  const Potential dense = materialize_potential(pot, window);
  InitialSplit init = initial_hamiltonian(dense, sch.eps, w);

  NormalFormState st;
  st.s = 1;
  st.diagonal = std::move(init.diagonal);
  st.resonant = std::move(init.resonant);
  st.remainder = std::move(init.remainder);
  st.potential_s = dense;

  RunReport rep;
  rep.schedule = sch;
  rep.final_target = sch.target();
  for (std::int32_t s = 1; s <= sch.M; ++s) {
    StepResult r = normal_form_step(st, sch, w, opts);
    st = std::move(r.next);
    rep.steps.push_back(std::move(r.report));
  }

  const double final_width = 0.5 * std::log(static_cast<double>(sch.j0));
  const FormalHamiltonian resid = annulus_part(st.remainder, sch.j0, final_width);
  rep.final_residual_norm = triple_norm_sup(resid, w);
  rep.final_margins.push_back(Margin{"final_residual", rep.final_residual_norm,
                                     rep.final_target, true, "", 0.0});
  rep.final_margins.push_back(detail::per_monomial_margin(
      st.resonant, w, 0.5, sch.eps, "final_Z", true));
  rep.final_margins.push_back(detail::per_monomial_margin(
      st.remainder, w, 0.5, sch.eps, "final_R", true));
  rep.reached = true;
  for (const auto& m : rep.final_margins) {
    if (!m.ok(opts.slack)) rep.reached = false;
    if (opts.strict && m.enforced && !m.ok(opts.slack))
      throw BoundViolation(m);
  }
  return {std::move(st), std::move(rep)};
}

inline std::pair<NormalFormState, RunReport> run_normal_form(
    const Potential& pot, double eps, double tau, std::int32_t j0,
    double kappa, std::int32_t window, const NormalFormOptions& opts = {}) {
  return run_normal_form_with_schedule(pot, build_schedule(eps, tau, j0, kappa),
                                       window, opts);
}

}  // namespace nlam
