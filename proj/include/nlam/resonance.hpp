#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nlam/monomial.hpp"
#include "nlam/normal_form.hpp"
#include "nlam/potential.hpp"
#include "nlam/rng.hpp"

namespace nlam {

// Resonance threshold of one monomial: gamma / (max(Delta,1)^2 |n|^{Delta+2}).
inline double monomial_threshold(const Monomial& n, double gamma) {
  if (n.resonant())
    throw std::invalid_argument("monomial_threshold: resonant monomial");
  if (gamma <= 0.0)
    throw std::invalid_argument("monomial_threshold: gamma <= 0");
  const double dreg = std::max<std::int32_t>(n.diameter(), 1);
  return gamma / (dreg * dreg *
                  std::pow(static_cast<double>(n.degree()),
                           static_cast<double>(n.diameter()) + 2.0));
}

// Cheapest monomial with divisor vector k.  |k| = 1 classes get one action
// factor appended so the representative is a legal (degree >= 2) monomial;
// a bare linear factor never appears in any Hamiltonian here.
inline Monomial minimal_representative(const IntegerVector& k) {
  if (k.zero())
    throw std::invalid_argument("minimal_representative: zero vector");
  std::vector<ExponentEntry> es;
  es.reserve(k.entries.size() + 1);
  for (const auto& [site, c] : k.entries)
    es.push_back({site, c > 0 ? c : 0, c < 0 ? -c : 0});
  if (k.l1() == 1) es.push_back({k.entries.front().first, 1, 1});
  return Monomial(std::move(es));
}

namespace detail {

// Depth-first enumeration of divisor vectors with top nonzero site k,
// diameter <= max_delta, representative degree <= max_degree.  Subtrees are
// cut once no completion can reach a threshold above `floor` (going deeper
// only grows the diameter and the degree, which both shrink the threshold).
struct ClassEnumerator {
  std::int32_t k = 0;
  std::int32_t max_delta = 0;
  double max_degree = 0.0;
  double gamma = 1.0;
  double floor = 0.0;
  std::vector<std::pair<std::int32_t, std::int32_t>> current;
  std::vector<Monomial> out;

  void run(std::int64_t budget) {
    if (budget < 1) return;
    for (std::int64_t c = -budget; c <= budget; ++c) {
      if (c == 0) continue;
      current.assign(1, {k, static_cast<std::int32_t>(c)});
      emit(std::abs(c), 0);
      extend(k - 1, budget - std::abs(c), std::abs(c));
    }
  }

  void emit(std::int64_t l1, std::int32_t delta) {
    const double min_degree = l1 == 1 ? 3.0 : static_cast<double>(l1);
    if (min_degree > max_degree) return;
    IntegerVector kv(current);
    Monomial rep = minimal_representative(kv);
    (void)delta;
    if (monomial_threshold(rep, gamma) < floor) return;
    out.push_back(std::move(rep));
  }

  void extend(std::int32_t site, std::int64_t rem, std::int64_t l1) {
    if (rem < 1 || site < k - max_delta) return;
    const double d = std::max(k - site, 1);
    const double best =
        gamma / (d * d * std::pow(std::max<double>(static_cast<double>(l1 + 1), 2.0),
                                  static_cast<double>(k - site) + 2.0));
    if (best < floor) return;
    extend(site - 1, rem, l1);  // skip this site
    for (std::int64_t c = -rem; c <= rem; ++c) {
      if (c == 0) continue;
      current.push_back({site, static_cast<std::int32_t>(c)});
      emit(l1 + std::abs(c), k - site);
      extend(site - 1, rem - std::abs(c), l1 + std::abs(c));
      current.pop_back();
    }
  }
};

}  // namespace detail

// All divisor classes with j_+ = k under raw cutoffs, as minimal
// representatives.  floor > 0 drops classes whose resonance threshold (at
// this gamma) is below it; each dropped class could contribute at most
// 2*floor to any union probability.
inline std::vector<Monomial> enumerate_divisor_classes(
    std::int32_t k, double max_delta, double max_degree, double gamma = 1.0,
    double floor = 0.0) {
  detail::ClassEnumerator en;
  en.k = k;
  en.max_delta = max_delta >= 0 ? static_cast<std::int32_t>(std::floor(max_delta)) : -1;
  en.max_degree = max_degree;
  en.gamma = gamma;
  en.floor = floor;
  if (en.max_delta >= 0)
    en.run(static_cast<std::int64_t>(std::floor(std::max(0.0, max_degree))));
  return std::move(en.out);
}

// Census cutoffs at step s: Delta(n) <= 10 ln eps_s / ln eps, |n| <= 10/kappa.
inline std::vector<Monomial> enumerate_constrained(
    std::int32_t k, std::int32_t s, const NormalFormSchedule& sch,
    double kappa, double floor = 0.0) {
  const double log_j0 = std::log(static_cast<double>(sch.j0));
  if (std::abs(std::abs(static_cast<double>(k)) - sch.j0) >= log_j0)
    throw std::invalid_argument("enumerate_constrained: ||k| - j0| >= ln j0");
  const double max_delta = 10.0 * std::log(sch.eps_at(s)) / std::log(sch.eps);
  const double max_degree = 10.0 / kappa;
  return enumerate_divisor_classes(k, max_delta, max_degree, sch.gamma_at(s),
                                   floor);
}

inline std::pair<double, double> binomial_estimate(std::size_t hits,
                                                   std::size_t samples) {
  const double p = static_cast<double>(hits) / static_cast<double>(samples);
  return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(samples))};
}

// Monte-Carlo probability that an i.i.d. uniform potential resonates with
// this monomial: |sum (n_j - n'_j) v_j| < threshold.  Draws are keyed by
// (seed, sample, site) so different monomials and different gamma values
// see the same potentials (shared random numbers).
inline std::pair<double, double> resonant_probability_mc(const Monomial& n,
                                                         double gamma,
                                                         std::size_t samples,
                                                         std::uint64_t seed) {
  if (n.resonant())
    throw std::invalid_argument("resonant_probability_mc: resonant monomial");
  if (samples < 1000)
    throw std::invalid_argument("resonant_probability_mc: samples < 1000");
  const IntegerVector k = n.divisor_vector();
  const double thr = monomial_threshold(n, gamma);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    double d = 0.0;
    for (const auto& [site, c] : k.entries)
      d += c * rng::uniform(seed, static_cast<std::int64_t>(i), site);
    if (std::abs(d) < thr) ++hits;
  }
  return binomial_estimate(hits, samples);
}

struct MeasureEstimate {
  double estimate = 0.0;
  double std_err = 0.0;
  double bound = 0.0;
  std::size_t classes = 0;
  std::size_t samples = 0;
};

struct CompiledClass {
  std::vector<std::pair<std::int32_t, std::int32_t>> terms;  // (site, coeff)
  double threshold = 0.0;
};

inline CompiledClass compile_class(const Monomial& rep, double gamma) {
  CompiledClass c;
  c.threshold = monomial_threshold(rep, gamma);
  for (const auto& [site, coeff] : rep.divisor_vector().entries)
    c.terms.push_back({site, coeff});
  return c;
}

// MC estimate of mes(union of resonant sets over the classes at (k, s)),
// against the analytic union bound eps^{1/200} (s = 1) or eps_s^{1/125}.
inline MeasureEstimate union_measure_bound(std::int32_t k, std::int32_t s,
                                           const NormalFormSchedule& sch,
                                           double kappa, std::size_t samples,
                                           std::uint64_t seed,
                                           double class_floor = 0.0) {
  const double gamma = sch.gamma_at(s);
  std::vector<CompiledClass> classes;
  for (const Monomial& rep : enumerate_constrained(k, s, sch, kappa, class_floor))
    classes.push_back(compile_class(rep, gamma));

  std::size_t hits = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    bool resonant = false;
    for (const auto& cls : classes) {
      double d = 0.0;
      for (const auto& [site, c] : cls.terms)
        d += c * rng::uniform(seed, static_cast<std::int64_t>(i), site);
      if (std::abs(d) < cls.threshold) {
        resonant = true;
        break;
      }
    }
    if (resonant) ++hits;
  }
  MeasureEstimate m;
  std::tie(m.estimate, m.std_err) = binomial_estimate(hits, samples);
  m.bound = s == 1 ? std::pow(sch.eps, 1.0 / 200.0)
                   : std::pow(sch.eps_at(s), 1.0 / 125.0);
  m.classes = classes.size();
  m.samples = samples;
  return m;
}

// Schedule for measure scans: the real one when it converges, else the
// decreasing prefix (divergent configurations still define the s = 1 cutoff
// data the census needs).
inline NormalFormSchedule build_schedule_best_effort(double eps, double tau,
                                                     std::int32_t j0,
                                                     double kappa,
                                                     bool* converged = nullptr) {
  if (converged) *converged = true;
  try {
    return build_schedule(eps, tau, j0, kappa);
  } catch (const ScheduleError&) {
  }
  if (converged) *converged = false;
  NormalFormSchedule sch;
  sch.eps = eps;
  sch.tau = tau;
  sch.kappa = kappa;
  sch.j0 = j0;
  const double hop = std::pow(static_cast<double>(j0), -tau / 2.0);
  const double log_eps = std::log(eps);
  const double log_j0 = std::log(static_cast<double>(j0));
  double eps_s = eps, delta_s = 1.0;
  for (std::int32_t s = 1; s <= 10000; ++s) {
    sch.steps.push_back(
        {s, eps_s, delta_s, log_j0 - 20.0 * std::log(eps_s) / log_eps});
    const double eps_next = std::pow(eps_s, 1.5) + hop * eps_s;
    const double delta_next = delta_s * (1.0 - 1.0 / (5.0 * s * s));
    if (eps_next >= eps_s || s == 10000) {
      sch.M = s;
      sch.steps.push_back(
          {s + 1, eps_next, delta_next,
           log_j0 - 20.0 * std::log(eps_next) / log_eps});
      return sch;
    }
    eps_s = eps_next;
    delta_s = delta_next;
  }
  return sch;  // unreachable
}

struct NonresonantResult {
  double estimate = 0.0;
  double std_err = 0.0;
  double lower_bound = 0.0;  // j0^{-6 eps^{1/1000}}
  std::size_t classes = 0;
  std::size_t window_sites = 0;
  std::size_t samples = 0;
  std::int32_t schedule_M = 0;
  bool schedule_converged = true;
};

// MC estimate of the measure of potentials that clear every resonance
// condition for every window site and every step.  For one class the
// thresholds shrink with s (gamma_s decreases), so only its first
// qualifying step binds; classes are enumerated once at s = M and assigned
// the gamma of that first step.
inline NonresonantResult nonresonant_measure(std::int32_t j0, double eps,
                                             double tau, double kappa,
                                             std::size_t samples,
                                             std::uint64_t seed,
                                             double class_floor = 1e-9) {
  NonresonantResult res;
  bool conv = true;
  const NormalFormSchedule sch =
      build_schedule_best_effort(eps, tau, j0, kappa, &conv);
  res.schedule_converged = conv;
  res.schedule_M = sch.M;
  res.samples = samples;
  res.lower_bound = std::pow(static_cast<double>(j0),
                             -6.0 * std::pow(eps, 1.0 / 1000.0));

  const double log_eps = std::log(eps);
  std::vector<double> delta_cut(static_cast<std::size_t>(sch.M) + 1, 0.0);
  for (std::int32_t s = 1; s <= sch.M; ++s)
    delta_cut[static_cast<std::size_t>(s)] =
        10.0 * std::log(sch.eps_at(s)) / log_eps;

  const double log_j0 = std::log(static_cast<double>(j0));
  std::vector<std::int32_t> window;
  for (std::int32_t a = static_cast<std::int32_t>(std::ceil(j0 - log_j0));
       a < j0 + log_j0; ++a) {
    if (std::abs(std::abs(static_cast<double>(a)) - j0) >= log_j0) continue;
    window.push_back(a);
    window.push_back(-a);
  }
  res.window_sites = window.size();

  std::vector<CompiledClass> classes;
  for (std::int32_t k : window) {
    for (const Monomial& rep : enumerate_divisor_classes(
             k, delta_cut[static_cast<std::size_t>(sch.M)], 10.0 / kappa,
             sch.gamma_at(1), class_floor)) {
      std::int32_t s_min = sch.M;
      for (std::int32_t s = 1; s <= sch.M; ++s)
        if (rep.diameter() <= delta_cut[static_cast<std::size_t>(s)]) {
          s_min = s;
          break;
        }
      classes.push_back(compile_class(rep, sch.gamma_at(s_min)));
    }
  }
  res.classes = classes.size();

  std::size_t hits = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    bool ok = true;
    for (const auto& cls : classes) {
      double d = 0.0;
      for (const auto& [site, c] : cls.terms)
        d += c * rng::uniform(seed, static_cast<std::int64_t>(i), site);
      if (std::abs(d) < cls.threshold) {
        ok = false;
        break;
      }
    }
    if (ok) ++hits;
  }
  std::tie(res.estimate, res.std_err) = binomial_estimate(hits, samples);
  return res;
}

// Success probability of finding a good j0 among floor(jbar0/(5 ln jbar0))
// independent dyadic trials.
inline double dyadic_success(double jbar0, double p_single) {
  if (jbar0 < 10.0) throw std::invalid_argument("dyadic_success: jbar0 < 10");
  if (!(p_single >= 0.0 && p_single <= 1.0))
    throw std::invalid_argument("dyadic_success: p outside [0,1]");
  if (p_single >= 1.0) return 1.0;
  const double m = std::floor(jbar0 / (5.0 * std::log(jbar0)));
  return -std::expm1(m * std::log1p(-p_single));
}

struct DyadicCheck {
  double trials = 0.0;     // floor(jbar0 / (5 ln jbar0))
  double p_single = 0.0;   // jbar0^{-6 eps^{1/1000}}
  double log_fail = 0.0;   // ln[(1 - p)^trials]
  double log_rhs = 0.0;    // ln[e^{-sqrt(jbar0)}] = -sqrt(jbar0)
  bool holds = false;      // success probability > 1 - e^{-sqrt(jbar0)}
};

// Verifies 1 - (1-p)^trials > 1 - e^{-sqrt(jbar0)} in the log domain, with
// eps passed as log10(eps): the regime where the inequality holds needs
// eps far below the double underflow threshold, but eps^{1/1000} is fine.
inline DyadicCheck dyadic_check(double jbar0, double log10_eps) {
  if (jbar0 < 10.0) throw std::invalid_argument("dyadic_check: jbar0 < 10");
  DyadicCheck c;
  const double eps_root = std::pow(10.0, log10_eps / 1000.0);
  c.trials = std::floor(jbar0 / (5.0 * std::log(jbar0)));
  c.p_single = std::pow(jbar0, -6.0 * eps_root);
  c.log_fail = c.trials * std::log1p(-c.p_single);
  c.log_rhs = -std::sqrt(jbar0);
  c.holds = c.log_fail < c.log_rhs;
  return c;
}

struct ResonanceCensus {
  std::int32_t j0 = 0;
  double kappa = 0.0, eps = 0.0, tau = 0.0;
  struct PerK {
    std::size_t classes = 0;
    double estimate = 0.0, std_err = 0.0, bound = 0.0;
  };
  std::map<std::int32_t, PerK> per_k;
  double overall_estimate = 0.0, overall_std_err = 0.0;
  double lower_bound = 0.0;
  std::int32_t schedule_M = 0;
  bool schedule_converged = true;
};

inline ResonanceCensus run_census(std::int32_t j0, double eps, double tau,
                                  double kappa, std::size_t samples,
                                  std::uint64_t seed,
                                  double class_floor = 1e-9) {
  ResonanceCensus census;
  census.j0 = j0;
  census.kappa = kappa;
  census.eps = eps;
  census.tau = tau;
  bool conv = true;
  const NormalFormSchedule sch =
      build_schedule_best_effort(eps, tau, j0, kappa, &conv);
  const double log_j0 = std::log(static_cast<double>(j0));
  for (std::int32_t a = static_cast<std::int32_t>(std::ceil(j0 - log_j0));
       a < j0 + log_j0; ++a) {
    if (std::abs(std::abs(static_cast<double>(a)) - j0) >= log_j0) continue;
    for (std::int32_t k : {a, -a}) {
      const MeasureEstimate m =
          union_measure_bound(k, 1, sch, kappa, samples, seed, class_floor);
      census.per_k[k] = {m.classes, m.estimate, m.std_err, m.bound};
    }
  }
  const NonresonantResult nr =
      nonresonant_measure(j0, eps, tau, kappa, samples, seed, class_floor);
  census.overall_estimate = nr.estimate;
  census.overall_std_err = nr.std_err;
  census.lower_bound = nr.lower_bound;
  census.schedule_M = nr.schedule_M;
  census.schedule_converged = nr.schedule_converged;
  return census;
}

}  // namespace nlam
