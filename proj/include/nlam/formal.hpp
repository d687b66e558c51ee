#pragma once

#include <cassert>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nlam/lattice.hpp"
#include "nlam/monomial.hpp"
#include "nlam/potential.hpp"

namespace nlam {

inline constexpr double default_prune_floor = 1e-30;

// Coefficient of one monomial: its complex value plus the sparse forward
// derivatives with respect to each potential entry v_j.  Derivatives are
// exact (product-rule propagated), never finite differences.
struct Coefficient {
  cplx value{};
  std::map<std::int32_t, cplx> v_derivatives;

  void accumulate(const Coefficient& o) {
    value += o.value;
    for (const auto& [site, d] : o.v_derivatives) v_derivatives[site] += d;
  }

  Coefficient scaled(cplx c) const {
    Coefficient out;
    out.value = c * value;
    for (const auto& [site, d] : v_derivatives)
      out.v_derivatives.emplace(site, c * d);
    return out;
  }

  Coefficient conjugated() const {
    Coefficient out;
    out.value = std::conj(value);
    for (const auto& [site, d] : v_derivatives)
      out.v_derivatives.emplace(site, std::conj(d));
    return out;
  }

  double max_derivative() const {
    double m = 0.0;
    for (const auto& [site, d] : v_derivatives) m = std::max(m, std::abs(d));
    return m;
  }

  double magnitude() const { return std::max(std::abs(value), max_derivative()); }
};

struct PruneReport {
  std::size_t removed = 0;
  double max_magnitude = 0.0;  // largest coefficient magnitude ever pruned

  void merge(const PruneReport& o) {
    removed += o.removed;
    max_magnitude = std::max(max_magnitude, o.max_magnitude);
  }
};

// Weighting context for the tame norms: weight j0^((2-|n|) tau) per monomial
// and the annulus A(j0, N) = { j : ||j| - j0| <= N }.
struct TameWindow {
  double tau = 0.005;
  std::int32_t j0 = 10000;

  TameWindow(double tau_, std::int32_t j0_) : tau(tau_), j0(j0_) {
    if (!(tau > 0.0 && tau < 0.01))
      throw std::invalid_argument("TameWindow: tau outside (0, 1/100)");
    if (j0 < 2) throw std::invalid_argument("TameWindow: j0 < 2");
    // Production-scale runs want j0 >= 1e4; unit tests relax this knowingly.
  }

  double weight(std::int32_t degree) const {
    return std::pow(static_cast<double>(j0), (2.0 - degree) * tau);
  }

  bool in_annulus(std::int32_t site, double width) const {
    return width >= 0 &&
           std::abs(std::abs(static_cast<double>(site)) - j0) <= width;
  }
};

// Sparse formal Hamiltonian: canonical ordered map monomial -> coefficient.
// Stored maps never hold all-below-floor coefficients after prune(); every
// prune is counted so tests can assert nothing above tolerance was dropped.
struct FormalHamiltonian {
  std::map<Monomial, Coefficient> terms;
  PruneReport prune_log;

  bool empty() const { return terms.empty(); }
  std::size_t size() const { return terms.size(); }

  const Coefficient* find(const Monomial& n) const {
    auto it = terms.find(n);
    return it == terms.end() ? nullptr : &it->second;
  }

  void add_term(const Monomial& n, const Coefficient& c) {
    terms[n].accumulate(c);
  }

  PruneReport prune(double floor) {
    PruneReport rep;
    for (auto it = terms.begin(); it != terms.end();) {
      const double mag = it->second.magnitude();
      if (mag < floor || mag == 0.0) {
        ++rep.removed;
        rep.max_magnitude = std::max(rep.max_magnitude, mag);
        it = terms.erase(it);
      } else {
        ++it;
      }
    }
    prune_log.merge(rep);
    return rep;
  }
};

inline FormalHamiltonian add(const FormalHamiltonian& h,
                             const FormalHamiltonian& g) {
  FormalHamiltonian out = h;
  out.prune_log = PruneReport{};
  for (const auto& [n, c] : g.terms) out.add_term(n, c);
  return out;
}

inline FormalHamiltonian scaled(const FormalHamiltonian& h, cplx c) {
  FormalHamiltonian out;
  for (const auto& [n, a] : h.terms) out.terms.emplace(n, a.scaled(c));
  return out;
}

// {H,G} = i sum_{n,m} H(n) G(m) sum_k (n_k m'_k - n'_k m_k)
//           q_k^{n_k+m_k-1} qbar_k^{n'_k+m'_k-1} prod_{j != k} ...
// Coefficient derivatives propagate by the product rule.
//
// Contributions are folded in an argument-order-independent canonical order
// (keyed on the unordered source pair), and the two orientations of one pair
// are summed first.  Every {H,G} contribution is then the exact floating
// point negation of its {G,H} twin, so antisymmetry holds bitwise.
inline FormalHamiltonian poisson_bracket(const FormalHamiltonian& h,
                                         const FormalHamiltonian& g) {
  struct Contribution {
    Monomial out;
    const Monomial* lo;
    const Monomial* hi;
    std::int32_t k;
    Coefficient val;
  };
  std::vector<Contribution> contribs;

  std::vector<ExponentEntry> merged;
  for (const auto& [n, a] : h.terms) {
    for (const auto& [m, b] : g.terms) {
      merged.clear();
      // Two-pointer union keeping each side's exponents per site.
      struct SiteExp {
        std::int32_t site, nu, nd, mu, md;
      };
      std::vector<SiteExp> sites;
      sites.reserve(n.entries.size() + m.entries.size());
      std::size_t i = 0, j = 0;
      while (i < n.entries.size() || j < m.entries.size()) {
        if (j >= m.entries.size() ||
            (i < n.entries.size() &&
             n.entries[i].site < m.entries[j].site)) {
          sites.push_back({n.entries[i].site, n.entries[i].up,
                           n.entries[i].down, 0, 0});
          ++i;
        } else if (i >= n.entries.size() ||
                   m.entries[j].site < n.entries[i].site) {
          sites.push_back({m.entries[j].site, 0, 0, m.entries[j].up,
                           m.entries[j].down});
          ++j;
        } else {
          sites.push_back({n.entries[i].site, n.entries[i].up,
                           n.entries[i].down, m.entries[j].up,
                           m.entries[j].down});
          ++i;
          ++j;
        }
      }
      const bool n_first = !(m < n);
      for (const auto& se : sites) {
        const std::int64_t c = static_cast<std::int64_t>(se.nu) * se.md -
                               static_cast<std::int64_t>(se.nd) * se.mu;
        if (c == 0) continue;
        Monomial out;
        out.entries.reserve(sites.size());
        for (const auto& t : sites) {
          std::int32_t up = t.nu + t.mu, down = t.nd + t.md;
          if (t.site == se.site) {
            --up;
            --down;
          }
          // c != 0 forces both summed exponents >= 1 at the bracket site.
          assert(up >= 0 && down >= 0);
          if (up != 0 || down != 0) out.entries.push_back({t.site, up, down});
        }
        Coefficient val;
        const cplx ic(0.0, static_cast<double>(c));
        val.value = ic * (a.value * b.value);
        for (const auto& [site, da] : a.v_derivatives)
          val.v_derivatives[site] += ic * (da * b.value);
        for (const auto& [site, db] : b.v_derivatives)
          val.v_derivatives[site] += ic * (a.value * db);
        contribs.push_back({std::move(out), n_first ? &n : &m,
                            n_first ? &m : &n, se.site, std::move(val)});
      }
    }
  }

  std::sort(contribs.begin(), contribs.end(),
            [](const Contribution& a, const Contribution& b) {
              if (a.out != b.out) return a.out < b.out;
              if (*a.lo != *b.lo) return *a.lo < *b.lo;
              if (*a.hi != *b.hi) return *a.hi < *b.hi;
              return a.k < b.k;
            });

  FormalHamiltonian out;
  std::size_t i = 0;
  while (i < contribs.size()) {
    std::size_t j = i + 1;
    Coefficient group = std::move(contribs[i].val);
    while (j < contribs.size() && contribs[j].out == contribs[i].out &&
           *contribs[j].lo == *contribs[i].lo &&
           *contribs[j].hi == *contribs[i].hi &&
           contribs[j].k == contribs[i].k) {
      group.accumulate(contribs[j].val);
      ++j;
    }
    out.add_term(contribs[i].out, group);
    i = j;
  }
  out.prune(default_prune_floor);
  return out;
}

// Weighted coefficient norms.  tame uses |H(n)|, lipschitz uses the sup of
// the v-derivative magnitudes, triple is their sum, and the sup over stored
// monomials gives the Hamiltonian-level norm.
inline double tame_norm(const FormalHamiltonian& h, const TameWindow& w,
                        const Monomial& n) {
  const Coefficient* c = h.find(n);
  if (!c) return 0.0;
  return w.weight(n.degree()) * std::abs(c->value);
}

inline double lipschitz_norm(const FormalHamiltonian& h, const TameWindow& w,
                             const Monomial& n) {
  const Coefficient* c = h.find(n);
  if (!c) return 0.0;
  return w.weight(n.degree()) * c->max_derivative();
}

inline double triple_norm(const FormalHamiltonian& h, const TameWindow& w,
                          const Monomial& n) {
  return tame_norm(h, w, n) + lipschitz_norm(h, w, n);
}

inline double triple_norm_sup(const FormalHamiltonian& h,
                              const TameWindow& w) {
  double sup = 0.0;
  for (const auto& [n, c] : h.terms) {
    const double t = w.weight(n.degree()) * (std::abs(c.value) + c.max_derivative());
    sup = std::max(sup, t);
  }
  return sup;
}

struct InitialSplit {
  FormalHamiltonian diagonal;   // D = 1/2 sum v_j |q_j|^2, d/dv_j = 1/2
  FormalHamiltonian resonant;   // Z = eps/4 sum |q_j|^4
  FormalHamiltonian remainder;  // R = eps/2 sum (q_j qbar_{j+1} + conj)
};

// Splits the lattice Hamiltonian (with the nonlinearity normalized to
// delta = eps; other delta reduce to this by rescaling q by sqrt(delta/eps))
// into diagonal / resonant / non-resonant parts over the window.
inline InitialSplit initial_hamiltonian(const Potential& pot, double eps,
                                        const TameWindow& w,
                                        std::int32_t radius = -1) {
  (void)w;
  const std::int32_t r = radius > 0 ? radius : pot.radius;
  InitialSplit s;
  for (std::int32_t j = -r; j <= r; ++j) {
    Coefficient d;
    d.value = 0.5 * pot.value(j);
    d.v_derivatives.emplace(j, 0.5);
    s.diagonal.terms.emplace(action_monomial(j), d);

    Coefficient z;
    z.value = 0.25 * eps;
    s.resonant.terms.emplace(action_monomial(j, 2), z);

    if (j < r) {
      Coefficient rr;
      rr.value = 0.5 * eps;
      s.remainder.terms.emplace(hopping_monomial(j, j + 1), rr);
      s.remainder.terms.emplace(hopping_monomial(j + 1, j), rr);
    }
  }
  return s;
}

namespace detail {
inline cplx pow_int(cplx base, std::int32_t e) {
  cplx out(1.0, 0.0);
  while (e-- > 0) out *= base;
  return out;
}
}  // namespace detail

inline cplx evaluate(const FormalHamiltonian& h, const LatticeState& q) {
  cplx total{};
  for (const auto& [n, c] : h.terms) {
    cplx prod = c.value;
    for (const auto& e : n.entries) {
      if (!q.contains(e.site))
        throw std::invalid_argument("evaluate: monomial outside state window");
      const cplx a = q.at(e.site);
      prod *= detail::pow_int(a, e.up) * detail::pow_int(std::conj(a), e.down);
    }
    total += prod;
  }
  return total;
}

// dH/dqbar_k for every k in the window, as a lattice vector.
inline LatticeState gradient_bar(const FormalHamiltonian& h,
                                 const LatticeState& q) {
  LatticeState out(q.radius);
  for (const auto& [n, c] : h.terms) {
    for (std::size_t e = 0; e < n.entries.size(); ++e) {
      if (n.entries[e].down == 0) continue;
      const std::int32_t k = n.entries[e].site;
      if (!q.contains(k))
        throw std::invalid_argument("gradient: monomial outside state window");
      cplx prod = c.value * static_cast<double>(n.entries[e].down);
      for (std::size_t i = 0; i < n.entries.size(); ++i) {
        const cplx a = q.at(n.entries[i].site);
        const std::int32_t down =
            n.entries[i].down - (i == e ? 1 : 0);
        prod *= detail::pow_int(a, n.entries[i].up) *
                detail::pow_int(std::conj(a), down);
      }
      out.at(k) += prod;
    }
  }
  return out;
}

// Hamiltonian flows of a formal series.  physical: i dq/dt = 2 dH/dqbar
// (the lattice equation of motion); generator: the opposite sign, which is
// the direction in which the time-1 flow of F realizes the Lie series
// G o Phi = sum (2{.,F})^s G / s!.
enum class FlowSign { physical, generator };

inline LatticeState formal_flow(const FormalHamiltonian& h, LatticeState q,
                                double t, std::int32_t steps, FlowSign sign) {
  if (steps <= 0) throw std::invalid_argument("formal_flow: steps <= 0");
  const cplx factor =
      (sign == FlowSign::physical) ? cplx(0.0, -2.0) : cplx(0.0, 2.0);
  const double dt = t / steps;
  const std::size_t n = q.amp.size();
  auto deriv = [&](const LatticeState& s) {
    LatticeState d = gradient_bar(h, s);
    for (auto& a : d.amp) a *= factor;
    return d;
  };
  LatticeState k1(q.radius), k2(q.radius), k3(q.radius), k4(q.radius),
      tmp(q.radius);
  for (std::int32_t step = 0; step < steps; ++step) {
    k1 = deriv(q);
    for (std::size_t i = 0; i < n; ++i)
      tmp.amp[i] = q.amp[i] + 0.5 * dt * k1.amp[i];
    k2 = deriv(tmp);
    for (std::size_t i = 0; i < n; ++i)
      tmp.amp[i] = q.amp[i] + 0.5 * dt * k2.amp[i];
    k3 = deriv(tmp);
    for (std::size_t i = 0; i < n; ++i)
      tmp.amp[i] = q.amp[i] + dt * k3.amp[i];
    k4 = deriv(tmp);
    for (std::size_t i = 0; i < n; ++i)
      q.amp[i] += dt / 6.0 *
                  (k1.amp[i] + 2.0 * k2.amp[i] + 2.0 * k3.amp[i] + k4.amp[i]);
  }
  return q;
}

// Reality: H stores the conjugate of every monomial with the conjugate
// coefficient.  Checked up to tol relative to the larger coefficient.
inline bool is_real_hamiltonian(const FormalHamiltonian& h, double tol) {
  for (const auto& [n, c] : h.terms) {
    const Coefficient* cc = h.find(n.conjugate());
    if (!cc) return false;
    const double scale = std::max({1.0, std::abs(c.value), std::abs(cc->value)});
    if (std::abs(std::conj(c.value) - cc->value) > tol * scale) return false;
  }
  return true;
}

// One line per monomial, canonically sorted: exponent list, value, then the
// derivative entries.  Stable across runs, so dumps diff cleanly.
inline void dump_hamiltonian(const FormalHamiltonian& h, std::ostream& os) {
  os.precision(17);
  for (const auto& [n, c] : h.terms) {
    os << n.to_string() << " | " << c.value.real() << ' ' << c.value.imag();
    for (const auto& [site, d] : c.v_derivatives)
      os << " | d" << site << ' ' << d.real() << ' ' << d.imag();
    os << '\n';
  }
}

inline void dump_hamiltonian_file(const FormalHamiltonian& h,
                                  const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  dump_hamiltonian(h, out);
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace nlam
