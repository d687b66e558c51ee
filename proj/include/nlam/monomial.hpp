#pragma once

#include <algorithm>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nlam/potential.hpp"

namespace nlam {

// One site's exponents in a monomial q_j^up conj(q_j)^down.
struct ExponentEntry {
  std::int32_t site = 0;
  std::int32_t up = 0;
  std::int32_t down = 0;

  friend bool operator==(const ExponentEntry& a, const ExponentEntry& b) {
    return a.site == b.site && a.up == b.up && a.down == b.down;
  }
  friend bool operator<(const ExponentEntry& a, const ExponentEntry& b) {
    if (a.site != b.site) return a.site < b.site;
    if (a.up != b.up) return a.up < b.up;
    return a.down < b.down;
  }
};

// Finitely supported exponent pair (n, n'); canonical form is sorted by site
// with all-zero rows removed, so equal monomials compare equal structurally.
// The empty monomial (a constant) is allowed; brackets never produce negative
// exponents.
struct Monomial {
  std::vector<ExponentEntry> entries;

  Monomial() = default;
  explicit Monomial(std::vector<ExponentEntry> raw) : entries(std::move(raw)) {
    canonicalize();
  }

  void canonicalize() {
    for (const auto& e : entries)
      if (e.up < 0 || e.down < 0)
        throw std::invalid_argument("monomial: negative exponent");
    std::sort(entries.begin(), entries.end(),
              [](const ExponentEntry& a, const ExponentEntry& b) {
                return a.site < b.site;
              });
    std::vector<ExponentEntry> merged;
    merged.reserve(entries.size());
    for (const auto& e : entries) {
      if (!merged.empty() && merged.back().site == e.site) {
        merged.back().up += e.up;
        merged.back().down += e.down;
      } else {
        merged.push_back(e);
      }
    }
    merged.erase(std::remove_if(merged.begin(), merged.end(),
                                [](const ExponentEntry& e) {
                                  return e.up == 0 && e.down == 0;
                                }),
                 merged.end());
    entries = std::move(merged);
  }

  std::int32_t degree() const {
    std::int32_t d = 0;
    for (const auto& e : entries) d += e.up + e.down;
    return d;
  }

  // Diameter of the support; 0 for single-site and empty monomials.
  std::int32_t diameter() const {
    if (entries.empty()) return 0;
    return entries.back().site - entries.front().site;
  }

  std::vector<std::int32_t> support() const {
    std::vector<std::int32_t> s;
    s.reserve(entries.size());
    for (const auto& e : entries) s.push_back(e.site);
    return s;
  }

  bool resonant() const {
    for (const auto& e : entries)
      if (e.up != e.down) return false;
    return true;
  }

  Monomial conjugate() const {
    Monomial m = *this;
    for (auto& e : m.entries) std::swap(e.up, e.down);
    return m;
  }

  // k = n - n' as an integer vector; empty for resonant monomials.
  IntegerVector divisor_vector() const {
    IntegerVector k;
    for (const auto& e : entries)
      if (e.up != e.down) k.entries.push_back({e.site, e.up - e.down});
    return k;
  }

  // Largest site with a nonzero divisor component.
  std::int32_t j_plus() const {
    for (auto it = entries.rbegin(); it != entries.rend(); ++it)
      if (it->up != it->down) return it->site;
    throw std::logic_error("j_plus: monomial is resonant");
  }

  // Touches the annulus { j : ||j| - j0| <= N }?  Negative N means empty.
  bool touches_annulus(std::int32_t j0, double n_width) const {
    if (n_width < 0) return false;
    for (const auto& e : entries)
      if (std::abs(std::abs(e.site) - j0) <= n_width) return true;
    return false;
  }

  std::string to_string() const {
    std::ostringstream out;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (i) out << ' ';
      out << entries[i].site << ':' << entries[i].up << ':'
          << entries[i].down;
    }
    if (entries.empty()) out << "1";
    return out.str();
  }

  friend bool operator==(const Monomial& a, const Monomial& b) {
    return a.entries == b.entries;
  }
  friend bool operator!=(const Monomial& a, const Monomial& b) {
    return !(a == b);
  }
  friend bool operator<(const Monomial& a, const Monomial& b) {
    return std::lexicographical_compare(a.entries.begin(), a.entries.end(),
                                        b.entries.begin(), b.entries.end());
  }
};

struct MonomialHash {
  std::size_t operator()(const Monomial& m) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t x) {
      h = (h ^ x) * 1099511628211ull;
    };
    for (const auto& e : m.entries) {
      mix(static_cast<std::uint64_t>(static_cast<std::uint32_t>(e.site)));
      mix(static_cast<std::uint64_t>(e.up));
      mix(static_cast<std::uint64_t>(e.down));
    }
    return static_cast<std::size_t>(h);
  }
};

// Convenience builders used heavily by tests.
inline Monomial action_monomial(std::int32_t site, std::int32_t power = 1) {
  return Monomial({{site, power, power}});
}

inline Monomial hopping_monomial(std::int32_t from, std::int32_t to) {
  return Monomial({{from, 1, 0}, {to, 0, 1}});
}

}  // namespace nlam
