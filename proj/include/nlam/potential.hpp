#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nlam/rng.hpp"

namespace nlam {

// Site potential v_j in [0,1), dense on [-W, W].  Seeded potentials extend
// beyond the stored window through the counter RNG, so v_j never depends on
// which window was materialized.  Explicit-value potentials (tests) do not
// extend.
struct Potential {
  std::uint64_t seed = 0;
  bool seeded = false;
  std::int32_t radius = 0;
  std::vector<double> values;  // site j at index j + radius
  static constexpr const char* generator_id = rng::generator_id;

  double value(std::int64_t site) const {
    if (site >= -radius && site <= radius)
      return values[static_cast<std::size_t>(site + radius)];
    if (seeded) return rng::uniform(seed, site);
    throw std::out_of_range("potential: site outside explicit window");
  }

  std::vector<double> window(std::int64_t lo, std::int64_t hi) const {
    if (hi < lo) throw std::invalid_argument("potential window: hi < lo");
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(hi - lo + 1));
    for (std::int64_t j = lo; j <= hi; ++j) v.push_back(value(j));
    return v;
  }

  void dump_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "site,value\n";
    out.precision(17);
    for (std::int32_t j = -radius; j <= radius; ++j)
      out << j << ',' << value(j) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
  }
};

inline Potential sample_potential(std::uint64_t seed,
                                  std::int32_t window_radius) {
  if (window_radius < 1)
    throw std::invalid_argument("sample_potential: window_radius < 1");
  Potential p;
  p.seed = seed;
  p.seeded = true;
  p.radius = window_radius;
  p.values.reserve(static_cast<std::size_t>(2 * window_radius + 1));
  for (std::int32_t j = -window_radius; j <= window_radius; ++j)
    p.values.push_back(rng::uniform(seed, j));
  return p;
}

// Explicit values centered on site 0 (radius inferred; size must be odd).
inline Potential potential_from_values(std::vector<double> values) {
  if (values.empty() || values.size() % 2 == 0)
    throw std::invalid_argument("potential_from_values: need odd site count");
  Potential p;
  p.radius = static_cast<std::int32_t>((values.size() - 1) / 2);
  p.values = std::move(values);
  return p;
}

// Sparse integer vector k (a divisor class n - n'): sorted (site, k_j != 0).
struct IntegerVector {
  std::vector<std::pair<std::int32_t, std::int32_t>> entries;

  IntegerVector() = default;
  explicit IntegerVector(std::vector<std::pair<std::int32_t, std::int32_t>> e)
      : entries(std::move(e)) {
    normalize();
  }

  void normalize() {
    std::sort(entries.begin(), entries.end());
    std::erase_if(entries, [](const auto& p) { return p.second == 0; });
    for (std::size_t i = 1; i < entries.size(); ++i)
      if (entries[i].first == entries[i - 1].first)
        throw std::invalid_argument("integer vector: duplicate site");
  }

  bool zero() const { return entries.empty(); }

  // |k| = sum |k_j|
  std::int64_t l1() const {
    std::int64_t s = 0;
    for (const auto& [j, k] : entries)
      s += std::abs(static_cast<std::int64_t>(k));
    return s;
  }

  // Delta(k) = diameter of the support (0 for a single site).
  std::int64_t diameter() const {
    if (entries.empty())
      throw std::invalid_argument("diameter of zero vector");
    return static_cast<std::int64_t>(entries.back().first) -
           static_cast<std::int64_t>(entries.front().first);
  }

  // j_+(k): largest site carrying a nonzero entry.
  std::int32_t max_site() const {
    if (entries.empty())
      throw std::invalid_argument("max_site of zero vector");
    return entries.back().first;
  }

  friend bool operator==(const IntegerVector&, const IntegerVector&) = default;
};

// sum_j k_j v_j over the support of k.
inline double small_divisor(const Potential& pot, const IntegerVector& k) {
  if (k.zero()) throw std::invalid_argument("small_divisor: k = 0");
  double d = 0.0;
  for (const auto& [j, kj] : k.entries) d += kj * pot.value(j);
  return d;
}

struct NonresonanceReport {
  bool ok = false;
  double divisor = 0.0;    // sum_j k_j v_j
  double threshold = 0.0;  // gamma / (max(Delta,1)^2 |k|^{Delta+2})
};

// Non-resonance threshold for class k at margin gamma.  The diameter in the
// Delta^2 factor is regularized to max(Delta, 1) so single-site classes get
// a finite positive threshold.
inline double nonresonance_threshold(const IntegerVector& k, double gamma) {
  if (k.zero()) throw std::invalid_argument("nonresonance_threshold: k = 0");
  if (gamma <= 0)
    throw std::invalid_argument("nonresonance_threshold: gamma <= 0");
  const double dreg =
      static_cast<double>(std::max<std::int64_t>(k.diameter(), 1));
  const double l1 = static_cast<double>(k.l1());
  return gamma /
         (dreg * dreg * std::pow(l1, static_cast<double>(k.diameter()) + 2.0));
}

inline NonresonanceReport check_nonresonance_value(double divisor,
                                                   const IntegerVector& k,
                                                   double gamma) {
  const double thr = nonresonance_threshold(k, gamma);
  return NonresonanceReport{std::abs(divisor) >= thr, divisor, thr};
}

inline NonresonanceReport check_nonresonance(const Potential& pot,
                                             const IntegerVector& k,
                                             double gamma) {
  return check_nonresonance_value(small_divisor(pot, k), k, gamma);
}

}  // namespace nlam
