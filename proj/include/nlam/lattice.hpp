#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nlam {

using cplx = std::complex<double>;

// Complex amplitudes on the symmetric window [-W, W] of the lattice.
// Out-of-window sites are implicitly zero; operations that would need them
// are required to fail loudly rather than truncate silently.
struct LatticeState {
  std::int32_t radius = 0;          // W
  std::vector<cplx> amp;            // size 2W+1, site j at index j+W

  LatticeState() = default;
  explicit LatticeState(std::int32_t w)
      : radius(w), amp(static_cast<std::size_t>(2 * w + 1)) {
    if (w < 0) throw std::invalid_argument("lattice radius < 0");
  }

  std::int32_t size() const { return 2 * radius + 1; }

  cplx& at(std::int32_t site) { return amp[index(site)]; }
  const cplx& at(std::int32_t site) const { return amp[index(site)]; }

  bool contains(std::int32_t site) const {
    return site >= -radius && site <= radius;
  }

  std::size_t index(std::int32_t site) const {
    if (!contains(site)) throw std::out_of_range("site outside window");
    return static_cast<std::size_t>(site + radius);
  }
};

inline double l2_norm_sq(const LatticeState& q) {
  double s = 0.0;
  for (const cplx& a : q.amp) s += std::norm(a);
  return s;
}

// D = sum_j j^2 |q_j|^2, the second moment tracked as "diffusion".
inline double diffusion_moment(const LatticeState& q) {
  double s = 0.0;
  for (std::int32_t j = -q.radius; j <= q.radius; ++j)
    s += static_cast<double>(j) * static_cast<double>(j) * std::norm(q.at(j));
  return s;
}

// ||q||_{H^s}^2 = sum_j |j|^{2s} |q_j|^2.  The weight at j = 0 is 0^{2s}:
// it contributes |q_0|^2 for s = 0 and nothing for s > 0.
inline double sobolev_norm_sq(const LatticeState& q, double s) {
  if (s < 0) throw std::invalid_argument("sobolev_norm_sq: s < 0");
  double acc = 0.0;
  for (std::int32_t j = -q.radius; j <= q.radius; ++j) {
    const double m = std::norm(q.at(j));
    if (m == 0.0) continue;
    if (j == 0) {
      if (s == 0.0) acc += m;
      continue;
    }
    acc += std::pow(std::abs(static_cast<double>(j)), 2.0 * s) * m;
  }
  return acc;
}

inline double sobolev_norm(const LatticeState& q, double s) {
  return std::sqrt(sobolev_norm_sq(q, s));
}

// Mass strictly beyond +-j0.  Requires the window to actually contain the
// barrier; a window smaller than j0 is a caller error.
inline double tail_mass(const LatticeState& q, std::int32_t j0) {
  if (j0 <= 0) throw std::invalid_argument("tail_mass: j0 must be positive");
  if (j0 > q.radius)
    throw std::invalid_argument("tail_mass: window smaller than barrier j0");
  double s = 0.0;
  for (std::int32_t j = -q.radius; j <= q.radius; ++j)
    if (j < -j0 || j > j0) s += std::norm(q.at(j));
  return s;
}

// Dense convolution (p * q)_j = sum_i p_{j-i} q_i on the exact support
// window; the result has radius Wp + Wq so nothing is clipped.
inline LatticeState convolution(const LatticeState& p, const LatticeState& q) {
  LatticeState out(p.radius + q.radius);
  for (std::int32_t a = -p.radius; a <= p.radius; ++a) {
    const cplx pa = p.at(a);
    if (pa == cplx{}) continue;
    for (std::int32_t b = -q.radius; b <= q.radius; ++b)
      out.at(a + b) += pa * q.at(b);
  }
  return out;
}

// Testing constant for the tame product estimates.
inline double tame_constant(double s) { return std::pow(2.0, s + 1.0); }

struct TameCheck {
  double lhs = 0.0;  // ||p*q||_{H^s}
  double rhs = 0.0;  // C(s) (||p||_{H^s} ||q||_{H^1} + ||p||_{H^1} ||q||_{H^s})
};

// Two-sided data for the tame inequality with C(s) = 2^{s+1}.  Valid as a
// bound when neither state carries mass at the origin (the H^1 weight
// vanishes there); tests use it in that regime.
inline TameCheck convolution_tame_check(const LatticeState& p,
                                        const LatticeState& q, double s) {
  if (s < 0) throw std::invalid_argument("convolution_tame_check: s < 0");
  TameCheck r;
  r.lhs = sobolev_norm(convolution(p, q), s);
  r.rhs = tame_constant(s) * (sobolev_norm(p, s) * sobolev_norm(q, 1.0) +
                              sobolev_norm(p, 1.0) * sobolev_norm(q, s));
  return r;
}

// State dump: one CSV line per site.
inline void dump_state_csv(const LatticeState& q, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "site,re,im\n";
  out.precision(17);
  for (std::int32_t j = -q.radius; j <= q.radius; ++j)
    out << j << ',' << q.at(j).real() << ',' << q.at(j).imag() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

// Binary checkpoint: magic, radius, raw amplitudes.  Bit-exact round trip.
inline void save_state(const LatticeState& q, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  const char magic[8] = {'n', 'l', 'a', 'm', 's', 't', '0', '1'};
  out.write(magic, 8);
  const std::int64_t w = q.radius;
  out.write(reinterpret_cast<const char*>(&w), sizeof w);
  out.write(reinterpret_cast<const char*>(q.amp.data()),
            static_cast<std::streamsize>(q.amp.size() * sizeof(cplx)));
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline LatticeState load_state(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "nlamst01", 8) != 0)
    throw std::runtime_error("bad state file: " + path);
  std::int64_t w = 0;
  in.read(reinterpret_cast<char*>(&w), sizeof w);
  if (!in || w < 0 || w > (1 << 24)) throw std::runtime_error("bad state file: " + path);
  LatticeState q(static_cast<std::int32_t>(w));
  in.read(reinterpret_cast<char*>(q.amp.data()),
          static_cast<std::streamsize>(q.amp.size() * sizeof(cplx)));
  if (!in) throw std::runtime_error("truncated state file: " + path);
  return q;
}

}  // namespace nlam
