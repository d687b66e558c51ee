#pragma once

#include <Eigen/Dense>

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "nlam/dynamics.hpp"

namespace nlam {

inline LatticeState exact_linear_solution(const LatticeState& q0,
                                          const Potential& pot, double eps,
                                          double t, Boundary boundary) {
  require_covering(q0, pot);
  if (q0.radius > 2048)
    throw std::invalid_argument(
        "exact_linear_solution: dense solve limited to window radius 2048");
  const std::int32_t w = q0.radius;
  const std::int32_t n = q0.size();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  for (std::int32_t j = -w; j <= w; ++j) h(j + w, j + w) = pot.value(j);
  for (std::int32_t i = 0; i + 1 < n; ++i) h(i, i + 1) = h(i + 1, i) = eps;
  if (boundary == Boundary::periodic && n > 2) {
    h(0, n - 1) += eps;
    h(n - 1, 0) += eps;
  } else if (boundary == Boundary::periodic && n == 2) {
    // Two sites on a ring are doubly connected.
    h(0, 1) += eps;
    h(1, 0) += eps;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("exact_linear_solution: eigensolver failed");
  Eigen::VectorXcd v(n);
  for (std::int32_t i = 0; i < n; ++i)
    v(i) = q0.amp[static_cast<std::size_t>(i)];
  Eigen::VectorXcd coeff = es.eigenvectors().transpose() * v;
  for (std::int32_t i = 0; i < n; ++i) {
    const double th = es.eigenvalues()(i) * t;
    coeff(i) *= cplx(std::cos(th), -std::sin(th));
  }
  Eigen::VectorXcd qt = es.eigenvectors() * coeff;
  LatticeState out(w);
  for (std::int32_t i = 0; i < n; ++i)
    out.amp[static_cast<std::size_t>(i)] = qt(i);
  return out;
}

inline DiffusionTrace read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty trace file: " + path);
  DiffusionTrace tr;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    double cols[5];
    char comma;
    for (int i = 0; i < 5; ++i) {
      if (!(row >> cols[i])) throw std::runtime_error("bad trace row: " + line);
      if (i < 4 && !(row >> comma))
        throw std::runtime_error("bad trace row: " + line);
    }
    tr.sample_times.push_back(cols[0]);
    tr.diffusion_values.push_back(cols[1]);
    tr.l2_values.push_back(cols[2]);
    tr.energy_values.push_back(cols[3]);
    tr.tail_values.push_back(cols[4]);
  }
  return tr;
}

}  // namespace nlam
