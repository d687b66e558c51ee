#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "nlam/dynamics.hpp"
#include "nlam/lattice.hpp"
#include "nlam/potential.hpp"

namespace nlam {

struct ExperimentConfig {
  std::string mode = "simulate";  // simulate | normal-form | measure | fit | tame-check
  // model
  double eps = 0.05;
  double delta = 0.05;
  double dt = 0.1;
  std::int32_t window = 1024;
  Boundary boundary = Boundary::dirichlet;
  // disorder
  std::uint64_t seed_base = 1;
  std::int32_t seed_count = 20;
  std::vector<std::uint64_t> seeds;  // explicit list wins over base/count
  // observables
  std::int32_t j0 = 0;  // 0 -> window/2
  double t_final = 1e4;
  std::int32_t grid_per_decade = 32;
  double fit_t_min = -1.0;  // < 0 -> default window (last two decades, t >= 100)
  double fit_t_max = -1.0;
  // normal form
  double tau = 0.009;
  double kappa = 1.0;
  std::int32_t degree_cap = -1;
  // measure
  std::uint64_t samples = 10000;
  // orchestration
  std::int32_t workers = 1;
  std::string outdir = "out";

  bool operator==(const ExperimentConfig&) const = default;
};

inline void validate_config(const ExperimentConfig& c) {
  auto fail = [](const std::string& m) {
    throw std::invalid_argument("config: " + m);
  };
  static const std::vector<std::string> modes = {
      "simulate", "normal-form", "measure", "fit", "tame-check"};
  if (std::find(modes.begin(), modes.end(), c.mode) == modes.end())
    fail("unknown mode '" + c.mode + "'");
  if (!(c.eps >= 0.0)) fail("eps must be >= 0");
  if (!(c.delta >= 0.0)) fail("delta must be >= 0");
  if (!(c.dt > 0.0)) fail("dt must be > 0");
  if (c.window < 2) fail("window must be >= 2");
  if (!(c.t_final >= 0.0)) fail("t_final must be >= 0");
  if (c.grid_per_decade < 1) fail("grid_per_decade must be >= 1");
  if (!(c.tau > 0.0 && c.tau < 0.01)) fail("tau must lie in (0, 0.01)");
  if (!(c.kappa > 0.0)) fail("kappa must be > 0");
  if (c.j0 < 0 || c.j0 > c.window) fail("j0 must lie in [0, window]");
  if (c.seeds.empty() && c.seed_count < 1) fail("need at least one seed");
  if (c.samples < 1) fail("samples must be >= 1");
  if (c.workers < 1) fail("workers must be >= 1");
}

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

}  // namespace detail

inline void save_config(const ExperimentConfig& c, std::ostream& os) {
  os << "mode = " << c.mode << "\n";
  os << "eps = " << detail::fmt(c.eps) << "\n";
  os << "delta = " << detail::fmt(c.delta) << "\n";
  os << "dt = " << detail::fmt(c.dt) << "\n";
  os << "window = " << c.window << "\n";
  os << "boundary = " << to_string(c.boundary) << "\n";
  os << "seed_base = " << c.seed_base << "\n";
  os << "seed_count = " << c.seed_count << "\n";
  if (!c.seeds.empty()) {
    os << "seeds = ";
    for (std::size_t i = 0; i < c.seeds.size(); ++i)
      os << (i ? "," : "") << c.seeds[i];
    os << "\n";
  }
  os << "j0 = " << c.j0 << "\n";
  os << "t_final = " << detail::fmt(c.t_final) << "\n";
  os << "grid_per_decade = " << c.grid_per_decade << "\n";
  os << "fit_t_min = " << detail::fmt(c.fit_t_min) << "\n";
  os << "fit_t_max = " << detail::fmt(c.fit_t_max) << "\n";
  os << "tau = " << detail::fmt(c.tau) << "\n";
  os << "kappa = " << detail::fmt(c.kappa) << "\n";
  os << "degree_cap = " << c.degree_cap << "\n";
  os << "samples = " << c.samples << "\n";
  os << "workers = " << c.workers << "\n";
  os << "outdir = " << c.outdir << "\n";
}

inline void save_config_file(const ExperimentConfig& c, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  save_config(c, os);
}

inline void apply_config_key(ExperimentConfig& c, const std::string& key,
                             const std::string& value) {
  if (key == "mode") c.mode = value;
  else if (key == "eps") c.eps = std::stod(value);
  else if (key == "delta") c.delta = std::stod(value);
  else if (key == "dt") c.dt = std::stod(value);
  else if (key == "window") c.window = static_cast<std::int32_t>(std::stol(value));
  else if (key == "boundary") {
    if (value == "periodic") c.boundary = Boundary::periodic;
    else if (value == "dirichlet") c.boundary = Boundary::dirichlet;
    else throw std::invalid_argument("config: unknown boundary '" + value + "'");
  } else if (key == "seed_base") c.seed_base = std::stoull(value);
  else if (key == "seed_count") c.seed_count = static_cast<std::int32_t>(std::stol(value));
  else if (key == "seeds") {
    c.seeds.clear();
    std::stringstream ss(value);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!detail::trim(tok).empty()) c.seeds.push_back(std::stoull(detail::trim(tok)));
  } else if (key == "j0") c.j0 = static_cast<std::int32_t>(std::stol(value));
  else if (key == "t_final") c.t_final = std::stod(value);
  else if (key == "grid_per_decade") c.grid_per_decade = static_cast<std::int32_t>(std::stol(value));
  else if (key == "fit_t_min") c.fit_t_min = std::stod(value);
  else if (key == "fit_t_max") c.fit_t_max = std::stod(value);
  else if (key == "tau") c.tau = std::stod(value);
  else if (key == "kappa") c.kappa = std::stod(value);
  else if (key == "degree_cap") c.degree_cap = static_cast<std::int32_t>(std::stol(value));
  else if (key == "samples") c.samples = std::stoull(value);
  else if (key == "workers") c.workers = static_cast<std::int32_t>(std::stol(value));
  else if (key == "outdir") c.outdir = value;
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

inline ExperimentConfig load_config(std::istream& is) {
  ExperimentConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " has no '='");
    apply_config_key(c, detail::trim(t.substr(0, eq)),
                     detail::trim(t.substr(eq + 1)));
  }
  return c;
}

inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return load_config(is);
}

// Logarithmic sample grid: t = 0, then 32 (or per_decade) points per decade
// from t = 1 up to t_final, deduplicated on the integrator's step lattice.
inline std::vector<double> log_sample_grid(double t_final,
                                           std::int32_t per_decade, double dt) {
  if (t_final < 0.0 || dt <= 0.0 || per_decade < 1)
    throw std::invalid_argument("log_sample_grid: bad arguments");
  std::vector<double> g{0.0};
  if (t_final <= 0.0) return g;
  auto step_of = [dt](double t) { return std::llround(t / dt); };
  for (std::int64_t i = 0;; ++i) {
    const double t = std::pow(10.0, static_cast<double>(i) / per_decade);
    if (t > t_final) break;
    if (step_of(t) > step_of(g.back())) g.push_back(t);
  }
  if (step_of(t_final) > step_of(g.back())) g.push_back(t_final);
  return g;
}

struct FitResult {
  double kappa_fit = 0.0;
  double std_err = 0.0;
  double r2 = 0.0;
  double log_c = 0.0;  // intercept: fitted D = exp(log_c) * t^kappa_fit
  std::size_t n = 0;
  double t_min = 0.0, t_max = 0.0;
};

inline std::pair<double, double> default_fit_window(double t_final) {
  return {std::max(100.0, t_final / 100.0), t_final};
}

// OLS slope of log D against log t over [t_min, t_max].
inline FitResult fit_power_law(const std::vector<double>& times,
                               const std::vector<double>& values,
                               double t_min, double t_max) {
  if (times.size() != values.size())
    throw std::invalid_argument("fit_power_law: length mismatch");
  std::vector<double> xs, ys;
  double last_t = -1.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double t = times[i];
    if (t <= 0.0 || t < t_min || t > t_max) continue;
    if (t == last_t) continue;
    last_t = t;
    if (!(values[i] > 0.0))
      throw std::invalid_argument(
          "fit_power_law: non-positive diffusion value in fit window");
    xs.push_back(std::log(t));
    ys.push_back(std::log(values[i]));
  }
  const std::size_t n = xs.size();
  if (n < 10)
    throw std::invalid_argument("fit_power_law: fewer than 10 samples in window");
  double xbar = 0.0, ybar = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    xbar += xs[i];
    ybar += ys[i];
  }
  xbar /= static_cast<double>(n);
  ybar /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - xbar) * (xs[i] - xbar);
    sxy += (xs[i] - xbar) * (ys[i] - ybar);
    syy += (ys[i] - ybar) * (ys[i] - ybar);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_power_law: degenerate time grid");
  FitResult f;
  f.kappa_fit = sxy / sxx;
  f.log_c = ybar - f.kappa_fit * xbar;
  double ssr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = ys[i] - (f.log_c + f.kappa_fit * xs[i]);
    ssr += r * r;
  }
  f.std_err = n > 2 ? std::sqrt(ssr / static_cast<double>(n - 2) / sxx) : 0.0;
  f.r2 = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
  f.n = n;
  f.t_min = t_min;
  f.t_max = t_max;
  return f;
}

inline FitResult fit_power_law(const DiffusionTrace& tr, double t_min,
                               double t_max) {
  return fit_power_law(tr.sample_times, tr.diffusion_values, t_min, t_max);
}

struct TailRate {
  double max_rate = 0.0;  // max signed d/dt of the tail mass
  double bound = 0.0;     // j0^{-3/kappa}
  double at_time = 0.0;
};

// Central-difference growth rate of the mass beyond j0, against j0^{-3/kappa}.
inline TailRate tail_rate_check(const DiffusionTrace& tr, std::int32_t j0,
                                double kappa) {
  if (tr.tail_values.size() < 3 || tr.sample_times.size() != tr.tail_values.size())
    throw std::invalid_argument("tail_rate_check: grid too coarse");
  TailRate r;
  r.bound = std::pow(static_cast<double>(j0), -3.0 / kappa);
  r.max_rate = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i + 1 < tr.sample_times.size(); ++i) {
    const double dt2 = tr.sample_times[i + 1] - tr.sample_times[i - 1];
    if (dt2 <= 0.0) continue;
    const double rate = (tr.tail_values[i + 1] - tr.tail_values[i - 1]) / dt2;
    if (rate > r.max_rate) {
      r.max_rate = rate;
      r.at_time = tr.sample_times[i];
    }
  }
  if (!std::isfinite(r.max_rate))
    throw std::invalid_argument("tail_rate_check: grid too coarse");
  return r;
}

inline std::vector<std::uint64_t> config_seeds(const ExperimentConfig& c) {
  if (!c.seeds.empty()) return c.seeds;
  std::vector<std::uint64_t> s;
  s.reserve(static_cast<std::size_t>(c.seed_count));
  for (std::int32_t i = 0; i < c.seed_count; ++i)
    s.push_back(c.seed_base + static_cast<std::uint64_t>(i));
  return s;
}

inline std::string trace_path(const std::string& outdir, std::uint64_t seed) {
  return outdir + "/trace_" + std::to_string(seed) + ".csv";
}

inline DiffusionTrace run_single(const ExperimentConfig& cfg,
                                 std::uint64_t seed) {
  const Potential pot = sample_potential(seed, cfg.window);
  LatticeState q0(cfg.window);
  q0.at(0) = 1.0;  // delta_0 initial datum
  ModelParams p;
  p.eps = cfg.eps;
  p.delta = cfg.delta;
  p.dt = cfg.dt;
  p.boundary = cfg.boundary;
  const std::int32_t j0 = cfg.j0 > 0 ? cfg.j0 : cfg.window / 2;
  const auto grid = log_sample_grid(cfg.t_final, cfg.grid_per_decade, cfg.dt);
  DiffusionTrace tr = integrate(q0, pot, p, cfg.t_final, grid, j0);
  tr.seed = seed;
  return tr;
}

struct EnsembleResult {
  std::vector<DiffusionTrace> traces;  // completed runs, seed order
  std::vector<std::pair<std::uint64_t, std::string>> failures;
  std::vector<std::string> files;
  std::size_t reused = 0;  // traces loaded from existing files
};

// One trace per seed, written incrementally under seed-keyed names; a
// restart reuses any seed whose file already parses (crash safety).
inline EnsembleResult run_ensemble(const ExperimentConfig& cfg) {
  validate_config(cfg);
  std::filesystem::create_directories(cfg.outdir);
  const std::vector<std::uint64_t> seeds = config_seeds(cfg);
  std::vector<DiffusionTrace> slots(seeds.size());
  std::vector<char> done(seeds.size(), 0);
  std::vector<std::pair<std::uint64_t, std::string>> failures;
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> reused{0};
  std::mutex fail_mutex;

  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= seeds.size()) return;
      const std::uint64_t seed = seeds[i];
      const std::string path = trace_path(cfg.outdir, seed);
      if (std::filesystem::exists(path)) {
        try {
          DiffusionTrace tr = read_trace_csv(path);
          tr.seed = seed;
          slots[i] = std::move(tr);
          done[i] = 1;
          reused.fetch_add(1);
          continue;
        } catch (const std::exception&) {
          // unreadable partial file: recompute below
        }
      }
      try {
        DiffusionTrace tr = run_single(cfg, seed);
        const std::string tmp = path + ".tmp";
        write_trace_csv(tr, tmp);
        std::filesystem::rename(tmp, path);
        slots[i] = std::move(tr);
        done[i] = 1;
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(fail_mutex);
        failures.emplace_back(seed, e.what());
      }
    }
  };

  const std::size_t nthreads = static_cast<std::size_t>(
      std::min<std::int64_t>(cfg.workers, static_cast<std::int64_t>(seeds.size())));
  if (nthreads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < nthreads; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  EnsembleResult res;
  res.failures = std::move(failures);
  res.reused = reused.load();
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (!done[i]) continue;
    res.traces.push_back(std::move(slots[i]));
    res.files.push_back(trace_path(cfg.outdir, seeds[i]));
  }
  return res;
}

struct EnsembleStats {
  std::vector<double> t, q25, q50, q75, mean;
};

namespace detail {
inline double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - w) + v[hi] * w;
}
}  // namespace detail

// Median over seeds is the headline statistic: the measure estimates concern
// typical potentials, and means are outlier-dominated in disordered systems.
inline EnsembleStats aggregate_ensemble(const std::vector<DiffusionTrace>& traces) {
  if (traces.empty()) throw std::runtime_error("no traces");
  const auto& t = traces[0].sample_times;
  for (const auto& tr : traces)
    if (tr.sample_times != t)
      throw std::runtime_error("aggregate_ensemble: trace grids differ");
  EnsembleStats st;
  st.t = t;
  std::vector<double> column(traces.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    double sum = 0.0;
    for (std::size_t s = 0; s < traces.size(); ++s) {
      column[s] = traces[s].diffusion_values[i];
      sum += column[s];
    }
    std::sort(column.begin(), column.end());
    st.q25.push_back(detail::quantile_sorted(column, 0.25));
    st.q50.push_back(detail::quantile_sorted(column, 0.50));
    st.q75.push_back(detail::quantile_sorted(column, 0.75));
    st.mean.push_back(sum / static_cast<double>(traces.size()));
  }
  return st;
}

// Plot-ready aggregate: t, quartiles of D over seeds, mean, fitted line.
inline std::vector<std::string> emit_plots(
    const std::vector<DiffusionTrace>& traces, const std::string& outdir,
    const FitResult* fit = nullptr) {
  const EnsembleStats st = aggregate_ensemble(traces);  // throws "no traces"
  std::filesystem::create_directories(outdir);
  const std::string path = outdir + "/ensemble.csv";
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << std::setprecision(17);
  os << "t,q25,median,q75,mean,fit\n";
  for (std::size_t i = 0; i < st.t.size(); ++i) {
    os << st.t[i] << ',' << st.q25[i] << ',' << st.q50[i] << ',' << st.q75[i]
       << ',' << st.mean[i] << ',';
    if (fit && st.t[i] > 0.0)
      os << std::exp(fit->log_c + fit->kappa_fit * std::log(st.t[i]));
    else
      os << "nan";
    os << "\n";
  }
  return {path};
}

}  // namespace nlam
