// nlam: lattice NLS with random potential.  Subcommands: simulate an
// ensemble and fit the spreading exponent, run the normal-form elimination
// with per-step bound margins, Monte-Carlo the resonance measure, refit
// existing traces, check the tame convolution inequality, and aggregate
// plot data.  Exit codes: 0 success, 2 config error, 3 numerical abort
// (resonance / boundary / bound violation), 4 I/O.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include "nlam/experiment.hpp"
#include "nlam/normal_form.hpp"
#include "nlam/resonance.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json margin_json(const nlam::Margin& m, double slack) {
  return json{{"name", m.name},       {"lhs", m.lhs},
              {"rhs", m.rhs},         {"enforced", m.enforced},
              {"ok", m.ok(slack)},    {"margin", m.margin()},
              {"detail", m.detail}};
}

json step_json(const nlam::StepReport& r, double slack) {
  json margins = json::array();
  for (const auto& m : r.margins) margins.push_back(margin_json(m, slack));
  return json{{"s", r.s},
              {"eps_s", r.eps_s},
              {"eps_next", r.eps_next},
              {"delta_s", r.delta_s},
              {"delta_next", r.delta_next},
              {"n_s", r.n_s},
              {"n_next", r.n_next},
              {"gamma", r.gamma},
              {"remainder_terms_in", r.r_terms_in},
              {"selected", r.selected},
              {"rest_terms", r.rest_terms},
              {"diagonal_terms_out", r.d_terms_out},
              {"resonant_terms_out", r.z_terms_out},
              {"remainder_terms_out", r.r_terms_out},
              {"constants_dropped", r.constants_dropped},
              {"lie_orders_max", r.lie_orders_max},
              {"lie_tail_bound", r.lie_tail_bound},
              {"max_surviving_targeted", r.max_surviving_targeted},
              {"freq_shift_sup", r.freq_shift_sup},
              {"offwindow_shift_sup", r.offwindow_shift_sup},
              {"wall_seconds", r.wall_seconds},
              {"margins", margins}};
}

void write_json(const json& j, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << j.dump(2) << "\n";
}

std::vector<nlam::DiffusionTrace> load_trace_dir(const std::string& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string n = e.path().filename().string();
    if (n.rfind("trace_", 0) == 0 && n.size() > 4 &&
        n.substr(n.size() - 4) == ".csv")
      names.push_back(e.path().string());
  }
  std::sort(names.begin(), names.end());
  std::vector<nlam::DiffusionTrace> traces;
  for (const auto& p : names) traces.push_back(nlam::read_trace_csv(p));
  if (traces.empty())
    throw std::runtime_error("no traces under " + dir);
  return traces;
}

int cmd_simulate(const nlam::ExperimentConfig& cfg) {
  nlam::EnsembleResult res = nlam::run_ensemble(cfg);
  std::cout << "completed " << res.traces.size() << "/"
            << nlam::config_seeds(cfg).size() << " seeds ("
            << res.reused << " reused)\n";
  for (const auto& [seed, what] : res.failures)
    std::cout << "  seed " << seed << " failed: " << what << "\n";
  if (res.traces.empty()) {
    std::cerr << "no usable traces\n";
    return res.failures.empty() ? 2 : 3;
  }

  json summary;
  summary["completed"] = res.traces.size();
  summary["reused"] = res.reused;
  json fails = json::array();
  for (const auto& [seed, what] : res.failures)
    fails.push_back(json{{"seed", seed}, {"error", what}});
  summary["failures"] = fails;

  const nlam::EnsembleStats st = nlam::aggregate_ensemble(res.traces);
  auto [tmin, tmax] = nlam::default_fit_window(cfg.t_final);
  if (cfg.fit_t_min >= 0) tmin = cfg.fit_t_min;
  if (cfg.fit_t_max >= 0) tmax = cfg.fit_t_max;
  nlam::FitResult fit;
  bool have_fit = false;
  try {
    fit = nlam::fit_power_law(st.t, st.q50, tmin, tmax);
    have_fit = true;
    std::cout << "kappa_fit = " << fit.kappa_fit << " +- " << fit.std_err
              << "  (r2 = " << fit.r2 << ", n = " << fit.n << ", t in ["
              << tmin << ", " << tmax << "])\n";
    summary["fit"] = json{{"kappa_fit", fit.kappa_fit},
                          {"std_err", fit.std_err},
                          {"r2", fit.r2},
                          {"n", fit.n},
                          {"t_min", tmin},
                          {"t_max", tmax}};
  } catch (const std::invalid_argument& e) {
    std::cout << "fit skipped: " << e.what() << "\n";
    summary["fit"] = nullptr;
  }
  const auto files =
      nlam::emit_plots(res.traces, cfg.outdir, have_fit ? &fit : nullptr);
  summary["files"] = files;
  write_json(summary, cfg.outdir + "/summary.json");
  std::cout << "wrote " << files[0] << " and " << cfg.outdir
            << "/summary.json\n";
  return 0;
}

struct NormalFormArgs {
  double epsilon = 1e-4;
  double tau = 0.009;
  std::int32_t j0 = 40;
  double kappa = 1.0;
  std::int32_t window = 64;
  std::int32_t degree_cap = -1;
  std::string dump_dir;
  std::uint64_t seed = 1;
  double annulus_width = -1.0;  // >= 0: fixed width instead of the N_s formula
  bool permissive = false;
};

int cmd_normal_form(const NormalFormArgs& a) {
  const nlam::Potential pot = nlam::sample_potential(a.seed, a.window);
  nlam::NormalFormSchedule sch =
      a.annulus_width >= 0.0
          ? nlam::desk_schedule(a.epsilon, a.tau, a.j0, a.kappa, a.annulus_width)
          : nlam::build_schedule(a.epsilon, a.tau, a.j0, a.kappa);
  nlam::NormalFormOptions opts;
  opts.strict = !a.permissive;
  opts.order_cap = a.degree_cap;

  std::cout << "schedule: M = " << sch.M << ", target = " << sch.target()
            << ", gamma_1 = " << sch.gamma_at(1) << "\n";
  auto [state, report] = nlam::run_normal_form_with_schedule(
      pot, sch, a.window, opts);

  for (const auto& r : report.steps) {
    double worst = std::numeric_limits<double>::infinity();
    std::string worst_name = "-";
    for (const auto& m : r.margins)
      if (m.enforced && m.margin() < worst) {
        worst = m.margin();
        worst_name = m.name;
      }
    std::cout << "s=" << r.s << " eps_s=" << r.eps_s << " selected="
              << r.selected << " surviving=" << r.max_surviving_targeted
              << " tightest=" << worst_name << " (" << worst << ")\n";
  }
  std::cout << "final residual " << report.final_residual_norm
            << (report.reached ? " <= " : " > ") << report.final_target
            << " target; reached = " << (report.reached ? "yes" : "no")
            << "\n";

  if (!a.dump_dir.empty()) {
    fs::create_directories(a.dump_dir);
    for (const auto& r : report.steps)
      write_json(step_json(r, opts.slack),
                 a.dump_dir + "/step_" + std::to_string(r.s) + ".json");
    json run;
    run["M"] = sch.M;
    run["target"] = report.final_target;
    run["final_residual_norm"] = report.final_residual_norm;
    run["reached"] = report.reached;
    json fm = json::array();
    for (const auto& m : report.final_margins)
      fm.push_back(margin_json(m, opts.slack));
    run["final_margins"] = fm;
    write_json(run, a.dump_dir + "/run.json");
    pot.dump_csv(a.dump_dir + "/potential.csv");
    nlam::dump_hamiltonian_file(state.diagonal, a.dump_dir + "/final_diagonal.txt");
    nlam::dump_hamiltonian_file(state.resonant, a.dump_dir + "/final_resonant.txt");
    nlam::dump_hamiltonian_file(state.remainder, a.dump_dir + "/final_remainder.txt");
    std::cout << "wrote per-step reports under " << a.dump_dir << "\n";
  }
  return 0;
}

struct MeasureArgs {
  std::int32_t j0 = 50;
  double epsilon = 1e-3;
  double tau = 0.005;
  double kappa = 2.0;
  std::uint64_t samples = 10000;
  std::uint64_t seed = 1;
  double floor = 1e-9;
  std::string outdir = "out";
};

int cmd_measure(const MeasureArgs& a) {
  const nlam::ResonanceCensus c = nlam::run_census(
      a.j0, a.epsilon, a.tau, a.kappa, a.samples, a.seed, a.floor);
  fs::create_directories(a.outdir);
  const std::string csv_path = a.outdir + "/measure_census.csv";
  {
    std::ofstream os(csv_path);
    if (!os) throw std::runtime_error("cannot write " + csv_path);
    os << std::setprecision(17);
    os << "k,s,classes,estimate,std_err,bound\n";
    for (const auto& [k, pk] : c.per_k)
      os << k << ",1," << pk.classes << ',' << pk.estimate << ','
         << pk.std_err << ',' << pk.bound << "\n";
  }
  json summary;
  summary["j0"] = c.j0;
  summary["eps"] = c.eps;
  summary["tau"] = c.tau;
  summary["kappa"] = c.kappa;
  summary["samples"] = a.samples;
  summary["schedule_M"] = c.schedule_M;
  summary["schedule_converged"] = c.schedule_converged;
  summary["nonresonant_estimate"] = c.overall_estimate;
  summary["nonresonant_std_err"] = c.overall_std_err;
  summary["lower_bound"] = c.lower_bound;
  write_json(summary, a.outdir + "/measure_summary.json");

  std::size_t worst_k = 0;
  double worst_excess = -1.0;
  bool all_within = true;
  for (const auto& [k, pk] : c.per_k) {
    const double excess = pk.estimate - (pk.bound + 3.0 * pk.std_err);
    if (excess > 0.0) all_within = false;
    if (excess > worst_excess) {
      worst_excess = excess;
      worst_k = static_cast<std::size_t>(std::abs(k));
    }
  }
  std::cout << "census over " << c.per_k.size() << " window sites; union "
            << (all_within ? "within" : "EXCEEDS") << " the analytic bound"
            << " (tightest at |k| = " << worst_k << ")\n";
  std::cout << "nonresonant measure = " << c.overall_estimate << " +- "
            << c.overall_std_err << "  (lower bound " << c.lower_bound
            << ")\n";
  std::cout << "wrote " << csv_path << " and " << a.outdir
            << "/measure_summary.json\n";
  return all_within ? 0 : 3;
}

struct FitArgs {
  std::string trace;
  std::string ensemble;
  double t_min = -1.0;
  double t_max = -1.0;
};

int cmd_fit(const FitArgs& a) {
  std::vector<double> t, d;
  if (!a.trace.empty()) {
    const nlam::DiffusionTrace tr = nlam::read_trace_csv(a.trace);
    t = tr.sample_times;
    d = tr.diffusion_values;
  } else if (!a.ensemble.empty()) {
    const auto traces = load_trace_dir(a.ensemble);
    const nlam::EnsembleStats st = nlam::aggregate_ensemble(traces);
    t = st.t;
    d = st.q50;
  } else {
    throw std::invalid_argument("fit: need --trace or --ensemble");
  }
  double tmax = a.t_max >= 0 ? a.t_max : (t.empty() ? 0.0 : t.back());
  double tmin = a.t_min >= 0 ? a.t_min : nlam::default_fit_window(tmax).first;
  const nlam::FitResult f = nlam::fit_power_law(t, d, tmin, tmax);
  std::cout << "kappa_fit = " << f.kappa_fit << " +- " << f.std_err
            << "  (r2 = " << f.r2 << ", n = " << f.n << ", t in [" << tmin
            << ", " << tmax << "])\n";
  return 0;
}

struct TameArgs {
  double s = 2.0;
  std::int32_t window = 64;
  std::int32_t trials = 100;
  std::uint64_t seed = 7;
  std::int32_t j0 = 0;  // states supported outside [-j0, j0]
};

int cmd_tame_check(const TameArgs& a) {
  if (a.j0 >= a.window)
    throw std::invalid_argument("tame-check: j0 must be < window");
  double worst = 0.0;
  std::int32_t failures = 0;
  for (std::int32_t trial = 0; trial < a.trials; ++trial) {
    nlam::LatticeState p(a.window), q(a.window);
    for (std::int32_t j = -a.window; j <= a.window; ++j) {
      if (std::abs(j) <= a.j0) continue;
      p.at(j) = nlam::cplx(2.0 * nlam::rng::uniform(a.seed, 4 * trial, j) - 1.0,
                           2.0 * nlam::rng::uniform(a.seed, 4 * trial + 1, j) - 1.0);
      q.at(j) = nlam::cplx(2.0 * nlam::rng::uniform(a.seed, 4 * trial + 2, j) - 1.0,
                           2.0 * nlam::rng::uniform(a.seed, 4 * trial + 3, j) - 1.0);
    }
    const nlam::TameCheck c = nlam::convolution_tame_check(p, q, a.s);
    if (c.rhs > 0.0) worst = std::max(worst, c.lhs / c.rhs);
    if (c.lhs > c.rhs) ++failures;
  }
  std::cout << "tame check: " << a.trials << " trials at s = " << a.s
            << ", worst lhs/rhs = " << worst << ", failures = " << failures
            << "\n";
  return failures == 0 ? 0 : 3;
}

struct PlotArgs {
  std::string outdir = "out";
  double t_min = -1.0;
  double t_max = -1.0;
  std::string script = "tools/plot_traces.py";
  bool no_image = false;
};

int cmd_plot(const PlotArgs& a) {
  const auto traces = load_trace_dir(a.outdir);
  const nlam::EnsembleStats st = nlam::aggregate_ensemble(traces);
  double tmax = a.t_max >= 0 ? a.t_max : st.t.back();
  double tmin = a.t_min >= 0 ? a.t_min : nlam::default_fit_window(tmax).first;
  nlam::FitResult fit;
  bool have_fit = false;
  try {
    fit = nlam::fit_power_law(st.t, st.q50, tmin, tmax);
    have_fit = true;
  } catch (const std::invalid_argument&) {
  }
  const auto files =
      nlam::emit_plots(traces, a.outdir, have_fit ? &fit : nullptr);
  std::cout << "wrote " << files[0] << "\n";
  if (!a.no_image) {
    const std::string cmd = "python3 " + a.script + " " + files[0] + " " +
                            a.outdir + "/ensemble.png";
    if (std::system(cmd.c_str()) != 0)
      std::cout << "image generation skipped (plot script unavailable); CSV "
                   "is complete\n";
    else
      std::cout << "wrote " << a.outdir << "/ensemble.png\n";
  }
  return 0;
}

int dispatch(const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const nlam::ScheduleError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const nlam::ResonanceAbort& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 3;
  } catch (const nlam::BoundaryAbort& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 3;
  } catch (const nlam::BoundViolation& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 3;
  } catch (const nlam::LieDivergence& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    const bool io = what.rfind("cannot ", 0) == 0 ||
                    what.find("file") != std::string::npos ||
                    what.rfind("no traces", 0) == 0;
    std::cerr << (io ? "io error: " : "numerical abort: ") << what << "\n";
    return io ? 4 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lattice NLS with random potential: simulation, normal form, "
               "resonance measure"};
  app.require_subcommand(1);

  // --- simulate ---
  nlam::ExperimentConfig cfg;
  std::string config_path;
  auto* sim = app.add_subcommand("simulate", "run a disorder ensemble");
  sim->add_option("--config", config_path, "key = value config file");
  sim->add_option("--eps", cfg.eps, "hopping strength");
  sim->add_option("--delta", cfg.delta, "nonlinearity strength");
  sim->add_option("--dt", cfg.dt, "Strang step");
  sim->add_option("--window", cfg.window, "lattice half-width W");
  sim->add_option("--t-final", cfg.t_final, "integration time");
  sim->add_option("--seed-base", cfg.seed_base, "first seed");
  sim->add_option("--seed-count", cfg.seed_count, "number of seeds");
  sim->add_option("--seeds", cfg.seeds, "explicit seed list");
  sim->add_option("--j0", cfg.j0, "tail-mass barrier (0: window/2)");
  sim->add_option("--grid-per-decade", cfg.grid_per_decade, "sample density");
  sim->add_option("--fit-t-min", cfg.fit_t_min, "fit window start");
  sim->add_option("--fit-t-max", cfg.fit_t_max, "fit window end");
  sim->add_option("--workers", cfg.workers, "worker threads");
  sim->add_option("--outdir", cfg.outdir, "output directory");
  std::string boundary = "dirichlet";
  sim->add_option("--boundary", boundary, "dirichlet | periodic");

  // --- normal-form ---
  NormalFormArgs nf;
  auto* nfc = app.add_subcommand("normal-form",
                                 "iterative elimination with bound margins");
  nfc->add_option("--epsilon", nf.epsilon, "hopping strength");
  nfc->add_option("--tau", nf.tau, "tame weight exponent, in (0, 0.01)");
  nfc->add_option("--j0", nf.j0, "barrier site");
  nfc->add_option("--kappa", nf.kappa, "target exponent parameter");
  nfc->add_option("--window", nf.window, "formal lattice half-width");
  nfc->add_option("--degree-cap", nf.degree_cap,
                  "Lie series order cap (<=0: ceil(10/kappa) + 4)");
  nfc->add_option("--dump-dir", nf.dump_dir, "write per-step JSON and dumps");
  nfc->add_option("--seed", nf.seed, "potential seed");
  nfc->add_option("--annulus-width", nf.annulus_width,
                  "fixed annulus half-width (desk runs); <0 uses the N_s formula");
  nfc->add_flag("--permissive", nf.permissive,
                "record margins without enforcing them");

  // --- measure ---
  MeasureArgs ma;
  auto* mc = app.add_subcommand("measure", "resonance measure census");
  mc->add_option("--j0", ma.j0, "barrier site");
  mc->add_option("--epsilon", ma.epsilon, "hopping strength");
  mc->add_option("--tau", ma.tau, "tame weight exponent");
  mc->add_option("--kappa", ma.kappa, "degree cutoff parameter (10/kappa)");
  mc->add_option("--samples", ma.samples, "Monte-Carlo samples");
  mc->add_option("--seed", ma.seed, "sampling seed");
  mc->add_option("--floor", ma.floor, "drop classes below this threshold");
  mc->add_option("--outdir", ma.outdir, "output directory");

  // --- fit ---
  FitArgs fa;
  auto* fc = app.add_subcommand("fit", "power-law fit of D(t)");
  fc->add_option("--trace", fa.trace, "single trace CSV");
  fc->add_option("--ensemble", fa.ensemble, "directory of trace_*.csv");
  fc->add_option("--t-min", fa.t_min, "fit window start");
  fc->add_option("--t-max", fa.t_max, "fit window end");

  // --- tame-check ---
  TameArgs ta;
  auto* tc = app.add_subcommand("tame-check", "convolution tame inequality");
  tc->add_option("--s", ta.s, "Sobolev index");
  tc->add_option("--window", ta.window, "state half-width");
  tc->add_option("--trials", ta.trials, "random state pairs");
  tc->add_option("--seed", ta.seed, "RNG seed");
  tc->add_option("--j0", ta.j0, "support excluded from [-j0, j0]");

  // --- plot ---
  PlotArgs pa;
  auto* pc = app.add_subcommand("plot", "aggregate traces into plot data");
  pc->add_option("--outdir", pa.outdir, "directory of trace_*.csv");
  pc->add_option("--t-min", pa.t_min, "fit window start");
  pc->add_option("--t-max", pa.t_max, "fit window end");
  pc->add_option("--script", pa.script, "plotting script path");
  pc->add_flag("--no-image", pa.no_image, "write CSV only");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (sim->parsed())
    return dispatch([&] {
      if (!config_path.empty()) {
        // CLI flags override file values.
        nlam::ExperimentConfig merged = nlam::load_config_file(config_path);
        if (sim->count("--eps")) merged.eps = cfg.eps;
        if (sim->count("--delta")) merged.delta = cfg.delta;
        if (sim->count("--dt")) merged.dt = cfg.dt;
        if (sim->count("--window")) merged.window = cfg.window;
        if (sim->count("--t-final")) merged.t_final = cfg.t_final;
        if (sim->count("--seed-base")) merged.seed_base = cfg.seed_base;
        if (sim->count("--seed-count")) merged.seed_count = cfg.seed_count;
        if (sim->count("--seeds")) merged.seeds = cfg.seeds;
        if (sim->count("--j0")) merged.j0 = cfg.j0;
        if (sim->count("--grid-per-decade"))
          merged.grid_per_decade = cfg.grid_per_decade;
        if (sim->count("--fit-t-min")) merged.fit_t_min = cfg.fit_t_min;
        if (sim->count("--fit-t-max")) merged.fit_t_max = cfg.fit_t_max;
        if (sim->count("--workers")) merged.workers = cfg.workers;
        if (sim->count("--outdir")) merged.outdir = cfg.outdir;
        cfg = merged;
      }
      if (sim->count("--boundary")) {
        if (boundary == "periodic") cfg.boundary = nlam::Boundary::periodic;
        else if (boundary == "dirichlet") cfg.boundary = nlam::Boundary::dirichlet;
        else throw std::invalid_argument("unknown boundary '" + boundary + "'");
      }
      return cmd_simulate(cfg);
    });
  if (nfc->parsed()) return dispatch([&] { return cmd_normal_form(nf); });
  if (mc->parsed()) return dispatch([&] { return cmd_measure(ma); });
  if (fc->parsed()) return dispatch([&] { return cmd_fit(fa); });
  if (tc->parsed()) return dispatch([&] { return cmd_tame_check(ta); });
  if (pc->parsed()) return dispatch([&] { return cmd_plot(pa); });
  return 2;
}
