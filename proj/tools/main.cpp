#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vcn/config.hpp"
#include "vcn/ergodicity.hpp"
#include "vcn/errors.hpp"
#include "vcn/fpsolver.hpp"
#include "vcn/io.hpp"
#include "vcn/model.hpp"
#include "vcn/particle.hpp"
#include "vcn/validate.hpp"

namespace {

using namespace vcn;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitValidation = 4;

struct Artifacts {
  std::string dir;
  RunMeta meta;

  void write(const std::string& name, const std::string& body) const {
    write_artifact(dir + "/" + name, meta, body);
  }
};

std::string kv(const std::string& key, const std::string& value) {
  return key + " = " + value + "\n";
}
std::string kv(const std::string& key, double value) {
  return kv(key, fmt(value));
}
std::string kv(const std::string& key, std::uint64_t value) {
  return kv(key, fmt_u64(value));
}
std::string kv(const std::string& key, int value) {
  return kv(key, fmt_u64(std::uint64_t(value)));
}
std::string kv(const std::string& key, bool value) {
  return kv(key, std::string(value ? "true" : "false"));
}

HarrisConstants harris_for(const RunConfig& rc, double R) {
  const auto& e = rc.ergodicity;
  const double v_r = e.v_r > 0 ? e.v_r : default_halfwidth_v(rc.model);
  const double g_r = e.g_r > 0 ? e.g_r : default_halfwidth_g(rc.model, v_r);
  return harris_constants(rc.model, R, v_r, g_r);
}

std::string harris_text(const HarrisConstants& h, double beta) {
  std::string s;
  s += kv("v_star", h.v_star);
  s += kv("g_star", h.g_star);
  s += kv("v_r", h.v_r);
  s += kv("g_r", h.g_r);
  s += kv("J_star", h.J_star);
  s += kv("T1", h.T1);
  s += kv("T2", h.T2);
  s += kv("T3", h.T3);
  s += kv("T", h.T);
  s += kv("R", h.R);
  s += kv("M", h.M);
  s += kv("beta", beta);
  return s;
}

std::string density_csv(const DensityField& f) {
  std::string body = "v,g,p\n";
  const GridSpec& gr = f.grid;
  for (int j = 0; j < gr.n_g; ++j)
    for (int i = 0; i < gr.n_v; ++i)
      body += csv_row({fmt(gr.v_center(i)), fmt(gr.g_center(j)),
                       fmt(f.p[std::size_t(gr.cell(i, j))])});
  body += kv("# overflow_mass", f.overflow_mass);
  return body;
}

std::string marginal_csv(const DensityField& f) {
  std::string body = "g,density\n";
  const std::vector<double> m = f.conductance_marginal();
  for (int j = 0; j < f.grid.n_g; ++j)
    body += csv_row({fmt(f.grid.g_center(j)), fmt(m[std::size_t(j)])});
  return body;
}

std::string flux_csv(const FpOperator& op, const DensityField& f) {
  std::string body = "g,threshold_out,reset_in\n";
  const FpOperator::FluxProfile prof = op.boundary_flux_profile(f);
  for (int j = 0; j < f.grid.n_g; ++j)
    body += csv_row({fmt(f.grid.g_center(j)), fmt(prof.threshold_out[std::size_t(j)]),
                     fmt(prof.reset_in[std::size_t(j)])});
  return body;
}

double steady_residual(const FpOperator& op, const DensityField& f) {
  const Eigen::Map<const Eigen::VectorXd> x(f.p.data(),
                                            Eigen::Index(f.p.size()));
  return (op.matrix() * x).cwiseAbs().sum() * f.grid.dv() * f.grid.dg();
}

int cmd_simulate(const RunConfig& rc, const Artifacts& art) {
  SimConfig cfg = rc.particle;
  if (cfg.snapshot_times.empty()) cfg.snapshot_times = {cfg.horizon};
  const EnsembleResult res = simulate_ensemble(rc.model, cfg, rc.initial);

  std::string snaps = "time,particle,v,g,local_time,spikes\n";
  for (std::size_t k = 0; k < res.snapshot_times.size(); ++k) {
    const std::string t = fmt(res.snapshot_times[k]);
    for (std::size_t i = 0; i < res.snapshots[k].size(); ++i) {
      const ParticleState& s = res.snapshots[k][i];
      snaps += csv_row({t, fmt_u64(i), fmt(s.v), fmt(s.g), fmt(s.local_time),
                        fmt_u64(s.spikes)});
    }
  }
  art.write("snapshots.csv", snaps);

  std::string spikes = "particle,time,g\n";
  for (const SpikeRecord& s : res.spikes)
    spikes += csv_row({fmt_u64(s.particle), fmt(s.time), fmt(s.g)});
  art.write("spikes.csv", spikes);

  // Dense (v, g) path of particle 0, replayed on its own stream; at
  // most ~20k rows regardless of horizon/dt.
  {
    SimConfig tcfg = cfg;
    tcfg.record_spikes = false;
    const std::uint64_t n_steps =
        std::uint64_t(std::ceil(cfg.horizon / cfg.dt));
    const std::uint64_t stride = std::max<std::uint64_t>(
        1, (n_steps + 19999) / 20000);
    tcfg.snapshot_times.clear();
    tcfg.snapshot_times.push_back(0.0);
    for (std::uint64_t k = stride; double(k) * cfg.dt < cfg.horizon - 1e-12;
         k += stride)
      tcfg.snapshot_times.push_back(double(k) * cfg.dt);
    if (cfg.horizon > 0) tcfg.snapshot_times.push_back(cfg.horizon);

    RandomStream rng(cfg.seed, 0);
    const ParticleState s0 = draw_initial(rc.initial, 0, rng);
    const ParticleRun run = simulate_particle(rc.model, tcfg, s0, 0, rng);
    std::string traj = "time,v,g\n";
    for (std::size_t k = 0; k < tcfg.snapshot_times.size(); ++k)
      traj += csv_row({fmt(tcfg.snapshot_times[k]), fmt(run.snapshots[k].v),
                       fmt(run.snapshots[k].g)});
    art.write("trajectory.csv", traj);
  }

  std::string summary;
  summary += kv("n_particles", cfg.n_particles);
  summary += kv("horizon", cfg.horizon);
  summary += kv("dt", cfg.dt);
  summary += kv("total_steps", res.total_steps);
  summary += kv("total_spikes", std::uint64_t(res.spikes.size()));
  if (cfg.horizon > 0 && cfg.record_spikes)
    summary += kv("mean_firing_rate",
                  firing_rate(res.spikes, cfg.n_particles, 0.0, cfg.horizon));
  art.write("simulate_summary.txt", summary);
  return kExitOk;
}

int cmd_solve(const RunConfig& rc, const Artifacts& art) {
  const PdeRunConfig& pc = rc.pde;
  const GridSpec grid = GridSpec::make(rc.model, pc.n_v, pc.n_g, pc.g_max);
  const FpOperator op = FpOperator::assemble(rc.model, grid);
  const bool do_steady = pc.mode != PdeRunConfig::Mode::transient;
  const bool do_transient = pc.mode != PdeRunConfig::Mode::steady;

  if (do_steady) {
    SolverOptions opts;
    opts.dt = pc.dt;
    opts.scheme = pc.scheme;
    opts.steady_tol = pc.steady_tol;
    opts.steady_max_iter = pc.steady_max_iter;
    opts.steady_dt = pc.steady_dt;
    const DensityField steady = steady_state(op, opts);
    art.write("steady_density.csv", density_csv(steady));
    art.write("steady_marginal.csv", marginal_csv(steady));
    art.write("flux_profile.csv", flux_csv(op, steady));

    std::string summary;
    summary += kv("n_v", grid.n_v);
    summary += kv("n_g", grid.n_g);
    summary += kv("g_max", grid.g_max);
    summary += kv("residual", steady_residual(op, steady));
    summary += kv("mass", steady.mass());
    summary += kv("firing_rate", op.firing_rate(steady));
    summary += kv("critical_face", op.critical_face());
    art.write("steady_summary.txt", summary);
  }

  if (do_transient) {
    DensityField f = density_from_initial(rc.initial, grid);
    const TransientStepper stepper(op, pc.dt, pc.scheme);
    const int n_steps = int(std::llround(pc.horizon / pc.dt));
    if (n_steps < 1) throw ConfigError("[pde] horizon shorter than dt");
    const int log_every = std::max(1, n_steps / 1000);

    std::string drift = "step,time,mass_error,min_cell\n";
    double worst_drift = 0.0, min_cell = 0.0;
    for (int s = 1; s <= n_steps; ++s) {
      stepper.step(f);
      if (s % log_every == 0 || s == n_steps) {
        const double err = f.mass() - 1.0;
        const double mn = *std::min_element(f.p.begin(), f.p.end());
        worst_drift = std::max(worst_drift, std::fabs(err));
        min_cell = std::min(min_cell, mn);
        drift += csv_row({fmt_u64(std::uint64_t(s)), fmt(double(s) * pc.dt),
                          fmt(err), fmt(mn)});
      }
    }
    art.write("transient_mass.csv", drift);
    f.time = double(n_steps) * pc.dt;
    art.write("transient_density.csv", density_csv(f));

    std::string summary;
    summary += kv("steps", std::uint64_t(n_steps));
    summary += kv("dt", pc.dt);
    summary += kv("max_mass_drift", worst_drift);
    summary += kv("min_cell", min_cell);
    summary += kv("firing_rate_final", op.firing_rate(f));
    art.write("transient_summary.txt", summary);
  }
  return kExitOk;
}

int cmd_constants(const RunConfig& rc) {
  const HarrisConstants h = harris_for(rc, rc.ergodicity.R);
  std::cout << harris_text(h, rc.ergodicity.beta);
  return kExitOk;
}

int cmd_ergodicity(const RunConfig& rc, const Artifacts& art) {
  const auto& e = rc.ergodicity;
  const HarrisConstants h = harris_for(rc, e.R);
  const HarrisConstants h_cmp = harris_for(rc, e.R_compare);
  art.write("harris_constants.txt", harris_text(h, e.beta));

  bool probe_failed = false;
  std::string summary;

  // Drift of the conductance weight from probe points covering the
  // sub-level box of the larger level.
  LyapunovConfig lcfg;
  lcfg.horizon = e.lyapunov_horizon;
  lcfg.n_times = e.lyapunov_times;
  lcfg.n_samples = e.lyapunov_samples;
  lcfg.seed = rc.seed;
  lcfg.threads = rc.threads;
  const auto points = lyapunov_probe_points(rc.model, e.lyapunov_R,
                                            e.lyapunov_points_v,
                                            e.lyapunov_points_g);
  const LyapunovReport lyap = lyapunov_probe(rc.model, lcfg, points, h.T);

  std::string lcsv = "v0,g0,time,f_hat,se,bound\n";
  for (const LyapunovCurve& c : lyap.curves)
    for (std::size_t k = 0; k < lyap.times.size(); ++k)
      lcsv += csv_row({fmt(c.v0), fmt(c.g0), fmt(lyap.times[k]),
                       fmt(c.f_hat[k]), fmt(c.se[k]), fmt(c.bound[k])});
  art.write("lyapunov.csv", lcsv);
  summary += kv("lyapunov_points", std::uint64_t(lyap.curves.size()));
  summary += kv("lyapunov_ok", lyap.all_ok);
  summary += kv("lyapunov_alpha1", lyap.alpha1);
  summary += kv("lyapunov_alpha2", lyap.alpha2);
  if (!lyap.all_ok) {
    summary += kv("lyapunov_violation", lyap.violation);
    probe_failed = true;
  }

  // Transition-density floor at the two levels; shared probe points
  // replay identical noise, so the larger level can only do worse.
  MinorizationConfig mcfg = e.minor;
  mcfg.seed = rc.seed;
  mcfg.threads = rc.threads;
  const MinorizationReport m1 = minorization_probe(rc.model, h, mcfg);
  const MinorizationReport m2 = minorization_probe(rc.model, h_cmp, mcfg);

  std::string mtxt;
  auto minor_block = [&](const char* tag, const MinorizationReport& m) {
    std::string s;
    const std::string pre = std::string(tag) + "_";
    s += kv(pre + "R", m.constants.R);
    s += kv(pre + "T", m.T);
    s += kv(pre + "points", std::uint64_t(m.points.size()));
    s += kv(pre + "n_per_point", m.n_per_point);
    s += kv(pre + "block_i0", m.block_i0);
    s += kv(pre + "block_j0", m.block_j0);
    s += kv(pre + "min_count", m.min_count);
    s += kv(pre + "eta_hat", m.eta_hat);
    s += kv(pre + "eta_lcb", m.eta_lcb);
    s += kv(pre + "worst_point", m.worst_point);
    s += kv(pre + "pass", m.pass);
    return s;
  };
  mtxt += minor_block("base", m1);
  mtxt += minor_block("compare", m2);
  const MinorizationReport& lo = e.R_compare >= e.R ? m1 : m2;
  const MinorizationReport& hi = e.R_compare >= e.R ? m2 : m1;
  const bool monotone = hi.eta_hat <= lo.eta_hat;
  mtxt += kv("eta_monotone_in_R", monotone);
  art.write("minorization.txt", mtxt);
  summary += kv("minorization_pass", m1.pass && m2.pass);
  summary += kv("eta_monotone_in_R", monotone);
  if (!m1.pass || !m2.pass || !monotone) probe_failed = true;

  // Weighted-TV decay toward the stationary density from the config's
  // initial measure and a fixed second one.
  const GridSpec grid =
      GridSpec::make(rc.model, rc.pde.n_v, rc.pde.n_g, rc.pde.g_max);
  const FpOperator op = FpOperator::assemble(rc.model, grid);
  SolverOptions sopts;
  sopts.dt = rc.pde.dt;
  sopts.steady_tol = rc.pde.steady_tol;
  sopts.steady_max_iter = rc.pde.steady_max_iter;
  sopts.steady_dt = rc.pde.steady_dt;
  const DensityField steady = steady_state(op, sopts);

  StudyConfig scfg;
  scfg.mode = e.study_mode;
  scfg.horizon = e.study_horizon;
  scfg.snapshot_dt = e.study_snapshot_dt;
  scfg.dt = e.study_dt;
  scfg.tv.beta = e.beta;
  scfg.tv.g_ref = rc.model.g_in;
  scfg.tv.grid = grid;
  scfg.T_for_theta = h.T;
  scfg.stationary_floor = e.study_floor;
  scfg.n_particles = rc.particle.n_particles;
  scfg.seed = rc.seed;
  scfg.threads = rc.threads;

  const double span = rc.model.V_F - rc.model.V_R;
  std::vector<InitialCondition> inits;
  inits.push_back(rc.initial);
  inits.push_back(BoxInit{rc.model.V_R + 0.5 * span, rc.model.V_R + 0.9 * span,
                          2.0, 4.0});
  const std::vector<RateFitReport> fits =
      convergence_study(rc.model, op, steady, inits, scfg);

  std::string dcsv = "init,time,dist\n";
  for (std::size_t q = 0; q < fits.size(); ++q)
    for (std::size_t k = 0; k < fits[q].times.size(); ++k)
      dcsv += csv_row({fmt_u64(q), fmt(fits[q].times[k]),
                       fmt(fits[q].dist[k])});
  art.write("decay_curves.csv", dcsv);

  std::string rtxt;
  for (std::size_t q = 0; q < fits.size(); ++q) {
    const RateFitReport& r = fits[q];
    const std::string pre = "init" + fmt_u64(q) + "_";
    const char* status = r.status == RateFitReport::Status::ok
                             ? "ok"
                             : r.status == RateFitReport::Status::already_stationary
                                   ? "already_stationary"
                                   : "inconclusive";
    rtxt += kv(pre + "status", std::string(status));
    rtxt += kv(pre + "lambda", r.lambda);
    rtxt += kv(pre + "C", r.C);
    rtxt += kv(pre + "r2", r.r2);
    rtxt += kv(pre + "lambda_lo", r.lambda_lo);
    rtxt += kv(pre + "lambda_hi", r.lambda_hi);
    rtxt += kv(pre + "theta_hat", r.theta_hat);
    if (!r.note.empty()) rtxt += kv(pre + "note", r.note);
  }
  if (fits.size() >= 2 && fits[0].status == RateFitReport::Status::ok &&
      fits[1].status == RateFitReport::Status::ok) {
    const double rel = std::fabs(fits[0].lambda - fits[1].lambda) /
                       std::max(fits[0].lambda, fits[1].lambda);
    rtxt += kv("lambda_relative_spread", rel);
  }
  art.write("rate_summary.txt", rtxt);

  summary += kv("probe_failed", probe_failed);
  art.write("ergodicity_summary.txt", summary);
  return probe_failed ? kExitValidation : kExitOk;
}

int cmd_validate(const RunConfig& rc, const Artifacts& art) {
  const auto& vc = rc.validation;
  const GridSpec grid =
      GridSpec::make(rc.model, rc.pde.n_v, rc.pde.n_g, rc.pde.g_max);
  const FpOperator op = FpOperator::assemble(rc.model, grid);
  SolverOptions sopts;
  sopts.dt = rc.pde.dt;
  sopts.steady_tol = rc.pde.steady_tol;
  sopts.steady_max_iter = rc.pde.steady_max_iter;
  sopts.steady_dt = rc.pde.steady_dt;
  const DensityField steady = steady_state(op, sopts);

  ValidationReport report;
  for (CheckResult& c : check_boundary_fluxes(op, steady, vc.flux_tol))
    report.checks.push_back(std::move(c));

  // Marginal dynamics: short transient solve, compared against the
  // one-dimensional operator at every snapshot.
  {
    std::vector<DensityField> series;
    DensityField f = density_from_initial(rc.initial, grid);
    series.push_back(f);
    const TransientStepper stepper(op, rc.pde.dt, Scheme::implicit);
    const int per =
        std::max(1, int(std::llround(vc.marginal_snapshot_dt / rc.pde.dt)));
    const int n_snaps =
        std::max(1, int(std::llround(vc.marginal_horizon /
                                     (double(per) * rc.pde.dt))));
    for (int s = 0; s < n_snaps; ++s) {
      stepper.advance(f, per);
      f.time = double(s + 1) * double(per) * rc.pde.dt;
      series.push_back(f);
    }
    report.checks.push_back(
        check_marginal_equation(rc.model, series, rc.pde.dt, vc.marginal_tol));
  }

  // One spiking ensemble feeds both the rate and the profile checks.
  {
    SimConfig scfg;
    scfg.dt = vc.particle_dt;
    scfg.horizon = vc.window_hi;
    scfg.n_particles = vc.n;
    scfg.seed = rc.seed;
    scfg.threads = rc.threads;
    scfg.record_spikes = true;
    const EnsembleResult res = simulate_ensemble(rc.model, scfg, rc.initial);
    report.checks.push_back(check_firing_rate(op, steady, res.spikes, vc.n,
                                              vc.window_lo, vc.window_hi,
                                              vc.rate_tol));
    report.checks.push_back(check_spike_profile(op, steady, res.spikes,
                                                vc.window_lo, vc.window_hi,
                                                vc.profile_tol));
  }

  for (CheckResult& c :
       cross_validate(rc.model, op, rc.initial, vc.times, vc.n,
                      vc.particle_dt, rc.pde.dt, rc.seed, rc.threads,
                      vc.budget))
    report.checks.push_back(std::move(c));

  std::string csv = "name,measured,tol,pass\n";
  std::string text;
  for (const CheckResult& c : report.checks) {
    csv += csv_row({c.name, fmt(c.measured), fmt(c.tol),
                    c.pass ? "1" : "0"});
    text += std::string(c.pass ? "[PASS] " : "[FAIL] ") + c.name +
            "  measured=" + fmt(c.measured) + "  tol=" + fmt(c.tol);
    if (!c.provenance.empty()) text += "  (" + c.provenance + ")";
    text += "\n";
  }
  text += std::string("overall: ") + (report.all_pass() ? "PASS" : "FAIL") +
          "\n";
  art.write("validation_report.csv", csv);
  art.write("validation_report.txt", text);
  art.write("flux_profile.csv", flux_csv(op, steady));
  art.write("steady_marginal.csv", marginal_csv(steady));
  std::cout << text;
  return report.all_pass() ? kExitOk : kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voltage-conductance neuron ensemble toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_override;
  std::uint64_t seed_override = 0;
  bool seed_set = false;
  int threads_override = 0;

  auto add_common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--config", config_path, "run configuration file")
        ->required();
    if (needs_out)
      sub->add_option("--out", out_override, "output directory override");
    sub->add_option_function<std::uint64_t>(
           "--seed",
           [&](std::uint64_t s) {
             seed_override = s;
             seed_set = true;
           },
           "seed override");
    sub->add_option("--threads", threads_override,
                    "worker thread override (results do not depend on it)");
  };

  CLI::App* sim = app.add_subcommand("simulate", "run the particle ensemble");
  CLI::App* solve = app.add_subcommand("solve", "run the density solver");
  CLI::App* ergo =
      app.add_subcommand("ergodicity", "drift, floor, and decay probes");
  CLI::App* val =
      app.add_subcommand("validate", "cross-checks between the solvers");
  CLI::App* cons =
      app.add_subcommand("constants", "print the contraction constants");
  for (CLI::App* sub : {sim, solve, ergo, val}) add_common(sub, true);
  add_common(cons, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (argc <= 1) std::cerr << app.help();
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    RunConfig rc = RunConfig::from_file(config_path);
    if (seed_set) rc.seed = seed_override;
    if (threads_override > 0) rc.threads = threads_override;
    if (!out_override.empty()) rc.out_dir = out_override;
    rc.particle.seed = rc.seed;
    rc.particle.threads = rc.threads;
    rc.ergodicity.minor.seed = rc.seed;
    rc.ergodicity.minor.threads = rc.threads;

    if (cons->parsed()) return cmd_constants(rc);

    ensure_dir(rc.out_dir);
    const Artifacts art{rc.out_dir, RunMeta{rc.config_hash, rc.seed}};
    if (sim->parsed()) return cmd_simulate(rc, art);
    if (solve->parsed()) return cmd_solve(rc, art);
    if (ergo->parsed()) return cmd_ergodicity(rc, art);
    if (val->parsed()) return cmd_validate(rc, art);
    std::cerr << app.help();
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}
