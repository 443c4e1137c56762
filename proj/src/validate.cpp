#include "vcn/validate.hpp"

#include <cmath>
#include <sstream>

#include "vcn/errors.hpp"

namespace vcn {

namespace {

// Smooth bump equal to 1 at the center of (lo, hi) and identically
// zero outside, mirroring a compactly supported test function.
double bump(double g, double lo, double hi) {
  const double u = (2.0 * g - lo - hi) / (hi - lo);
  if (!(std::fabs(u) < 1.0)) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - u * u));
}

std::string fmt_time(double t) {
  std::ostringstream os;
  os << t;
  return os.str();
}

std::vector<double> aggregate_blocks(const DensityField& f, int agg_v,
                                     int agg_g) {
  const GridSpec& gr = f.grid;
  const int bv = gr.n_v / agg_v, bg = gr.n_g / agg_g;
  std::vector<double> mass(std::size_t(bv) * std::size_t(bg), 0.0);
  const double area = gr.dv() * gr.dg();
  for (int j = 0; j < gr.n_g; ++j)
    for (int i = 0; i < gr.n_v; ++i)
      mass[std::size_t(i / agg_v + (j / agg_g) * bv)] +=
          f.p[std::size_t(gr.cell(i, j))] * area;
  return mass;
}

}  // namespace

bool ValidationReport::all_pass() const {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

std::vector<CheckResult> check_boundary_fluxes(const FpOperator& op,
                                               const DensityField& steady,
                                               double tol) {
  const auto prof = op.boundary_flux_profile(steady);
  const GridSpec& gr = op.grid();
  const double g_F = critical_conductance(op.params());
  const double dg = gr.dg();
  std::vector<CheckResult> out;

  double worst = 0.0;
  for (int j = op.critical_face(); j < gr.n_g; ++j)
    worst = std::max(worst, std::fabs(prof.threshold_out[std::size_t(j)] -
                                      prof.reset_in[std::size_t(j)]));
  out.push_back({"boundary_flux_match_above_critical", worst, tol,
                 worst <= tol, "stationary field vs assembled reinjection"});

  double below = 0.0;
  for (int j = 0; j < op.critical_face(); ++j)
    below += bump(gr.g_center(j), 0.0, g_F) *
             (std::fabs(prof.threshold_out[std::size_t(j)]) +
              std::fabs(prof.reset_in[std::size_t(j)])) *
             dg;
  out.push_back({"boundary_flux_zero_below_critical", below, tol, below <= tol,
                 "bump weight supported inside (0, g_F)"});

  double above = 0.0;
  for (int j = op.critical_face(); j < gr.n_g; ++j)
    above += bump(gr.g_center(j), g_F, gr.g_max) *
             (prof.threshold_out[std::size_t(j)] -
              prof.reset_in[std::size_t(j)]) *
             dg;
  above = std::fabs(above);
  out.push_back({"boundary_flux_weak_identity_above_critical", above, tol,
                 above <= tol, "bump weight supported inside (g_F, g_max)"});
  return out;
}

CheckResult check_spike_profile(const FpOperator& op,
                                const DensityField& steady,
                                const std::vector<SpikeRecord>& spikes,
                                double t_lo, double t_hi, double tol) {
  const GridSpec& gr = op.grid();
  const double dg = gr.dg();
  std::vector<double> emp(std::size_t(gr.n_g), 0.0);
  double n_spikes = 0.0;
  for (const auto& s : spikes) {
    if (!(s.time > t_lo && s.time <= t_hi)) continue;
    int j = int(s.g / dg);
    if (j >= gr.n_g) j = gr.n_g - 1;
    if (j < 0) j = 0;
    emp[std::size_t(j)] += 1.0;
    n_spikes += 1.0;
  }
  CheckResult res;
  res.name = "spike_profile_shape";
  res.tol = tol;
  res.provenance = "spike conductance histogram vs stationary threshold flux";
  if (n_spikes == 0.0) {
    res.measured = 1.0;
    res.pass = false;
    return res;
  }
  const auto prof = op.boundary_flux_profile(steady);
  double flux_total = 0.0;
  for (double x : prof.threshold_out) flux_total += x;
  double tv = 0.0;
  for (int j = 0; j < gr.n_g; ++j)
    tv += std::fabs(emp[std::size_t(j)] / n_spikes -
                    prof.threshold_out[std::size_t(j)] / flux_total);
  res.measured = 0.5 * tv;
  res.pass = res.measured <= tol;
  return res;
}

CheckResult check_marginal_equation(const ModelParams& p,
                                    const std::vector<DensityField>& series,
                                    double solver_dt, double tol) {
  if (series.size() < 2)
    throw ConfigError("marginal check needs at least two fields");
  const GridSpec& gr = series[0].grid;
  for (const auto& f : series)
    if (!f.grid.same_as(gr))
      throw ConfigError("marginal check needs a common grid");
  const double spacing = series[1].time - series[0].time;
  if (!(spacing > 0)) throw ConfigError("marginal series must move forward");
  const double m_real = spacing / solver_dt;
  const int m = int(std::lround(m_real));
  if (std::fabs(m_real - m) > 1e-6)
    throw ConfigError("series spacing must be a multiple of solver dt");

  const auto A_g = assemble_conductance_operator(p, gr.n_g, gr.g_max);
  Eigen::SparseMatrix<double> id(gr.n_g, gr.n_g);
  id.setIdentity();
  Eigen::SparseMatrix<double> system = id - solver_dt * A_g;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(system);
  if (lu.info() != Eigen::Success)
    throw NumericalError("conductance operator factorization failed");

  const auto first = series[0].conductance_marginal();
  Eigen::VectorXd q =
      Eigen::Map<const Eigen::VectorXd>(first.data(), gr.n_g);
  double worst = 0.0;
  for (std::size_t k = 1; k < series.size(); ++k) {
    const double gap = series[k].time - series[k - 1].time;
    if (std::fabs(gap - spacing) > 1e-9)
      throw ConfigError("marginal series must be uniformly spaced");
    for (int s = 0; s < m; ++s) q = lu.solve(q);
    const auto ref = series[k].conductance_marginal();
    double tv = 0.0;
    for (int j = 0; j < gr.n_g; ++j) tv += std::fabs(q[j] - ref[std::size_t(j)]);
    worst = std::max(worst, 0.5 * tv * gr.dg());
  }
  CheckResult res;
  res.name = "marginal_matches_reflected_ou";
  res.measured = worst;
  res.tol = tol;
  res.pass = worst <= tol;
  res.provenance = "2-D solve marginalized vs independent 1-D solve";
  return res;
}

double CrossValidateBudget::tol(std::uint64_t n_particles,
                                const GridSpec& grid) const {
  const double blocks =
      double(grid.n_v / agg_v) * double(grid.n_g / agg_g);
  return c1 * std::sqrt(blocks / double(n_particles)) +
         c2 * (grid.dv() + grid.dg());
}

std::vector<CheckResult> cross_validate(const ModelParams& p,
                                        const FpOperator& op,
                                        const InitialCondition& mu0,
                                        const std::vector<double>& times,
                                        std::uint64_t n_particles,
                                        double particle_dt, double pde_dt,
                                        std::uint64_t seed, int threads,
                                        const CrossValidateBudget& budget) {
  if (times.empty()) throw ConfigError("cross validation needs times");
  const GridSpec& gr = op.grid();
  if (budget.agg_v < 1 || budget.agg_g < 1 || gr.n_v % budget.agg_v ||
      gr.n_g % budget.agg_g)
    throw ConfigError("aggregation factors must divide the grid");

  SimConfig sim;
  sim.dt = particle_dt;
  sim.horizon = times.back();
  sim.n_particles = n_particles;
  sim.seed = seed;
  sim.threads = threads;
  sim.snapshot_times = times;
  sim.record_spikes = false;
  const auto particle_series = ensemble_histogram_series(p, sim, mu0, gr);

  DensityField f = density_from_initial(mu0, gr);
  TransientStepper stepper(op, pde_dt, Scheme::implicit);
  const double tol = budget.tol(n_particles, gr);

  std::vector<CheckResult> out;
  double t_prev = 0.0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double span = times[k] - t_prev;
    const int steps = int(std::lround(span / pde_dt));
    if (std::fabs(span - steps * pde_dt) > 1e-9)
      throw ConfigError("cross validation times must be multiples of pde dt");
    stepper.advance(f, steps);
    t_prev = times[k];

    const auto pm = aggregate_blocks(particle_series[k], budget.agg_v,
                                     budget.agg_g);
    const auto qm = aggregate_blocks(f, budget.agg_v, budget.agg_g);
    double l1 = 0.0;
    for (std::size_t c = 0; c < pm.size(); ++c)
      l1 += std::fabs(pm[c] - qm[c]);
    l1 += std::fabs(particle_series[k].overflow_mass - f.overflow_mass);
    CheckResult res;
    res.name = "cross_solver_tv_t=" + fmt_time(times[k]);
    res.measured = 0.5 * l1;
    res.tol = tol;
    res.pass = res.measured <= tol;
    std::ostringstream os;
    os << "n=" << n_particles << ", blocks=" << (gr.n_v / budget.agg_v) << "x"
       << (gr.n_g / budget.agg_g);
    res.provenance = os.str();
    out.push_back(std::move(res));
  }
  return out;
}

CheckResult check_firing_rate(const FpOperator& op, const DensityField& steady,
                              const std::vector<SpikeRecord>& spikes,
                              std::uint64_t n_particles, double t_lo,
                              double t_hi, double tol) {
  const double pde = op.firing_rate(steady);
  const double emp = firing_rate(spikes, n_particles, t_lo, t_hi);
  CheckResult res;
  res.name = "firing_rate_match";
  res.tol = tol;
  res.provenance = "stationary threshold flux vs empirical spike rate";
  if (pde > 0) {
    res.measured = std::fabs(emp - pde) / pde;
  } else {
    res.measured = emp == 0.0 ? 0.0 : 1e300;
  }
  res.pass = res.measured <= tol;
  return res;
}

}  // namespace vcn
