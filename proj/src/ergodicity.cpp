#include "vcn/ergodicity.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>
#include <thread>

#include "vcn/errors.hpp"

namespace vcn {

namespace {

// One task per index, claimed dynamically.  Every task owns its output
// slot, so scheduling cannot influence results.
template <class Fn>
void for_each_index(std::size_t n, int threads, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto guarded = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) guarded(i);
  } else {
    std::atomic<std::size_t> next{0};
    auto loop = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        guarded(i);
      }
    };
    std::vector<std::thread> pool;
    const int k = int(std::min<std::size_t>(std::size_t(threads), n));
    pool.reserve(std::size_t(k));
    for (int t = 0; t < k; ++t) pool.emplace_back(loop);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void check_probe_point(const ModelParams& p, double v, double g) {
  if (!(v >= p.V_R) || !(v < p.V_F) || !(g >= 0))
    throw ConfigError("probe point outside [V_R, V_F) x [0, inf)");
}

std::uint64_t probe_stream_id(double v, double g, std::uint64_t sample) {
  return (point_stream_hash(v, g) << 16) | (sample & 0xffffu);
}

double weight(double g, double g_ref) { return (g - g_ref) * (g - g_ref); }

struct LinFit {
  double slope = 0, intercept = 0, r2 = 0;
};

LinFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / double(n), my = sy / double(n);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ssr = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y[i] - (f.intercept + f.slope * x[i]);
    ssr += e * e;
  }
  f.r2 = syy > 0 ? 1.0 - ssr / syy : 0.0;
  return f;
}

}  // namespace

void WeightedTvConfig::validate() const {
  if (!(beta > 0) || !std::isfinite(beta))
    throw ConfigError("weighted TV beta must be > 0");
}

double weighted_tv(const DensityField& h1, const DensityField& h2,
                   const WeightedTvConfig& cfg) {
  if (!(cfg.beta >= 0) || !std::isfinite(cfg.beta))
    throw ConfigError("weighted TV beta must be >= 0");
  if (!h1.grid.same_as(h2.grid))
    throw ConfigError("weighted TV needs identical grids");
  if (cfg.grid.n_v > 0 && !h1.grid.same_as(cfg.grid))
    throw ConfigError("fields do not live on the configured grid");
  if (std::fabs(h1.mass() - 1.0) > 1e-6 || std::fabs(h2.mass() - 1.0) > 1e-6)
    throw ConfigError("weighted TV compares probability fields (mass 1)");

  const GridSpec& gr = h1.grid;
  const double area = gr.dv() * gr.dg();
  double total = 0.0;
  for (int j = 0; j < gr.n_g; ++j) {
    const double w = 1.0 + cfg.beta * weight(gr.g_center(j), cfg.g_ref);
    double row = 0.0;
    for (int i = 0; i < gr.n_v; ++i) {
      const std::size_t c = std::size_t(gr.cell(i, j));
      row += std::fabs(h1.p[c] - h2.p[c]);
    }
    total += w * row;
  }
  total *= area;
  const double m1 = h1.overflow_mass, m2 = h2.overflow_mass;
  if (m1 > 0 || m2 > 0) {
    // A single representative conductance keeps the term symmetric.
    const double c = (m1 * h1.overflow_g_centroid + m2 * h2.overflow_g_centroid) /
                     (m1 + m2);
    total += std::fabs(m1 - m2) * (1.0 + cfg.beta * weight(c, cfg.g_ref));
  }
  return total;
}

void LyapunovConfig::validate() const {
  if (!(horizon > 0)) throw ConfigError("lyapunov horizon must be > 0");
  if (n_times < 1) throw ConfigError("lyapunov needs n_times >= 1");
  if (n_samples < 2 || n_samples > 65536)
    throw ConfigError("lyapunov n_samples must be in [2, 65536]");
  if (!(dt > 0)) throw ConfigError("lyapunov dt must be > 0");
  if (!(slack >= 0)) throw ConfigError("lyapunov slack must be >= 0");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

LyapunovReport lyapunov_probe(const ModelParams& p, const LyapunovConfig& cfg,
                              const std::vector<std::pair<double, double>>& points,
                              double T_summary) {
  p.validate();
  cfg.validate();
  if (points.empty()) throw ConfigError("lyapunov probe needs points");
  for (const auto& [v, g] : points) check_probe_point(p, v, g);

  LyapunovReport rep;
  const int nt = cfg.n_times;
  rep.times.resize(std::size_t(nt));
  for (int k = 0; k < nt; ++k)
    rep.times[std::size_t(k)] = cfg.horizon * double(k + 1) / double(nt);
  rep.T = T_summary;
  rep.alpha1 = std::exp(-2.0 * T_summary);
  rep.alpha2 = p.a * -std::expm1(-2.0 * T_summary);
  rep.curves.resize(points.size());

  for_each_index(points.size(), cfg.threads, [&](std::size_t pi) {
    const auto [v0, g0] = points[pi];
    LyapunovCurve curve;
    curve.v0 = v0;
    curve.g0 = g0;
    std::vector<double> sum(std::size_t(nt), 0.0), sumsq(std::size_t(nt), 0.0);
    const double step = cfg.horizon / double(nt);
    const int substeps = std::max(1, int(std::ceil(step / cfg.dt - 1e-9)));
    const double h = step / double(substeps);
    for (std::uint64_t s = 0; s < cfg.n_samples; ++s) {
      RandomStream rng(cfg.seed, probe_stream_id(v0, g0, s));
      double g = g0;
      for (int k = 0; k < nt; ++k) {
        for (int u = 0; u < substeps; ++u)
          g = step_conductance(p, g, h, rng.normal()).g;
        const double w = weight(g, p.g_in);
        sum[std::size_t(k)] += w;
        sumsq[std::size_t(k)] += w * w;
      }
    }
    const double n = double(cfg.n_samples);
    const double f0 = weight(g0, p.g_in);
    curve.f_hat.resize(std::size_t(nt));
    curve.se.resize(std::size_t(nt));
    curve.bound.resize(std::size_t(nt));
    curve.worst_margin = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < nt; ++k) {
      const std::size_t kk = std::size_t(k);
      const double mean = sum[kk] / n;
      const double var =
          std::max(0.0, (sumsq[kk] - n * mean * mean) / (n - 1.0));
      curve.f_hat[kk] = mean;
      curve.se[kk] = std::sqrt(var / n);
      const double t = rep.times[kk];
      curve.bound[kk] = std::exp(-2.0 * t) * f0 + p.a * -std::expm1(-2.0 * t);
      const double margin = curve.se[kk] > 0
                                ? (mean - curve.bound[kk]) / curve.se[kk]
                                : (mean <= curve.bound[kk] ? 0.0 : 1e300);
      curve.worst_margin = std::max(curve.worst_margin, margin);
    }
    curve.ok = curve.worst_margin <= cfg.slack;
    rep.curves[pi] = std::move(curve);
  });

  for (std::size_t pi = 0; pi < rep.curves.size(); ++pi) {
    if (!rep.curves[pi].ok && rep.violation.empty()) {
      std::ostringstream os;
      os << "drift bound violated at point (" << rep.curves[pi].v0 << ", "
         << rep.curves[pi].g0 << "), margin " << rep.curves[pi].worst_margin
         << " SE";
      rep.violation = os.str();
    }
    rep.all_ok = rep.all_ok && rep.curves[pi].ok;
  }
  return rep;
}

std::vector<std::pair<double, double>> lyapunov_probe_points(
    const ModelParams& p, double R, int n_v, int n_g) {
  if (n_v < 1 || n_g < 2) throw ConfigError("probe grid needs n_v>=1, n_g>=2");
  if (!(R >= 1)) throw ConfigError("probe level R must be >= 1");
  const double M = std::sqrt(R) + 1.0;
  std::vector<std::pair<double, double>> pts;
  pts.reserve(std::size_t(n_v) * std::size_t(n_g));
  for (int k = 0; k < n_v; ++k) {
    const double v = p.V_R + (p.V_F - p.V_R) * double(k) / double(n_v);
    for (int m = 0; m < n_g; ++m)
      pts.emplace_back(v, M * double(m) / double(n_g - 1));
  }
  return pts;
}

std::vector<std::pair<double, double>> minorization_probe_points(
    const ModelParams& p, double R, int n_v, int n_g_base) {
  if (n_v < 1 || n_g_base < 2)
    throw ConfigError("probe grid needs n_v>=1, n_g>=2");
  if (!(R >= 1)) throw ConfigError("probe level R must be >= 1");
  const double M = std::sqrt(R) + 1.0;
  const double base_cap = 2.0;  // conductance cap of the R = 1 box
  const double pitch = base_cap / double(n_g_base - 1);
  std::vector<double> levels;
  for (int m = 0; m * pitch <= M + 1e-12; ++m) levels.push_back(m * pitch);
  if (levels.back() < M - 1e-9) levels.push_back(M);
  std::vector<std::pair<double, double>> pts;
  pts.reserve(std::size_t(n_v) * levels.size());
  for (int k = 0; k < n_v; ++k) {
    const double v = p.V_R + (p.V_F - p.V_R) * double(k) / double(n_v);
    for (double g : levels) pts.emplace_back(v, g);
  }
  return pts;
}

void MinorizationConfig::validate() const {
  if (n_per_point < 1 || n_per_point > 65536)
    throw ConfigError("n_per_point must be in [1, 65536]");
  if (!(dt > 0)) throw ConfigError("minorization dt must be > 0");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (points_v < 1 || points_g < 2)
    throw ConfigError("probe grid needs points_v>=1, points_g>=2");
  if (hist_nv < 8 || hist_ng < 8)
    throw ConfigError("arrival histogram needs >= 8 cells per axis");
  if (block_v < 1 || block_g < 1 || block_v > hist_nv || block_g > hist_ng)
    throw ConfigError("target block must fit inside the histogram");
  if (!(override_T >= 0)) throw ConfigError("override_T must be >= 0");
}

double wilson_lower_bound(std::uint64_t successes, std::uint64_t n, double z) {
  if (n == 0) throw ConfigError("wilson bound needs n >= 1");
  const double phat = double(successes) / double(n);
  const double nn = double(n);
  const double denom = 1.0 + z * z / nn;
  const double center = phat + z * z / (2.0 * nn);
  const double rad =
      z * std::sqrt(phat * (1.0 - phat) / nn + z * z / (4.0 * nn * nn));
  return std::max(0.0, (center - rad) / denom);
}

MinorizationReport minorization_probe(const ModelParams& p,
                                      const HarrisConstants& harris,
                                      const MinorizationConfig& cfg) {
  p.validate();
  cfg.validate();
  if (!(harris.J_star > 0))
    throw ConfigError("minorization probe needs validated constants (J* > 0)");

  MinorizationReport rep;
  rep.constants = harris;
  rep.T = cfg.override_T > 0 ? cfg.override_T : harris.T;
  rep.points = minorization_probe_points(p, harris.R, cfg.points_v, cfg.points_g);
  rep.hist = GridSpec::make(p, cfg.hist_nv, cfg.hist_ng, cfg.hist_gmax);
  rep.n_per_point = cfg.n_per_point;
  for (const auto& [v, g] : rep.points) check_probe_point(p, v, g);

  const std::size_t n_cells = std::size_t(rep.hist.size());
  rep.counts.assign(rep.points.size(),
                    std::vector<std::uint32_t>(n_cells, 0));

  SimConfig sim;
  sim.dt = cfg.dt;
  sim.horizon = rep.T;
  sim.seed = cfg.seed;
  sim.record_spikes = false;

  for_each_index(rep.points.size(), cfg.threads, [&](std::size_t pi) {
    const auto [v0, g0] = rep.points[pi];
    auto& counts = rep.counts[pi];
    for (std::uint64_t s = 0; s < cfg.n_per_point; ++s) {
      RandomStream rng(cfg.seed, probe_stream_id(v0, g0, s));
      ParticleState st;
      st.v = v0;
      st.g = g0;
      const ParticleState fin = simulate_particle(p, sim, st, s, rng).final_state;
      const int c = rep.hist.locate(fin.v, fin.g);
      if (c >= 0) ++counts[std::size_t(c)];
    }
  });

  // Pointwise floor over probe points, then the block position whose
  // worst cell is best.
  std::vector<std::uint32_t> cell_min(n_cells, 0);
  for (std::size_t c = 0; c < n_cells; ++c) {
    std::uint32_t m = rep.counts[0][c];
    for (std::size_t pi = 1; pi < rep.points.size(); ++pi)
      m = std::min(m, rep.counts[pi][c]);
    cell_min[c] = m;
  }
  std::uint32_t best = 0;
  int best_i = 0, best_j = 0;
  for (int j0 = 0; j0 + cfg.block_g <= rep.hist.n_g; ++j0) {
    for (int i0 = 0; i0 + cfg.block_v <= rep.hist.n_v; ++i0) {
      std::uint32_t worst = std::numeric_limits<std::uint32_t>::max();
      for (int j = j0; j < j0 + cfg.block_g; ++j)
        for (int i = i0; i < i0 + cfg.block_v; ++i)
          worst = std::min(worst, cell_min[std::size_t(rep.hist.cell(i, j))]);
      if (worst > best) {
        best = worst;
        best_i = i0;
        best_j = j0;
      }
    }
  }
  rep.block_i0 = best_i;
  rep.block_j0 = best_j;
  rep.block_nv = cfg.block_v;
  rep.block_ng = cfg.block_g;
  rep.min_count = best;

  // Locate the binding cell and probe point for diagnostics.
  int argmin_cell = rep.hist.cell(best_i, best_j);
  for (int j = best_j; j < best_j + cfg.block_g; ++j)
    for (int i = best_i; i < best_i + cfg.block_v; ++i)
      if (cell_min[std::size_t(rep.hist.cell(i, j))] == best) {
        argmin_cell = rep.hist.cell(i, j);
        j = rep.hist.n_g;  // break both loops
        break;
      }
  for (std::size_t pi = 0; pi < rep.points.size(); ++pi)
    if (rep.counts[pi][std::size_t(argmin_cell)] == best) {
      rep.worst_point = int(pi);
      break;
    }

  const double cells = double(cfg.block_v) * double(cfg.block_g);
  rep.eta_hat = cells * double(best) / double(cfg.n_per_point);
  rep.eta_lcb =
      cells * wilson_lower_bound(best, cfg.n_per_point, 1.6448536269514722);
  rep.pass = rep.eta_lcb > 0;
  if (rep.pass) {
    rep.failure = MinorizationReport::FailureKind::none;
  } else {
    double pooled = 0.0;
    for (std::size_t pi = 0; pi < rep.points.size(); ++pi)
      pooled += double(rep.counts[pi][std::size_t(argmin_cell)]);
    pooled /= double(rep.points.size());
    // Plenty of arrivals from typical points but none from the worst
    // one indicates a reachability gap, not a sample-size problem.
    rep.failure = pooled >= 25.0
                      ? MinorizationReport::FailureKind::structural
                      : MinorizationReport::FailureKind::insufficient_data;
  }
  return rep;
}

void StudyConfig::validate() const {
  tv.validate();
  if (!(horizon > 0)) throw ConfigError("study horizon must be > 0");
  if (!(snapshot_dt > 0) || snapshot_dt > horizon)
    throw ConfigError("study snapshot_dt must be in (0, horizon]");
  if (!(dt > 0)) throw ConfigError("study dt must be > 0");
  const double m = snapshot_dt / dt;
  if (std::fabs(m - std::round(m)) > 1e-9)
    throw ConfigError("snapshot_dt must be a multiple of dt");
  const double k = horizon / snapshot_dt;
  if (std::fabs(k - std::round(k)) > 1e-9)
    throw ConfigError("horizon must be a multiple of snapshot_dt");
  if (!(transient_fraction >= 0) || transient_fraction >= 1)
    throw ConfigError("transient_fraction must be in [0, 1)");
  if (mode == StudyMode::particle && n_particles == 0)
    throw ConfigError("particle study needs n_particles >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

RateFitReport fit_decay_rate(const std::vector<double>& times,
                             const std::vector<double>& dist, double t_begin,
                             double T_for_theta, double floor,
                             std::uint64_t seed) {
  if (times.size() != dist.size() || times.empty())
    throw ConfigError("rate fit needs matching, non-empty series");
  RateFitReport rep;
  rep.times = times;
  rep.dist = dist;
  rep.fit_begin = times.size();
  for (std::size_t i = 0; i < times.size(); ++i)
    if (times[i] >= t_begin - 1e-12) {
      rep.fit_begin = i;
      break;
    }

  double peak = 0.0;
  for (double d : dist) peak = std::max(peak, d);
  if (peak <= floor) {
    rep.status = RateFitReport::Status::already_stationary;
    rep.note = "distance never rose above the stationarity floor";
    return rep;
  }

  std::vector<double> x, y;
  for (std::size_t i = rep.fit_begin; i < times.size(); ++i) {
    if (!(dist[i] > 0)) {
      rep.status = RateFitReport::Status::inconclusive;
      rep.note = "non-positive distance inside the fit window";
      return rep;
    }
    x.push_back(times[i]);
    y.push_back(std::log(dist[i]));
  }
  if (x.size() < 5) {
    rep.status = RateFitReport::Status::inconclusive;
    rep.note = "fewer than 5 post-transient points";
    return rep;
  }

  const LinFit fit = least_squares(x, y);
  rep.lambda = -fit.slope;
  rep.C = std::exp(fit.intercept);
  rep.r2 = fit.r2;
  rep.theta_hat = T_for_theta > 0 ? std::exp(-rep.lambda * T_for_theta) : 0.0;

  // Residual bootstrap for the rate's confidence interval.
  const std::size_t n = x.size();
  std::vector<double> fitted(n), resid(n);
  for (std::size_t i = 0; i < n; ++i) {
    fitted[i] = fit.intercept + fit.slope * x[i];
    resid[i] = y[i] - fitted[i];
  }
  constexpr int kBoot = 400;
  std::vector<double> lambdas;
  lambdas.reserve(kBoot);
  RandomStream rng(seed, 0x626f6f74u);  // dedicated bootstrap stream
  std::vector<double> ystar(n);
  for (int b = 0; b < kBoot; ++b) {
    for (std::size_t i = 0; i < n; ++i)
      ystar[i] = fitted[i] + resid[std::size_t(rng.uniform() * double(n))];
    lambdas.push_back(-least_squares(x, ystar).slope);
  }
  std::sort(lambdas.begin(), lambdas.end());
  rep.lambda_lo = lambdas[std::size_t(std::llround(0.025 * (kBoot - 1)))];
  rep.lambda_hi = lambdas[std::size_t(std::llround(0.975 * (kBoot - 1)))];

  if (rep.r2 < 0.9) {
    rep.status = RateFitReport::Status::inconclusive;
    rep.note = "goodness of fit below 0.9";
  } else if (!(rep.lambda > 0)) {
    rep.status = RateFitReport::Status::inconclusive;
    rep.note = "fitted rate not positive";
  } else {
    rep.status = RateFitReport::Status::ok;
  }
  return rep;
}

std::vector<RateFitReport> convergence_study(
    const ModelParams& p, const FpOperator& op, const DensityField& steady,
    const std::vector<InitialCondition>& initial_measures,
    const StudyConfig& cfg) {
  p.validate();
  cfg.validate();
  if (initial_measures.empty())
    throw ConfigError("convergence study needs initial measures");
  if (!steady.grid.same_as(op.grid()))
    throw ConfigError("steady state grid does not match the operator");

  const int n_snaps = int(std::lround(cfg.horizon / cfg.snapshot_dt));
  const int steps_per = int(std::lround(cfg.snapshot_dt / cfg.dt));
  std::vector<double> times(std::size_t(n_snaps) + 1);
  for (int k = 0; k <= n_snaps; ++k)
    times[std::size_t(k)] = double(k) * cfg.snapshot_dt;

  std::vector<RateFitReport> reports;
  for (const auto& init : initial_measures) {
    std::vector<double> dist(times.size(), 0.0);
    if (cfg.mode == StudyMode::pde) {
      DensityField f = density_from_initial(init, op.grid());
      TransientStepper stepper(op, cfg.dt, Scheme::implicit);
      dist[0] = weighted_tv(f, steady, cfg.tv);
      for (int k = 1; k <= n_snaps; ++k) {
        stepper.advance(f, steps_per);
        dist[std::size_t(k)] = weighted_tv(f, steady, cfg.tv);
      }
    } else {
      SimConfig sim;
      sim.dt = cfg.dt;
      sim.horizon = cfg.horizon;
      sim.n_particles = cfg.n_particles;
      sim.seed = cfg.seed;
      sim.threads = cfg.threads;
      sim.snapshot_times = times;
      sim.record_spikes = false;
      const auto series = ensemble_histogram_series(p, sim, init, op.grid());
      for (std::size_t k = 0; k < series.size(); ++k)
        dist[k] = weighted_tv(series[k], steady, cfg.tv);
    }
    reports.push_back(fit_decay_rate(times, dist,
                                     cfg.transient_fraction * cfg.horizon,
                                     cfg.T_for_theta, cfg.stationary_floor,
                                     cfg.seed));
  }
  return reports;
}

}  // namespace vcn
