#include "vcn/particle.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

#include "vcn/errors.hpp"

namespace vcn {

namespace {

// Particles per reduction block.  Results are combined in block order,
// which keeps every floating-point reduction independent of the thread
// count; the block size is therefore part of the output format and
// must not depend on cfg.threads.
constexpr std::uint64_t kBlock = 1024;

constexpr double kTimeEps = 1e-12;

std::uint64_t block_count(std::uint64_t n) { return (n + kBlock - 1) / kBlock; }

// Runs fn(worker, block, begin, end) once per block.  Blocks are
// handed out dynamically; worker indexes a per-thread scratch slot.
template <class Fn>
void run_blocks(std::uint64_t n, int threads, int n_workers, Fn&& fn) {
  const std::uint64_t n_blocks = block_count(n);
  std::vector<std::exception_ptr> errors(n_blocks);
  auto guarded = [&](int worker, std::uint64_t b) {
    try {
      fn(worker, b, b * kBlock, std::min(n, (b + 1) * kBlock));
    } catch (...) {
      errors[b] = std::current_exception();
    }
  };
  if (threads <= 1 || n_blocks <= 1) {
    for (std::uint64_t b = 0; b < n_blocks; ++b) guarded(0, b);
  } else {
    std::atomic<std::uint64_t> next{0};
    auto worker_loop = [&](int worker) {
      for (;;) {
        const std::uint64_t b = next.fetch_add(1);
        if (b >= n_blocks) return;
        guarded(worker, b);
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(std::size_t(n_workers));
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker_loop, t);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct Stepper {
  const ModelParams& p;
  const SimConfig& cfg;
  std::uint64_t id;
  RandomStream& rng;
  ParticleState state;
  ParticleRun* out;

  void step_once(double h, double t0) {
    const double noise = cfg.zero_noise ? 0.0 : rng.normal();
    const ConductanceStep cs = step_conductance(p, state.g, h, noise);
    state.g = cs.g;
    state.local_time += cs.local_time_increment;
    if (state.g > state.g_peak) state.g_peak = state.g;

    // The drift is below V_E * g everywhere, so crossings within h are
    // at least 1 / (V_E * g_peak) apart; more than that many resets in
    // one substep means the integrator lost the trajectory.
    const double cap = std::ceil(h * p.V_E * state.g_peak) + 1.0;
    double crossings = 0.0;
    double rem = h;
    double elapsed = 0.0;
    for (;;) {
      const VoltageStep vs = step_voltage(p, state.v, state.g, rem);
      if (!vs.crossed) {
        state.v = vs.v;
        break;
      }
      elapsed += vs.offset;
      ++state.spikes;
      if (cfg.record_spikes && out)
        out->spikes.push_back({id, t0 + elapsed, state.g});
      state.v = p.V_R;
      rem -= vs.offset;
      if (++crossings > cap)
        throw NumericalError("particle spike guard tripped: more resets per "
                             "step than V_E * g allows");
      if (rem <= 0.0) break;
    }
    if (!std::isfinite(state.v) || !std::isfinite(state.g) ||
        state.v < p.V_R || state.v >= p.V_F || state.g < 0.0)
      throw NumericalError("particle state left [V_R, V_F) x [0, inf)");
  }

  void advance(double from, double to) {
    double remaining = to - from;
    while (remaining > kTimeEps) {
      const double h = std::min(cfg.dt, remaining);
      step_once(h, to - remaining);
      remaining -= h;
      if (out) ++out->steps;
    }
  }
};

ParticleRun run_particle(const ModelParams& p, const SimConfig& cfg,
                         ParticleState init, std::uint64_t id,
                         RandomStream& rng) {
  ParticleRun out;
  out.snapshots.reserve(cfg.snapshot_times.size());
  init.g_peak = std::max(init.g_peak, init.g);
  Stepper st{p, cfg, id, rng, init, &out};

  double t = 0.0;
  std::size_t snap = 0;
  while (snap < cfg.snapshot_times.size() && cfg.snapshot_times[snap] <= 0.0) {
    out.snapshots.push_back(st.state);
    ++snap;
  }
  for (;;) {
    const bool has_snap = snap < cfg.snapshot_times.size();
    const double target = has_snap ? cfg.snapshot_times[snap] : cfg.horizon;
    st.advance(t, target);
    t = target;
    if (!has_snap) break;
    out.snapshots.push_back(st.state);
    ++snap;
  }
  out.final_state = st.state;
  return out;
}

}  // namespace

void SimConfig::validate() const {
  if (!(dt > 0) || !std::isfinite(dt))
    throw ConfigError("particle dt must be positive");
  if (!(horizon >= 0) || !std::isfinite(horizon))
    throw ConfigError("particle horizon must be non-negative");
  if (n_particles == 0) throw ConfigError("n_particles must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  double prev = -1.0;
  for (double s : snapshot_times) {
    if (!(s >= 0) || s > horizon)
      throw ConfigError("snapshot times must lie in [0, horizon]");
    if (!(s > prev)) throw ConfigError("snapshot times must increase strictly");
    prev = s;
  }
}

void validate_initial(const InitialCondition& init, const ModelParams& p) {
  auto check_point = [&](double v, double g) {
    if (!(v >= p.V_R) || !(v < p.V_F) || !(g >= 0))
      throw ConfigError("initial point outside [V_R, V_F) x [0, inf)");
  };
  if (const auto* pt = std::get_if<PointInit>(&init)) {
    check_point(pt->v, pt->g);
  } else if (const auto* box = std::get_if<BoxInit>(&init)) {
    if (!(box->v_lo <= box->v_hi) || !(box->g_lo <= box->g_hi))
      throw ConfigError("initial box has inverted bounds");
    check_point(box->v_lo, box->g_lo);
    if (!(box->v_hi < p.V_F))
      throw ConfigError("initial box outside [V_R, V_F) x [0, inf)");
  } else {
    const auto& samples = std::get<SampleInit>(init).points;
    if (samples.empty()) throw ConfigError("initial sample list is empty");
    for (const auto& [v, g] : samples) check_point(v, g);
  }
}

ParticleState draw_initial(const InitialCondition& init,
                           std::uint64_t particle_id, RandomStream& rng) {
  ParticleState s;
  if (const auto* pt = std::get_if<PointInit>(&init)) {
    s.v = pt->v;
    s.g = pt->g;
  } else if (const auto* box = std::get_if<BoxInit>(&init)) {
    s.v = box->v_lo + rng.uniform() * (box->v_hi - box->v_lo);
    s.g = box->g_lo + rng.uniform() * (box->g_hi - box->g_lo);
  } else {
    const auto& pts = std::get<SampleInit>(init).points;
    const auto& [v, g] = pts[std::size_t(particle_id % pts.size())];
    s.v = v;
    s.g = g;
  }
  return s;
}

ConductanceStep step_conductance(const ModelParams& p, double g, double dt,
                                 double noise) {
  const double decay = std::exp(-dt);
  const double mean = p.g_in + (g - p.g_in) * decay;
  const double sd = std::sqrt(p.a * -std::expm1(-2.0 * dt));
  const double raw = mean + sd * noise;
  ConductanceStep out;
  out.g = std::fabs(raw);
  out.local_time_increment = std::max(0.0, -raw);
  return out;
}

VoltageStep step_voltage(const ModelParams& p, double v, double g, double dt) {
  const double kappa = p.g_L + g;
  const double v_inf = (p.g_L * p.V_R + g * p.V_E) / kappa;
  const double v_next = v_inf + (v - v_inf) * std::exp(-kappa * dt);
  VoltageStep out;
  if (v_next >= p.V_F && v_inf > p.V_F) {
    out.crossed = true;
    out.v = p.V_F;
    out.offset = std::log((v_inf - v) / (v_inf - p.V_F)) / kappa;
    out.offset = std::clamp(out.offset, 0.0, dt);
  } else {
    // v_next >= V_F with v_inf <= V_F can only be roundoff at the
    // asymptote; pin just below threshold.
    out.v = std::min(v_next, std::nextafter(p.V_F, p.V_R));
  }
  return out;
}

ParticleRun simulate_particle(const ModelParams& p, const SimConfig& cfg,
                              ParticleState init, std::uint64_t particle_id) {
  RandomStream rng(cfg.seed, particle_id);
  return run_particle(p, cfg, init, particle_id, rng);
}

ParticleRun simulate_particle(const ModelParams& p, const SimConfig& cfg,
                              ParticleState init, std::uint64_t particle_id,
                              RandomStream& rng) {
  return run_particle(p, cfg, init, particle_id, rng);
}

EnsembleResult simulate_ensemble(const ModelParams& p, const SimConfig& cfg,
                                 const InitialCondition& init) {
  p.validate();
  cfg.validate();
  validate_initial(init, p);

  const std::uint64_t n = cfg.n_particles;
  const std::uint64_t n_blocks = block_count(n);
  EnsembleResult res;
  res.snapshot_times = cfg.snapshot_times;
  res.snapshots.assign(cfg.snapshot_times.size(),
                       std::vector<ParticleState>(std::size_t(n)));
  res.final_states.resize(std::size_t(n));
  std::vector<std::vector<SpikeRecord>> block_spikes(n_blocks);
  std::vector<std::uint64_t> block_steps(n_blocks, 0);

  run_blocks(n, cfg.threads, cfg.threads,
             [&](int, std::uint64_t b, std::uint64_t lo, std::uint64_t hi) {
               for (std::uint64_t i = lo; i < hi; ++i) {
                 RandomStream rng(cfg.seed, i);
                 const ParticleState s0 = draw_initial(init, i, rng);
                 ParticleRun run = run_particle(p, cfg, s0, i, rng);
                 for (std::size_t k = 0; k < res.snapshots.size(); ++k)
                   res.snapshots[k][std::size_t(i)] = run.snapshots[k];
                 res.final_states[std::size_t(i)] = run.final_state;
                 block_steps[b] += run.steps;
                 auto& sp = block_spikes[b];
                 sp.insert(sp.end(), run.spikes.begin(), run.spikes.end());
               }
             });

  for (std::uint64_t b = 0; b < n_blocks; ++b) {
    res.total_steps += block_steps[b];
    res.spikes.insert(res.spikes.end(), block_spikes[b].begin(),
                      block_spikes[b].end());
  }
  return res;
}

DensityField empirical_measure(const std::vector<ParticleState>& states,
                               const GridSpec& grid) {
  if (states.empty()) throw ConfigError("empirical measure of empty ensemble");
  DensityField f = DensityField::zero(grid);
  std::uint64_t overflow = 0;
  double overflow_g = 0.0;
  for (const auto& s : states) {
    const int c = grid.locate(s.v, s.g);
    if (c < 0) {
      ++overflow;
      overflow_g += s.g;
    } else {
      f.p[std::size_t(c)] += 1.0;
    }
  }
  const double n = double(states.size());
  const double cell_mass = 1.0 / (n * grid.dv() * grid.dg());
  for (double& x : f.p) x *= cell_mass;
  f.overflow_mass = double(overflow) / n;
  f.overflow_g_centroid = overflow ? overflow_g / double(overflow) : 0.0;
  return f;
}

std::vector<DensityField> ensemble_histogram_series(const ModelParams& p,
                                                    const SimConfig& cfg,
                                                    const InitialCondition& init,
                                                    const GridSpec& grid) {
  p.validate();
  cfg.validate();
  validate_initial(init, p);
  if (cfg.snapshot_times.empty())
    throw ConfigError("histogram series needs snapshot times");

  const std::uint64_t n = cfg.n_particles;
  const std::uint64_t n_blocks = block_count(n);
  const std::size_t n_times = cfg.snapshot_times.size();
  const std::size_t n_cells = std::size_t(grid.size());
  const int n_workers = std::max(1, cfg.threads);

  // Integer counts per worker (merged by addition, order-free); the
  // floating-point overflow centroids reduce per block in block order.
  std::vector<std::vector<std::uint64_t>> counts(
      std::size_t(n_workers),
      std::vector<std::uint64_t>(n_times * n_cells, 0));
  std::vector<std::vector<std::uint64_t>> over_n(
      std::size_t(n_workers), std::vector<std::uint64_t>(n_times, 0));
  std::vector<std::vector<double>> over_g(n_blocks,
                                          std::vector<double>(n_times, 0.0));

  SimConfig local = cfg;
  local.record_spikes = false;

  run_blocks(n, cfg.threads, n_workers,
             [&](int worker, std::uint64_t b, std::uint64_t lo,
                 std::uint64_t hi) {
               auto& cnt = counts[std::size_t(worker)];
               auto& ovn = over_n[std::size_t(worker)];
               auto& ovg = over_g[b];
               for (std::uint64_t i = lo; i < hi; ++i) {
                 RandomStream rng(local.seed, i);
                 const ParticleState s0 = draw_initial(init, i, rng);
                 ParticleRun run = run_particle(p, local, s0, i, rng);
                 for (std::size_t k = 0; k < n_times; ++k) {
                   const auto& s = run.snapshots[k];
                   const int c = grid.locate(s.v, s.g);
                   if (c < 0) {
                     ++ovn[k];
                     ovg[k] += s.g;
                   } else {
                     ++cnt[k * n_cells + std::size_t(c)];
                   }
                 }
               }
             });

  std::vector<DensityField> series;
  series.reserve(n_times);
  const double cell_mass = 1.0 / (double(n) * grid.dv() * grid.dg());
  for (std::size_t k = 0; k < n_times; ++k) {
    DensityField f = DensityField::zero(grid);
    f.time = cfg.snapshot_times[k];
    std::uint64_t overflow = 0;
    for (int w = 0; w < n_workers; ++w) {
      const auto& cnt = counts[std::size_t(w)];
      for (std::size_t c = 0; c < n_cells; ++c)
        f.p[c] += double(cnt[k * n_cells + c]);
      overflow += over_n[std::size_t(w)][k];
    }
    double overflow_g = 0.0;
    for (std::uint64_t b = 0; b < n_blocks; ++b) overflow_g += over_g[b][k];
    for (double& x : f.p) x *= cell_mass;
    f.overflow_mass = double(overflow) / double(n);
    f.overflow_g_centroid = overflow ? overflow_g / double(overflow) : 0.0;
    series.push_back(std::move(f));
  }
  return series;
}

DensityField density_from_initial(const InitialCondition& init,
                                  const GridSpec& grid) {
  DensityField f = DensityField::zero(grid);
  const double area = grid.dv() * grid.dg();
  if (const auto* pt = std::get_if<PointInit>(&init)) {
    const int c = grid.locate(pt->v, pt->g);
    if (c < 0) throw ConfigError("initial point beyond g_max");
    f.p[std::size_t(c)] = 1.0 / area;
  } else if (const auto* box = std::get_if<BoxInit>(&init)) {
    if (!(box->v_hi > box->v_lo) || !(box->g_hi > box->g_lo))
      throw ConfigError("initial box for a density must have positive area");
    for (int j = 0; j < grid.n_g; ++j) {
      const double g_over =
          std::max(0.0, std::min(box->g_hi, grid.g_face(j + 1)) -
                            std::max(box->g_lo, grid.g_face(j)));
      if (g_over == 0.0) continue;
      for (int i = 0; i < grid.n_v; ++i) {
        const double v_over =
            std::max(0.0, std::min(box->v_hi, grid.v_face(i + 1)) -
                              std::max(box->v_lo, grid.v_face(i)));
        if (v_over > 0.0)
          f.p[std::size_t(grid.cell(i, j))] = v_over * g_over / area;
      }
    }
    f.normalize();
  } else {
    const auto& pts = std::get<SampleInit>(init).points;
    if (pts.empty()) throw ConfigError("initial sample list is empty");
    for (const auto& [v, g] : pts) {
      const int c = grid.locate(v, g);
      if (c < 0) throw ConfigError("initial sample beyond g_max");
      f.p[std::size_t(c)] += 1.0;
    }
    f.scale(1.0 / (double(pts.size()) * area));
  }
  return f;
}

double firing_rate(const std::vector<SpikeRecord>& spikes,
                   std::uint64_t n_particles, double t_lo, double t_hi) {
  if (n_particles == 0) throw ConfigError("firing rate needs n_particles >= 1");
  if (!(t_hi > t_lo)) throw ConfigError("firing rate window must have t_hi > t_lo");
  std::uint64_t count = 0;
  for (const auto& s : spikes)
    if (s.time > t_lo && s.time <= t_hi) ++count;
  return double(count) / (double(n_particles) * (t_hi - t_lo));
}

}  // namespace vcn
