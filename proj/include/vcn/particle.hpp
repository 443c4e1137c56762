#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "vcn/grid.hpp"
#include "vcn/model.hpp"
#include "vcn/rng.hpp"

namespace vcn {

struct ParticleState {
  double v = 0.0;
  double g = 0.0;
  double local_time = 0.0;     // accumulated reflection at g = 0
  double g_peak = 0.0;         // running max of g; bounds the spike pace
  std::uint64_t spikes = 0;    // threshold crossings so far
};

struct SpikeRecord {
  std::uint64_t particle = 0;
  double time = 0.0;
  double g = 0.0;  // conductance at the crossing
};

// Initial condition choices: a deterministic point, a uniform box, or
// an explicit list of samples assigned round-robin by particle id.
struct PointInit {
  double v = 0.0, g = 0.0;
};
struct BoxInit {
  double v_lo = 0.0, v_hi = 0.0, g_lo = 0.0, g_hi = 0.0;
};
struct SampleInit {
  std::vector<std::pair<double, double>> points;  // (v, g)
};
using InitialCondition = std::variant<PointInit, BoxInit, SampleInit>;

void validate_initial(const InitialCondition& init, const ModelParams& p);
ParticleState draw_initial(const InitialCondition& init,
                           std::uint64_t particle_id, RandomStream& rng);

struct SimConfig {
  double dt = 1e-2;
  double horizon = 10.0;
  std::uint64_t n_particles = 1;
  std::uint64_t seed = 1;
  int threads = 1;
  std::vector<double> snapshot_times;  // strictly increasing, in [0, horizon]
  bool zero_noise = false;  // test mode: conductance noise suppressed
  bool record_spikes = true;

  void validate() const;  // throws ConfigError
};

// Exact distributional update of the reflected OU conductance over dt,
// given a standard normal draw: mean reversion toward g_in at unit
// rate, variance a (1 - e^{-2 dt}), reflection at zero by mirroring.
struct ConductanceStep {
  double g = 0.0;
  double local_time_increment = 0.0;
};
ConductanceStep step_conductance(const ModelParams& p, double g, double dt,
                                 double noise);

// Exact integration of dv/dt = J(v, g) over dt with g frozen.  The
// flow relaxes exponentially toward v_inf(g) at rate g_L + g.  When
// the threshold is reached, `offset` is the exact hitting time within
// the step and v is reported at the threshold; the caller resets.
struct VoltageStep {
  double v = 0.0;
  bool crossed = false;
  double offset = 0.0;
};
VoltageStep step_voltage(const ModelParams& p, double v, double g, double dt);

struct ParticleRun {
  std::vector<ParticleState> snapshots;  // one per requested snapshot time
  ParticleState final_state;
  std::vector<SpikeRecord> spikes;
  std::uint64_t steps = 0;
};

// Drives one particle with the stream keyed by (cfg.seed, particle_id).
ParticleRun simulate_particle(const ModelParams& p, const SimConfig& cfg,
                              ParticleState init, std::uint64_t particle_id);
// Same, but with a caller-owned stream (probe points use location-keyed
// streams so shared points replay identical noise across runs).
ParticleRun simulate_particle(const ModelParams& p, const SimConfig& cfg,
                              ParticleState init, std::uint64_t particle_id,
                              RandomStream& rng);

struct EnsembleResult {
  std::vector<double> snapshot_times;
  // snapshots[k][i]: particle i at snapshot_times[k]
  std::vector<std::vector<ParticleState>> snapshots;
  std::vector<ParticleState> final_states;
  std::vector<SpikeRecord> spikes;  // sorted by particle id, then time
  std::uint64_t total_steps = 0;
};

// Runs cfg.n_particles independent particles.  Results are bitwise
// independent of cfg.threads: particles own counter-based streams and
// are reduced in fixed blocks in particle order.
EnsembleResult simulate_ensemble(const ModelParams& p, const SimConfig& cfg,
                                 const InitialCondition& init);

// Histogram of states on a grid, normalized to a probability density;
// mass with g > g_max goes to the overflow bin.
DensityField empirical_measure(const std::vector<ParticleState>& states,
                               const GridSpec& grid);

// Same ensemble run, but only histogram snapshots are kept.  Counts
// are integers, so the reduction is exact at any thread count.
std::vector<DensityField> ensemble_histogram_series(const ModelParams& p,
                                                    const SimConfig& cfg,
                                                    const InitialCondition& init,
                                                    const GridSpec& grid);

// Spikes per particle per unit time over (t_lo, t_hi].
double firing_rate(const std::vector<SpikeRecord>& spikes,
                   std::uint64_t n_particles, double t_lo, double t_hi);

// The same initial conditions as exact densities on a grid: a point
// mass fills its cell, a box is spread by cell overlap area, samples
// are histogrammed with equal weights.  Mass normalized to one.
DensityField density_from_initial(const InitialCondition& init,
                                  const GridSpec& grid);

}  // namespace vcn
