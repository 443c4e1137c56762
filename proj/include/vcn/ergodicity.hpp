#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vcn/fpsolver.hpp"
#include "vcn/grid.hpp"
#include "vcn/model.hpp"
#include "vcn/particle.hpp"

namespace vcn {

struct WeightedTvConfig {
  double beta = 1.0;   // weight coefficient of the conductance penalty
  double g_ref = 1.0;  // center of W(g) = (g - g_ref)^2, the input mean
  GridSpec grid{};     // when n_v > 0, compared fields must live on it

  void validate() const;  // beta > 0
};

// Integral of (1 + beta W(g)) |h1 - h2| over cells, overflow bins
// included with W taken at their mass-weighted common centroid.  Full
// L1 convention: disjoint unit masses are 2 apart at beta = 0.  The
// function itself accepts beta = 0 (plain L1); configs require > 0.
double weighted_tv(const DensityField& h1, const DensityField& h2,
                   const WeightedTvConfig& cfg);

struct LyapunovConfig {
  double horizon = 4.0;
  int n_times = 20;               // observation times horizon/n..horizon
  std::uint64_t n_samples = 10000;
  double dt = 0.05;               // reflection substep; the OU part is exact
  double slack = 4.0;             // tolerated standard errors above the bound
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
};

struct LyapunovCurve {
  double v0 = 0.0, g0 = 0.0;  // probe point (the weight only sees g)
  std::vector<double> f_hat;  // empirical E[(G_t - g_in)^2]
  std::vector<double> se;     // standard errors
  std::vector<double> bound;  // e^{-2t} f(0) + a (1 - e^{-2t})
  double worst_margin = 0.0;  // max over times of (f_hat - bound) / se
  bool ok = true;
};

struct LyapunovReport {
  std::vector<double> times;
  std::vector<LyapunovCurve> curves;
  double T = 0.0;       // reference horizon for the one-step summary
  double alpha1 = 0.0;  // e^{-2T}
  double alpha2 = 0.0;  // a (1 - e^{-2T})
  bool all_ok = true;
  std::string violation;  // first violating point/time, empty when ok
};

// Monte Carlo check of the drift inequality for W(g) = (g - g_in)^2.
// The weight ignores v, so only the conductance is simulated; the
// one-step OU update is exact in distribution and reflection can only
// lower W, so the continuous-time bound applies at every dt.
LyapunovReport lyapunov_probe(const ModelParams& p, const LyapunovConfig& cfg,
                              const std::vector<std::pair<double, double>>& points,
                              double T_summary);

// Probe points spanning the sub-level box [V_R, V_F) x [0, sqrt(R)+1]:
// n_v voltages from the reset side, n_g conductances from 0 to the cap
// inclusive.
std::vector<std::pair<double, double>> lyapunov_probe_points(
    const ModelParams& p, double R, int n_v, int n_g);

// Probe set for the minorization run.  The conductance pitch is fixed
// by the R = 1 box, and larger R extends the same ladder upward, so
// the point set grows monotonically with R.  With shared-point noise
// reuse this makes the estimated floor provably non-increasing in R.
std::vector<std::pair<double, double>> minorization_probe_points(
    const ModelParams& p, double R, int n_v, int n_g_base);

struct MinorizationConfig {
  std::uint64_t n_per_point = 10000;  // <= 65536 (stream layout)
  double dt = 1e-2;
  std::uint64_t seed = 1;
  int threads = 1;
  int points_v = 8, points_g = 8;  // base probe grid (exact at R = 1)
  int hist_nv = 24, hist_ng = 24;  // arrival histogram resolution
  double hist_gmax = 8.0;
  int block_v = 4, block_g = 4;    // target-set size in histogram cells
  double override_T = 0.0;         // > 0 replaces harris.T (sensitivity runs)

  void validate() const;
};

struct MinorizationReport {
  HarrisConstants constants;
  double T = 0.0;  // time actually simulated
  std::vector<std::pair<double, double>> points;
  GridSpec hist;
  std::vector<std::vector<std::uint32_t>> counts;  // [point][hist cell]
  std::uint64_t n_per_point = 0;

  // Chosen target block (cell range [i0, i0+nv) x [j0, j0+ng)) and the
  // uniform floor: eta_hat = block area * min density over points and
  // block cells = block_nv * block_ng * min_count / n_per_point.
  int block_i0 = 0, block_j0 = 0, block_nv = 0, block_ng = 0;
  std::uint64_t min_count = 0;
  double eta_hat = 0.0;
  double eta_lcb = 0.0;  // one-sided 95% lower confidence bound
  int worst_point = -1;  // probe point attaining the minimum
  bool pass = false;     // eta_lcb > 0

  enum class FailureKind { none, insufficient_data, structural };
  FailureKind failure = FailureKind::none;
};

// Simulates n_per_point particles from every probe point for time T,
// histograms the arrival states on a common grid, and reads off a
// uniform transition-density floor over the best contiguous block.
// Streams are keyed by probe-point location, so points shared between
// runs (e.g. different R) replay identical trajectories.
MinorizationReport minorization_probe(const ModelParams& p,
                                      const HarrisConstants& harris,
                                      const MinorizationConfig& cfg);

// One-sided lower confidence bound for a binomial proportion at
// confidence level z (Wilson score); zero iff successes == 0.
double wilson_lower_bound(std::uint64_t successes, std::uint64_t n, double z);

struct RateFitReport {
  enum class Status { ok, already_stationary, inconclusive };
  Status status = Status::inconclusive;
  std::vector<double> times;
  std::vector<double> dist;   // weighted TV to the steady state
  std::size_t fit_begin = 0;  // first index inside the fit window
  double lambda = 0.0;        // fitted decay rate, > 0 when ok
  double C = 0.0;             // fitted prefactor
  double r2 = 0.0;
  double lambda_lo = 0.0, lambda_hi = 0.0;  // 95% residual bootstrap
  double theta_hat = 0.0;                   // e^{-lambda T}
  std::string note;
};

// Least squares of log dist against time on [t_begin, end].  Fits with
// fewer than 5 points or r2 < 0.9 come back inconclusive; series that
// never rise above `floor` come back already_stationary.
RateFitReport fit_decay_rate(const std::vector<double>& times,
                             const std::vector<double>& dist, double t_begin,
                             double T_for_theta, double floor,
                             std::uint64_t seed);

enum class StudyMode { pde, particle };

struct StudyConfig {
  StudyMode mode = StudyMode::pde;
  double horizon = 10.0;
  double snapshot_dt = 0.25;  // must be a multiple of dt
  double dt = 1e-2;
  WeightedTvConfig tv{};
  double transient_fraction = 0.2;  // window dropped before the fit
  double T_for_theta = 0.0;
  double stationary_floor = 1e-8;
  std::uint64_t n_particles = 100000;  // particle mode only
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
};

// Evolves each initial measure, records the weighted TV distance to
// the steady state at the snapshot times, and fits the decay rate.
std::vector<RateFitReport> convergence_study(
    const ModelParams& p, const FpOperator& op, const DensityField& steady,
    const std::vector<InitialCondition>& initial_measures,
    const StudyConfig& cfg);

}  // namespace vcn
