#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vcn/ergodicity.hpp"
#include "vcn/fpsolver.hpp"
#include "vcn/model.hpp"
#include "vcn/particle.hpp"
#include "vcn/validate.hpp"

namespace vcn {

struct PdeRunConfig {
  int n_v = 200, n_g = 200;
  double g_max = 8.0;
  double dt = 1e-2;
  Scheme scheme = Scheme::implicit;
  enum class Mode { steady, transient, both } mode = Mode::steady;
  double horizon = 10.0;
  double snapshot_dt = 0.5;
  double steady_tol = 1e-10;
  int steady_max_iter = 300;
  double steady_dt = 8.0;
};

struct ErgoRunConfig {
  double beta = 1.0;
  double R = 1.0;
  double R_compare = 4.0;
  double v_r = 0.0, g_r = 0.0;  // 0 = module defaults
  double lyapunov_R = 9.0;
  int lyapunov_points_v = 4, lyapunov_points_g = 4;
  std::uint64_t lyapunov_samples = 10000;
  double lyapunov_horizon = 4.0;
  int lyapunov_times = 20;
  MinorizationConfig minor{};
  double study_horizon = 10.0;
  double study_snapshot_dt = 0.25;
  double study_dt = 1e-2;
  StudyMode study_mode = StudyMode::pde;
  double study_floor = 1e-8;
};

struct ValidateRunConfig {
  std::vector<double> times{1.0, 5.0, 20.0};
  std::uint64_t n = 100000;
  double particle_dt = 1e-2;
  double window_lo = 10.0, window_hi = 20.0;
  CrossValidateBudget budget{0.45, 0.45, 10, 10};
  double flux_tol = 1e-12;
  double marginal_tol = 1e-8;
  double rate_tol = 0.05;
  double profile_tol = 0.1;
  double marginal_horizon = 2.0;
  double marginal_snapshot_dt = 0.25;
};

// Everything a CLI run needs, parsed from one sectioned key-value
// file.  Unknown sections or keys are rejected by name; all values are
// validated before any computation starts.
struct RunConfig {
  ModelParams model{};
  SimConfig particle{};  // seed/threads filled from [run] at load time
  InitialCondition initial = PointInit{0.0, 0.0};
  PdeRunConfig pde{};
  ErgoRunConfig ergodicity{};
  ValidateRunConfig validation{};
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  int threads = 1;

  std::uint64_t config_hash = 0;  // FNV-1a of the file bytes

  static RunConfig from_file(const std::string& path);
  static RunConfig from_text(const std::string& text,
                             const std::string& base_dir);
};

// Two-column CSV of (v, g) samples; '#' lines ignored.
std::vector<std::pair<double, double>> read_samples_csv(
    const std::string& path);

}  // namespace vcn
