#pragma once

#include <Eigen/Sparse>

#include "vcn/grid.hpp"
#include "vcn/model.hpp"

namespace vcn {

enum class Scheme { implicit, explicit_euler };

struct SolverOptions {
  double dt = 1e-2;
  Scheme scheme = Scheme::implicit;
  double steady_tol = 1e-10;  // L1 norm of dp/dt at the fixed point
  int steady_max_iter = 300;
  double steady_dt = 8.0;     // pseudo-time step of the inverse iteration
};

// Conservative finite-volume discretization of the density equation:
// upwind fluxes in v with threshold outflow reinjected at the reset
// voltage, exponentially fitted drift-diffusion fluxes in g with
// no-flux walls at 0 and g_max.  The matrix A generates dp/dt = A p;
// off-diagonal entries are non-negative and every column sums to zero
// (to the accumulator's precision), so mass is conserved and both
// Euler schemes preserve positivity (explicit under its dt limit).
class FpOperator {
 public:
  // Requires a g-face exactly at the critical conductance, so that the
  // threshold boundary splits cleanly into Dirichlet and reinjection
  // rows; throws ConfigError otherwise.
  static FpOperator assemble(const ModelParams& p, const GridSpec& grid);

  const ModelParams& params() const { return params_; }
  const GridSpec& grid() const { return grid_; }
  const Eigen::SparseMatrix<double>& matrix() const { return A_; }

  // Index of the g-face sitting at the critical conductance; rows at
  // or above it carry threshold flux.
  int critical_face() const { return j_crit_; }

  // Largest dt for which explicit Euler keeps densities non-negative.
  double explicit_dt_limit() const;

  struct FluxProfile {
    std::vector<double> threshold_out;  // outflux density at V_F per g row
    std::vector<double> reset_in;       // influx applied at V_R per g row
  };
  // reset_in is read back from the assembled matrix, so comparing the
  // two profiles exercises the actual reinjection coupling.
  FluxProfile boundary_flux_profile(const DensityField& f) const;

  // Total threshold flux: the population firing rate of the density.
  double firing_rate(const DensityField& f) const;

 private:
  ModelParams params_;
  GridSpec grid_;
  Eigen::SparseMatrix<double> A_;
  int j_crit_ = 0;
};

// One fixed-dt time stepper; the implicit variant owns a sparse LU
// factorization of (I - dt A) reused across steps.
class TransientStepper {
 public:
  TransientStepper(const FpOperator& op, double dt, Scheme scheme);
  double dt() const { return dt_; }
  void step(DensityField& f) const;
  void advance(DensityField& f, int n_steps) const;

 private:
  const FpOperator* op_;
  double dt_;
  Scheme scheme_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
};

// Stationary density by inverse power iteration on (I - dt A), run to
// residual ||A p||_1 <= steady_tol; mass normalized to one.
DensityField steady_state(const FpOperator& op, const SolverOptions& opts);

// Finite-volume operator for the conductance marginal alone (the
// reflected OU generator in flux form), with the same face fluxes as
// the g-direction of the 2-D operator.
Eigen::SparseMatrix<double> assemble_conductance_operator(const ModelParams& p,
                                                          int n_g,
                                                          double g_max);

}  // namespace vcn
