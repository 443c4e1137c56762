#include <Eigen/Sparse>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "vcn/errors.hpp"
#include "vcn/fpsolver.hpp"
#include "vcn/grid.hpp"
#include "vcn/model.hpp"
#include "vcn/particle.hpp"

using namespace vcn;

namespace {

ModelParams reference() {
  ModelParams p;
  p.g_L = 1.0;
  p.V_E = 2.0;
  return p;
}

// A grid whose g faces include the critical conductance g_F = 1.
GridSpec aligned_grid(const ModelParams& p, int n_v, int n_g) {
  return GridSpec::make(p, n_v, n_g, 8.0);  // dg = 8 / n_g, n_g % 8 == 0
}

DensityField box_density(const GridSpec& grid) {
  return density_from_initial(BoxInit{0.1, 0.7, 0.4, 3.2}, grid);
}

}  // namespace

TEST_CASE("generator columns sum to zero and carry the M-matrix signs") {
  const ModelParams p = reference();
  const GridSpec grid = aligned_grid(p, 24, 48);
  const FpOperator op = FpOperator::assemble(p, grid);
  const auto& A = op.matrix();
  REQUIRE(A.rows() == grid.size());
  REQUIRE(A.cols() == grid.size());

  double scale = 0.0;
  for (int k = 0; k < A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
      scale = std::max(scale, std::fabs(it.value()));
  REQUIRE(scale > 0.0);

  for (int k = 0; k < A.outerSize(); ++k) {
    double col = 0.0;
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it) {
      col += it.value();
      if (it.row() == it.col())
        CHECK(it.value() <= 0.0);
      else
        CHECK(it.value() >= 0.0);
    }
    CHECK(std::fabs(col) <= 1e-12 * scale);
  }
}

TEST_CASE("the sampled Gaussian annihilates the conductance operator") {
  const ModelParams p = reference();
  const int n_g = 64;
  const double g_max = 8.0;
  const auto B = assemble_conductance_operator(p, n_g, g_max);
  const double dg = g_max / n_g;

  Eigen::VectorXd pi(n_g);
  for (int j = 0; j < n_g; ++j) {
    const double gc = (j + 0.5) * dg;
    pi[j] = std::exp(-(gc - p.g_in) * (gc - p.g_in) / (2.0 * p.a));
  }
  const Eigen::VectorXd r = B * pi;
  const double scale = pi.maxCoeff() / dg;  // operator entries are O(1/dg^2)
  CHECK(r.cwiseAbs().maxCoeff() <= 1e-12 * scale / dg);

  CHECK_THROWS_AS(assemble_conductance_operator(p, 1, g_max), ConfigError);
}

TEST_CASE("both steppers conserve mass and keep densities non-negative") {
  const ModelParams p = reference();
  const GridSpec grid = aligned_grid(p, 16, 32);
  const FpOperator op = FpOperator::assemble(p, grid);

  SUBCASE("implicit") {
    DensityField f = box_density(grid);
    const TransientStepper st(op, 0.05, Scheme::implicit);
    for (int k = 0; k < 40; ++k) {
      st.step(f);
      for (double x : f.p) CHECK(x >= 0.0);
    }
    CHECK(f.mass() == doctest::Approx(1.0).epsilon(1e-11));
  }

  SUBCASE("explicit under the positivity limit") {
    const double limit = op.explicit_dt_limit();
    REQUIRE(limit > 0.0);
    DensityField f = box_density(grid);
    const TransientStepper st(op, 0.9 * limit, Scheme::explicit_euler);
    for (int k = 0; k < 40; ++k) {
      st.step(f);
      for (double x : f.p) CHECK(x >= 0.0);
    }
    CHECK(f.mass() == doctest::Approx(1.0).epsilon(1e-11));
  }

  SUBCASE("explicit over the limit is refused") {
    CHECK_THROWS_AS(
        TransientStepper(op, 1.01 * op.explicit_dt_limit(),
                         Scheme::explicit_euler),
        ConfigError);
    CHECK_NOTHROW(TransientStepper(op, 10.0 * op.explicit_dt_limit(),
                                   Scheme::implicit));
  }
}

TEST_CASE("the stationary solve lands on a fixed point of the stepper") {
  const ModelParams p = reference();
  const GridSpec grid = aligned_grid(p, 24, 48);
  const FpOperator op = FpOperator::assemble(p, grid);
  SolverOptions opts;
  const DensityField f = steady_state(op, opts);

  CHECK(f.mass() == doctest::Approx(1.0).epsilon(1e-12));
  for (double x : f.p) CHECK(x >= 0.0);

  Eigen::Map<const Eigen::VectorXd> v(f.p.data(), long(f.p.size()));
  const double area = grid.dv() * grid.dg();
  CHECK((op.matrix() * v).cwiseAbs().sum() * area <= opts.steady_tol);

  DensityField stepped = f;
  TransientStepper(op, 0.1, Scheme::implicit).step(stepped);
  double moved = 0.0;
  for (std::size_t c = 0; c < f.p.size(); ++c)
    moved += std::fabs(stepped.p[c] - f.p[c]) * area;
  CHECK(moved <= 10.0 * opts.steady_tol);

  SUBCASE("an impossible iteration budget raises a numerical error") {
    SolverOptions tight;
    tight.steady_tol = 1e-16;
    tight.steady_max_iter = 1;
    CHECK_THROWS_AS(steady_state(op, tight), NumericalError);
  }
}

TEST_CASE("the steady conductance marginal matches the reflected OU law") {
  const ModelParams p = reference();
  const GridSpec grid = aligned_grid(p, 24, 200);
  const FpOperator op = FpOperator::assemble(p, grid);
  const DensityField f = steady_state(op, SolverOptions{});
  const std::vector<double> m = f.conductance_marginal();

  // Against the discrete null vector: center-sampled Gaussian
  // normalized on the grid.  Agreement is at solver-residual level.
  std::vector<double> pi(m.size());
  double z = 0.0;
  for (std::size_t j = 0; j < pi.size(); ++j) {
    const double gc = grid.g_center(int(j));
    pi[j] = std::exp(-(gc - p.g_in) * (gc - p.g_in) / (2.0 * p.a));
    z += pi[j] * grid.dg();
  }
  double worst_discrete = 0.0;
  for (std::size_t j = 0; j < pi.size(); ++j)
    worst_discrete = std::max(worst_discrete, std::fabs(m[j] - pi[j] / z));
  CHECK(worst_discrete <= 1e-6);

  // Against the continuum closed form; the gap is the cell-average
  // versus center-value quadrature error, O(dg^2).
  double worst = 0.0;
  for (std::size_t j = 0; j < m.size(); ++j)
    worst = std::max(
        worst, std::fabs(m[j] - stationary_conductance_density(
                                    p, grid.g_center(int(j)), grid.g_max)));
  CHECK(worst <= 1e-3);
}

TEST_CASE("the implicit step commutes with taking the conductance marginal") {
  const ModelParams p = reference();
  const GridSpec grid = aligned_grid(p, 16, 32);
  const FpOperator op = FpOperator::assemble(p, grid);
  const double dt = 0.01;

  DensityField f = box_density(grid);
  const std::vector<double> m0 = f.conductance_marginal();
  TransientStepper(op, dt, Scheme::implicit).step(f);
  const std::vector<double> m1 = f.conductance_marginal();

  // Advance the initial marginal with the 1-D operator instead.
  const auto B = assemble_conductance_operator(p, grid.n_g, grid.g_max);
  Eigen::SparseMatrix<double> eye(grid.n_g, grid.n_g);
  eye.setIdentity();
  const Eigen::SparseMatrix<double> lhs = eye - dt * B;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(lhs);
  REQUIRE(lu.info() == Eigen::Success);
  Eigen::Map<const Eigen::VectorXd> rhs(m0.data(), grid.n_g);
  const Eigen::VectorXd m_ref = lu.solve(rhs);

  double worst = 0.0;
  for (int j = 0; j < grid.n_g; ++j)
    worst = std::max(worst, std::fabs(m1[std::size_t(j)] - m_ref[j]));
  CHECK(worst <= 1e-12);
}

TEST_CASE("threshold outflux is reinjected row by row at the reset") {
  const ModelParams p = reference();
  const GridSpec grid = aligned_grid(p, 24, 48);
  const FpOperator op = FpOperator::assemble(p, grid);
  const int j_crit = op.critical_face();
  CHECK(grid.g_face(j_crit) == doctest::Approx(critical_conductance(p)).epsilon(1e-12));

  // The match is structural, so it holds for any density, not just
  // the stationary one.
  for (const DensityField& f :
       {box_density(grid), steady_state(op, SolverOptions{})}) {
    const auto prof = op.boundary_flux_profile(f);
    REQUIRE(int(prof.threshold_out.size()) == grid.n_g);
    REQUIRE(int(prof.reset_in.size()) == grid.n_g);
    double total = 0.0;
    for (int j = 0; j < grid.n_g; ++j) {
      if (j < j_crit) {
        CHECK(prof.threshold_out[std::size_t(j)] == 0.0);
        CHECK(prof.reset_in[std::size_t(j)] == 0.0);
      } else {
        CHECK(prof.threshold_out[std::size_t(j)] ==
              doctest::Approx(prof.reset_in[std::size_t(j)]).epsilon(1e-12));
        CHECK(prof.threshold_out[std::size_t(j)] >= 0.0);
      }
      total += prof.threshold_out[std::size_t(j)] * grid.dg();
    }
    CHECK(op.firing_rate(f) == doctest::Approx(total).epsilon(1e-12));
  }
}

TEST_CASE("grids whose faces miss the critical conductance are refused") {
  const ModelParams p = reference();
  // dg = 8 / 50 = 0.16 puts the closest faces at 0.96 and 1.12.
  const GridSpec off = GridSpec::make(p, 16, 50, 8.0);
  CHECK_THROWS_AS(FpOperator::assemble(p, off), ConfigError);

  CHECK_THROWS_AS(GridSpec::make(p, 4, 48, 8.0), ConfigError);
  CHECK_THROWS_AS(GridSpec::make(p, 16, 48, 4.0), ConfigError);
}

TEST_CASE("transient decay from two starts approaches the same density") {
  // Weak ergodicity smoke check at solver level: distinct initial
  // densities contract toward the stationary profile.
  const ModelParams p = reference();
  const GridSpec grid = aligned_grid(p, 16, 32);
  const FpOperator op = FpOperator::assemble(p, grid);
  const DensityField pi = steady_state(op, SolverOptions{});

  auto l1_gap = [&](const DensityField& f) {
    double s = 0.0;
    for (std::size_t c = 0; c < f.p.size(); ++c)
      s += std::fabs(f.p[c] - pi.p[c]);
    return s * grid.dv() * grid.dg();
  };

  DensityField a = density_from_initial(PointInit{0.25, 0.5}, grid);
  DensityField b = density_from_initial(BoxInit{0.5, 0.9, 2.0, 4.0}, grid);
  const TransientStepper st(op, 0.05, Scheme::implicit);
  const double gap_a0 = l1_gap(a), gap_b0 = l1_gap(b);
  st.advance(a, 200);
  st.advance(b, 200);
  CHECK(l1_gap(a) < 0.05 * gap_a0);
  CHECK(l1_gap(b) < 0.05 * gap_b0);
  CHECK(a.mass() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(b.mass() == doctest::Approx(1.0).epsilon(1e-10));
}
