#include "vcn/fpsolver.hpp"

#include <cmath>
#include <vector>

#include "vcn/errors.hpp"

namespace vcn {

namespace {

// w / (e^w - 1), the exponential-fitting factor of the conductance
// flux.  Series below 1e-5 where expm1 loses relative accuracy.
double fitting_factor(double w) {
  if (std::fabs(w) < 1e-5)
    return 1.0 - w / 2.0 + w * w / 12.0;
  return w / std::expm1(w);
}

struct FluxBuilder {
  int n;
  std::vector<Eigen::Triplet<double>> trips;
  std::vector<long double> outflow;

  explicit FluxBuilder(int size) : n(size), outflow(std::size_t(size), 0.0L) {}

  // Probability flow from cell `from` to cell `to` at rate >= 0.
  void add_flow(int from, int to, double rate) {
    trips.emplace_back(to, from, rate);
    outflow[std::size_t(from)] += rate;
  }

  Eigen::SparseMatrix<double> finish() {
    // Diagonals are the negated column outflow accumulated in extended
    // precision, which keeps column sums (hence total mass) balanced
    // well below double roundoff.
    for (int c = 0; c < n; ++c)
      trips.emplace_back(c, c, -double(outflow[std::size_t(c)]));
    Eigen::SparseMatrix<double> A(n, n);
    A.setFromTriplets(trips.begin(), trips.end());
    A.makeCompressed();
    return A;
  }
};

// Adds the reflected OU fluxes along one line of n_g cells with cell
// index stride `stride` and base offset `base`.
void add_conductance_faces(FluxBuilder& fb, const ModelParams& p,
                           int n_g, double dg, int base, int stride) {
  for (int k = 1; k < n_g; ++k) {
    const double g_face = k * dg;
    const double w = (g_face - p.g_in) * dg / p.a;
    const double r = fitting_factor(w);
    const double up = (p.a / (dg * dg)) * r;            // toward larger g
    const double down = up * std::exp(w);               // toward smaller g
    const int lower = base + (k - 1) * stride;
    const int upper = base + k * stride;
    fb.add_flow(lower, upper, up);
    fb.add_flow(upper, lower, down);
  }
}

int critical_face_index(const ModelParams& p, const GridSpec& grid) {
  const double g_F = critical_conductance(p);
  const double dg = grid.dg();
  const int j = int(std::lround(g_F / dg));
  if (j < 1 || j >= grid.n_g ||
      std::fabs(j * dg - g_F) > 1e-9 * std::max(1.0, g_F))
    throw ConfigError(
        "grid must place a conductance face at the critical conductance "
        "g_L (V_F - V_R) / (V_E - V_F)");
  return j;
}

}  // namespace

FpOperator FpOperator::assemble(const ModelParams& p, const GridSpec& grid) {
  p.validate();
  grid.validate(p);
  FpOperator op;
  op.params_ = p;
  op.grid_ = grid;
  op.j_crit_ = critical_face_index(p, grid);

  const int n_v = grid.n_v;
  const int n_g = grid.n_g;
  const double dv = grid.dv();
  FluxBuilder fb(grid.size());

  for (int j = 0; j < n_g; ++j) {
    const double g = grid.g_center(j);
    // Interior v faces, first-order upwind on the face speed.
    for (int i = 1; i < n_v; ++i) {
      const double s = velocity(p, grid.v_face(i), g);
      if (s >= 0.0)
        fb.add_flow(grid.cell(i - 1, j), grid.cell(i, j), s / dv);
      else
        fb.add_flow(grid.cell(i, j), grid.cell(i - 1, j), -s / dv);
    }
    // Threshold wall.  Rows above the critical face fire and feed the
    // reset cell; below it the drift points inward and the exterior
    // value is zero, so no flux enters or leaves.
    if (j >= op.j_crit_) {
      const double s = velocity(p, p.V_F, g);
      fb.add_flow(grid.cell(n_v - 1, j), grid.cell(0, j), s / dv);
    }
    // The drift at V_R points inward for every g >= 0, so the only
    // inflow there is the reinjection handled above.
  }
  for (int i = 0; i < n_v; ++i)
    add_conductance_faces(fb, p, n_g, grid.dg(), grid.cell(i, 0), n_v);

  op.A_ = fb.finish();
  return op;
}

double FpOperator::explicit_dt_limit() const {
  double worst = 0.0;
  for (int c = 0; c < A_.outerSize(); ++c)
    worst = std::max(worst, -A_.coeff(c, c));
  if (!(worst > 0)) throw NumericalError("operator has an empty diagonal");
  return 1.0 / worst;
}

FpOperator::FluxProfile FpOperator::boundary_flux_profile(
    const DensityField& f) const {
  if (!f.grid.same_as(grid_))
    throw ConfigError("density field grid does not match the operator");
  FluxProfile prof;
  prof.threshold_out.assign(std::size_t(grid_.n_g), 0.0);
  prof.reset_in.assign(std::size_t(grid_.n_g), 0.0);
  const double dv = grid_.dv();
  for (int j = 0; j < grid_.n_g; ++j) {
    const int edge = grid_.cell(grid_.n_v - 1, j);
    const double pj = f.p[std::size_t(edge)];
    if (j >= j_crit_)
      prof.threshold_out[std::size_t(j)] =
          velocity(params_, params_.V_F, grid_.g_center(j)) * pj;
    // Reinjection rate as assembled, converted back to a flux density;
    // rows below critical must read zero (no coupling assembled).
    prof.reset_in[std::size_t(j)] =
        A_.coeff(grid_.cell(0, j), edge) * dv * pj;
  }
  return prof;
}

double FpOperator::firing_rate(const DensityField& f) const {
  const FluxProfile prof = boundary_flux_profile(f);
  double rate = 0.0;
  for (double x : prof.threshold_out) rate += x;
  return rate * grid_.dg();
}

TransientStepper::TransientStepper(const FpOperator& op, double dt,
                                   Scheme scheme)
    : op_(&op), dt_(dt), scheme_(scheme) {
  if (!(dt > 0) || !std::isfinite(dt))
    throw ConfigError("solver dt must be positive");
  if (scheme_ == Scheme::explicit_euler) {
    if (dt > op.explicit_dt_limit())
      throw ConfigError("explicit dt exceeds the positivity limit");
    return;
  }
  const int n = op.grid().size();
  Eigen::SparseMatrix<double> id(n, n);
  id.setIdentity();
  Eigen::SparseMatrix<double> system = id - dt_ * op.matrix();
  lu_.compute(system);
  if (lu_.info() != Eigen::Success)
    throw NumericalError("sparse LU factorization failed");
}

void TransientStepper::step(DensityField& f) const {
  if (!f.grid.same_as(op_->grid()))
    throw ConfigError("density field grid does not match the operator");
  Eigen::Map<Eigen::VectorXd> p(f.p.data(), Eigen::Index(f.p.size()));
  if (scheme_ == Scheme::explicit_euler) {
    p += dt_ * (op_->matrix() * p).eval();
  } else {
    Eigen::VectorXd x = lu_.solve(p);
    if (lu_.info() != Eigen::Success)
      throw NumericalError("sparse LU solve failed");
    p = x;
  }
  f.time += dt_;
}

void TransientStepper::advance(DensityField& f, int n_steps) const {
  for (int k = 0; k < n_steps; ++k) step(f);
}

DensityField steady_state(const FpOperator& op, const SolverOptions& opts) {
  DensityField f = DensityField::zero(op.grid());
  const double uniform =
      1.0 / ((op.grid().v_max - op.grid().v_min) * op.grid().g_max);
  for (double& x : f.p) x = uniform;

  TransientStepper stepper(op, opts.steady_dt, Scheme::implicit);
  const double area = op.grid().dv() * op.grid().dg();
  Eigen::Map<Eigen::VectorXd> p(f.p.data(), Eigen::Index(f.p.size()));
  for (int iter = 0; iter < opts.steady_max_iter; ++iter) {
    stepper.step(f);
    f.time = 0.0;
    f.normalize();
    const double residual = (op.matrix() * p).cwiseAbs().sum() * area;
    if (residual <= opts.steady_tol) return f;
  }
  throw NumericalError("stationary solve did not reach the residual target");
}

Eigen::SparseMatrix<double> assemble_conductance_operator(const ModelParams& p,
                                                          int n_g,
                                                          double g_max) {
  p.validate();
  if (n_g < 2 || !(g_max > 0))
    throw ConfigError("conductance operator needs n_g >= 2 and g_max > 0");
  FluxBuilder fb(n_g);
  add_conductance_faces(fb, p, n_g, g_max / n_g, 0, 1);
  return fb.finish();
}

}  // namespace vcn
