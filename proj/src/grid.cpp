#include "vcn/grid.hpp"

#include <cmath>
#include <sstream>

#include "vcn/errors.hpp"

namespace vcn {

GridSpec GridSpec::make(const ModelParams& p, int n_v, int n_g, double g_max) {
  GridSpec g;
  g.n_v = n_v;
  g.n_g = n_g;
  g.v_min = p.V_R;
  g.v_max = p.V_F;
  g.g_max = g_max;
  g.validate(p);
  return g;
}

bool GridSpec::same_as(const GridSpec& o) const {
  return n_v == o.n_v && n_g == o.n_g && v_min == o.v_min &&
         v_max == o.v_max && g_max == o.g_max;
}

int GridSpec::locate(double v, double g) const {
  if (g > g_max) return -1;
  int i = int((v - v_min) / dv());
  int j = int(g / dg());
  // Points exactly on the top faces belong to the last cell.
  if (i >= n_v) i = n_v - 1;
  if (j >= n_g) j = n_g - 1;
  if (i < 0) i = 0;
  if (j < 0) j = 0;
  return cell(i, j);
}

void GridSpec::validate(const ModelParams& p) const {
  std::ostringstream os;
  if (n_v < 8 || n_g < 8) {
    os << "grid " << n_v << "x" << n_g << " too coarse (need >= 8 cells per axis)";
    throw ConfigError(os.str());
  }
  if (!(v_min == p.V_R) || !(v_max == p.V_F))
    throw ConfigError("grid voltage range must be [V_R, V_F)");
  const double g_needed = p.g_in + 6.0 * std::sqrt(p.a);
  if (!(g_max >= g_needed)) {
    os << "g_max = " << g_max << " must cover g_in + 6 sqrt(a) = " << g_needed;
    throw ConfigError(os.str());
  }
}

DensityField DensityField::zero(const GridSpec& grid) {
  DensityField f;
  f.grid = grid;
  f.p.assign(std::size_t(grid.size()), 0.0);
  return f;
}

double DensityField::mass() const {
  double m = 0.0;
  for (double x : p) m += x;
  return m * grid.dv() * grid.dg() + overflow_mass;
}

void DensityField::scale(double factor) {
  for (double& x : p) x *= factor;
  overflow_mass *= factor;
}

void DensityField::normalize() {
  const double m = mass();
  if (!(m > 0) || !std::isfinite(m))
    throw NumericalError("cannot normalize field with non-positive mass");
  scale(1.0 / m);
}

std::vector<double> DensityField::conductance_marginal() const {
  std::vector<double> q(std::size_t(grid.n_g), 0.0);
  for (int j = 0; j < grid.n_g; ++j) {
    double s = 0.0;
    for (int i = 0; i < grid.n_v; ++i) s += p[std::size_t(grid.cell(i, j))];
    q[std::size_t(j)] = s * grid.dv();
  }
  return q;
}

}  // namespace vcn
