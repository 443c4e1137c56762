#pragma once

#include <cstdint>
#include <vector>

#include "vcn/model.hpp"

namespace vcn {

// Uniform cell-centered grid on [V_R, V_F) x [0, g_max].  Cells are
// indexed v-fastest: cell (i, j) holds index i + j * n_v.
struct GridSpec {
  int n_v = 0;
  int n_g = 0;
  double v_min = 0.0;
  double v_max = 1.0;
  double g_max = 0.0;

  static GridSpec make(const ModelParams& p, int n_v, int n_g, double g_max);

  double dv() const { return (v_max - v_min) / n_v; }
  double dg() const { return g_max / n_g; }
  double v_face(int i) const { return v_min + i * dv(); }
  double g_face(int j) const { return j * dg(); }
  double v_center(int i) const { return v_min + (i + 0.5) * dv(); }
  double g_center(int j) const { return (j + 0.5) * dg(); }
  int cell(int i, int j) const { return i + j * n_v; }
  int size() const { return n_v * n_g; }

  bool same_as(const GridSpec& o) const;

  // Cell of a point with v in [v_min, v_max); returns -1 when g lands
  // beyond g_max (the overflow bin).
  int locate(double v, double g) const;

  // Throws ConfigError unless n_v, n_g >= 8 and g_max >= g_in + 6 sqrt(a).
  void validate(const ModelParams& p) const;
};

// Piecewise-constant density on a GridSpec plus an overflow bin for
// mass beyond g_max (populated only by particle histograms).  Values
// are densities, so cell mass is p[c] * dv * dg.
struct DensityField {
  GridSpec grid;
  std::vector<double> p;
  double time = 0.0;
  double overflow_mass = 0.0;        // probability mass with g > g_max
  double overflow_g_centroid = 0.0;  // mean conductance of that mass

  static DensityField zero(const GridSpec& grid);

  double mass() const;
  void scale(double factor);
  // Scales so that mass() == 1; throws NumericalError on zero/negative mass.
  void normalize();
  // Density integrated over v, one value per g cell (overflow excluded).
  std::vector<double> conductance_marginal() const;
};

}  // namespace vcn
