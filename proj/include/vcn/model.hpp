#pragma once

#include <string>

namespace vcn {

// Parameters of the voltage-conductance model.  Voltage lives on
// [V_R, V_F) and is reset to V_R on reaching V_F; conductance is a
// reflected Ornstein-Uhlenbeck process on [0, inf) with mean g_in and
// diffusion coefficient a.
struct ModelParams {
  double g_L = 1.0;   // leak conductance
  double V_E = 2.0;   // excitatory reversal potential, > V_F
  double V_R = 0.0;   // reset voltage
  double V_F = 1.0;   // firing threshold, > V_R
  double a = 1.0;     // conductance diffusion coefficient
  double g_in = 1.0;  // mean input conductance

  // Throws ConfigError naming the offending field.  Requires
  // g_L > 0, a > 0, g_in > 0, V_R < V_F < V_E.
  void validate() const;
};

// Drift of the voltage at (v, g): leak toward V_R plus excitatory
// drive toward V_E.
inline double velocity(const ModelParams& p, double v, double g) {
  return p.g_L * (p.V_R - v) + g * (p.V_E - v);
}

// Smallest conductance at which the drift at the firing threshold is
// non-negative: g_F = g_L (V_F - V_R) / (V_E - V_F).  Trajectories can
// only cross V_F while g > g_F.
double critical_conductance(const ModelParams& p);

// Conductance at which the drift vanishes for a given voltage,
// g = g_L (v - V_R) / (V_E - v).  The drift is positive above this
// curve and negative below it.
double nullcline_conductance(const ModelParams& p, double v);

// Explicit constants of the quantitative ergodicity argument: the
// Lyapunov sub-level box, the interior target box N around the
// zero-drift point, the traversal times T1..T3, and their sum T used
// as the minorization horizon.
struct HarrisConstants {
  double R = 1.0;      // Lyapunov level defining C(R)
  double M = 2.0;      // conductance cap of C(R): M = sqrt(R) + 1
  double v_star = 0;   // target box center, midpoint of [V_R, V_F]
  double g_star = 0;   // zero-drift conductance at v_star
  double v_r = 0;      // half-width of N in v
  double g_r = 0;      // half-width of N in g
  double J_star = 0;   // smallest |drift| on the v-faces of N
  double T3 = 0;       // time to sweep the voltage into N at speed J*: 1/(2 J*)
  double T1 = 0;       // unit conductance-settling time plus the sweep: 1 + T3
  double T2 = 0;       // spreading time from N: 1 / ((2 g* + 3) V_E)
  double T = 0;        // minorization horizon T1 + T2
};

// Stationary density of the reflected OU conductance truncated to
// [0, g_cap]: proportional to exp(-(g - g_in)^2 / (2a)), normalized in
// closed form with erf.
double stationary_conductance_density(const ModelParams& p, double g,
                                      double g_cap);

// Half-widths used when the caller does not pick the box.  v_r is
// 0.05 of the voltage span; g_r is fitted inside the band where the
// drift keeps a single sign on both v-faces of the box (2/3 of the
// distance from g_star to the nearer nullcline value).
double default_halfwidth_v(const ModelParams& p);
double default_halfwidth_g(const ModelParams& p, double v_r);

// Computes the constants for level R and box half-widths (v_r, g_r).
// Throws ConfigError if R < 1, if the box is degenerate or leaves the
// domain, or if the drift changes sign on a v-face of the box (the
// traversal-time argument needs J to have one sign on each face, and
// that fails for half-widths that straddle the nullcline).
HarrisConstants harris_constants(const ModelParams& p, double R,
                                 double v_r, double g_r);

// Same with default half-widths.
HarrisConstants harris_constants(const ModelParams& p, double R);

}  // namespace vcn
