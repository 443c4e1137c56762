#include "vcn/model.hpp"

#include <cmath>
#include <sstream>

#include "vcn/errors.hpp"

namespace vcn {

namespace {

[[noreturn]] void bad_param(const std::string& field, double value,
                            const std::string& constraint) {
  std::ostringstream os;
  os << "model parameter " << field << " = " << value
     << " violates " << constraint;
  throw ConfigError(os.str());
}

bool normalized(const ModelParams& p) {
  return p.V_R == 0.0 && p.V_F == 1.0 && p.a == 1.0 && p.g_in == 1.0;
}

}  // namespace

void ModelParams::validate() const {
  if (!(g_L > 0) || !std::isfinite(g_L)) bad_param("g_L", g_L, "g_L > 0");
  if (!(a > 0) || !std::isfinite(a)) bad_param("a", a, "a > 0");
  if (!(g_in > 0) || !std::isfinite(g_in)) bad_param("g_in", g_in, "g_in > 0");
  if (!(V_R < V_F)) bad_param("V_R", V_R, "V_R < V_F");
  if (!(V_F < V_E)) bad_param("V_E", V_E, "V_E > V_F");
  if (!std::isfinite(V_R) || !std::isfinite(V_F) || !std::isfinite(V_E))
    throw ConfigError("model voltages must be finite");
}

double critical_conductance(const ModelParams& p) {
  if (!(p.V_E > p.V_F)) bad_param("V_E", p.V_E, "V_E > V_F");
  return p.g_L * (p.V_F - p.V_R) / (p.V_E - p.V_F);
}

double nullcline_conductance(const ModelParams& p, double v) {
  return p.g_L * (v - p.V_R) / (p.V_E - v);
}

double stationary_conductance_density(const ModelParams& p, double g,
                                      double g_cap) {
  if (g < 0.0 || g > g_cap) return 0.0;
  const double s = std::sqrt(2.0 * p.a);
  const double z = std::sqrt(3.14159265358979323846 * p.a / 2.0) *
                   (std::erf((g_cap - p.g_in) / s) + std::erf(p.g_in / s));
  return std::exp(-(g - p.g_in) * (g - p.g_in) / (2.0 * p.a)) / z;
}

double default_halfwidth_v(const ModelParams& p) {
  return 0.05 * (p.V_F - p.V_R);
}

double default_halfwidth_g(const ModelParams& p, double v_r) {
  const double v_star = 0.5 * (p.V_R + p.V_F);
  const double g_star = nullcline_conductance(p, v_star);
  // Largest band around g_star keeping one drift sign per v-face, with
  // a 1/3 safety margin so J_star stays bounded away from zero.
  const double room_below = g_star - nullcline_conductance(p, v_star - v_r);
  const double room_above = nullcline_conductance(p, v_star + v_r) - g_star;
  const double room = std::min(room_below, room_above);
  if (!(room > 0))
    throw ConfigError("no admissible conductance half-width for v_r");
  return (2.0 / 3.0) * room;
}

HarrisConstants harris_constants(const ModelParams& p, double R,
                                 double v_r, double g_r) {
  p.validate();
  if (!normalized(p))
    throw ConfigError(
        "ergodicity constants need normalized units "
        "(V_R = 0, V_F = 1, a = 1, g_in = 1)");
  if (!(R >= 1.0)) bad_param("R", R, "R >= 1");
  if (!(v_r > 0)) bad_param("v_r", v_r, "v_r > 0");
  if (!(g_r > 0)) bad_param("g_r", g_r, "g_r > 0");

  HarrisConstants h;
  h.R = R;
  h.M = std::sqrt(R) + 1.0;
  h.v_star = 0.5 * (p.V_R + p.V_F);
  h.g_star = nullcline_conductance(p, h.v_star);
  h.v_r = v_r;
  h.g_r = g_r;

  if (!(h.v_star - v_r > p.V_R) || !(h.v_star + v_r < p.V_F))
    bad_param("v_r", v_r, "N inside (V_R, V_F)");
  // The sweep argument needs the drift to be positive on the whole left
  // face of N and negative on the whole right face.  Equivalently the
  // conductance band must not touch the nullcline at either face.
  const double null_left = nullcline_conductance(p, h.v_star - v_r);
  const double null_right = nullcline_conductance(p, h.v_star + v_r);
  if (!(h.g_star - g_r > null_left))
    bad_param("g_r", g_r, "g* - g_r > nullcline(v* - v_r)");
  if (!(h.g_star + g_r < null_right))
    bad_param("g_r", g_r, "g* + g_r < nullcline(v* + v_r)");

  // With one sign per face, |J| is monotone in g along each face, so
  // the face minima sit at the corners nearest the nullcline.
  const double j_left = velocity(p, h.v_star - v_r, h.g_star - g_r);
  const double j_right = -velocity(p, h.v_star + v_r, h.g_star + g_r);
  h.J_star = std::min(j_left, j_right);
  if (!(h.J_star > 0))
    throw ConfigError("drift lower bound J* must be positive");

  h.T3 = 1.0 / (2.0 * h.J_star);
  h.T1 = 1.0 + h.T3;
  // Equal to 1 / ((2 g* + 3) V_E); written over a common denominator so
  // the rational cases come out exactly rounded.
  h.T2 = (p.V_E - h.v_star) /
         (p.V_E * (2.0 * p.g_L * (h.v_star - p.V_R) +
                   3.0 * (p.V_E - h.v_star)));
  h.T = h.T1 + h.T2;
  return h;
}

HarrisConstants harris_constants(const ModelParams& p, double R) {
  const double v_r = default_halfwidth_v(p);
  return harris_constants(p, R, v_r, default_halfwidth_g(p, v_r));
}

}  // namespace vcn
