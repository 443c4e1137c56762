#include <cmath>

#include "doctest.h"
#include "vcn/errors.hpp"
#include "vcn/model.hpp"

using namespace vcn;

namespace {
ModelParams reference() {
  ModelParams p;
  p.g_L = 1.0;
  p.V_E = 2.0;
  return p;
}
}  // namespace

TEST_CASE("velocity field at pinned points") {
  const ModelParams p = reference();
  CHECK(velocity(p, 0.5, 1.0 / 3.0) == 0.0);   // the zero-drift point
  CHECK(velocity(p, 0.0, 0.0) == 0.0);         // both terms vanish
  CHECK(velocity(p, 1.0, 1.0) == 0.0);         // threshold drift flips here
  CHECK(velocity(p, 0.0, 1.0) == 2.0);
  CHECK(velocity(p, 0.9, 0.0) == doctest::Approx(-0.9));
}

TEST_CASE("critical conductance formula and sign structure") {
  CHECK(critical_conductance(reference()) == 1.0);
  ModelParams q = reference();
  q.g_L = 2.0;
  q.V_E = 3.0;
  CHECK(critical_conductance(q) == 1.0);
  q.g_L = 1e-12;
  q.V_E = 2.0;
  CHECK(critical_conductance(q) == doctest::Approx(0.0).epsilon(1e-9).scale(1.0));

  const ModelParams p = reference();
  const double g_F = critical_conductance(p);
  CHECK(velocity(p, p.V_F, g_F) == 0.0);
  for (int k = 0; k < 200; ++k) {
    const double g = 0.02 * (k + 1);
    const double at_wall = velocity(p, p.V_F, g);
    if (g > g_F) CHECK(at_wall > 0.0);
    if (g < g_F) CHECK(at_wall < 0.0);
  }
}

TEST_CASE("zero-drift voltage lies on the expected side of the threshold") {
  const ModelParams p = reference();
  const double g_F = critical_conductance(p);
  for (int k = 1; k <= 50; ++k) {
    // Invert the nullcline: v0 = (g V_E + g_L V_R) / (g_L + g).
    const double g = 0.09 * k;
    const double v0 = (g * p.V_E + p.g_L * p.V_R) / (p.g_L + g);
    CHECK(velocity(p, v0, g) == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
    CHECK(nullcline_conductance(p, v0) == doctest::Approx(g).epsilon(1e-12));
    if (g > g_F * 1.001) {
      CHECK(v0 > p.V_F);
      CHECK(v0 < p.V_E);
    }
    if (g < g_F * 0.999 && g > 0) {
      CHECK(v0 > p.V_R);
      CHECK(v0 < p.V_F);
    }
  }
}

TEST_CASE("velocity is monotone in each argument") {
  const ModelParams p = reference();
  for (int k = 0; k < 40; ++k) {
    const double g = 0.1 * k;
    double prev = velocity(p, p.V_R, g);
    for (int i = 1; i <= 20; ++i) {
      const double cur = velocity(p, p.V_R + 0.05 * i, g);
      CHECK(cur < prev);  // slope -(g_L + g) < 0
      prev = cur;
    }
  }
  for (int i = 0; i < 20; ++i) {
    const double v = 0.05 * i;  // any v < V_E
    double prev = velocity(p, v, 0.0);
    for (int k = 1; k <= 40; ++k) {
      const double cur = velocity(p, v, 0.1 * k);
      CHECK(cur > prev);
      prev = cur;
    }
  }
}

TEST_CASE("parameter validation names the offending field") {
  ModelParams p = reference();
  p.g_L = 0.0;
  CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("g_L"), ConfigError);
  p = reference();
  p.V_E = 0.5;
  CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("V_E"), ConfigError);
  p = reference();
  p.a = -1.0;
  CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("a"), ConfigError);
  p = reference();
  p.g_in = 0.0;
  CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("g_in"), ConfigError);
  p = reference();
  p.V_R = 2.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("contraction constants for the reference parameters") {
  const ModelParams p = reference();
  const HarrisConstants h = harris_constants(p, 1.0);
  // Exactly representable targets; equality is bitwise.
  CHECK(h.v_star == 0.5);
  CHECK(h.g_star == 1.0 / 3.0);
  CHECK(h.M == 2.0);
  CHECK(h.T2 == 3.0 / 22.0);
  CHECK(velocity(p, h.v_star, h.g_star) == 0.0);

  CHECK(h.J_star > 0.0);
  CHECK(h.T3 == 1.0 / (2.0 * h.J_star));
  CHECK(h.T1 == 1.0 + h.T3);
  CHECK(h.T == h.T1 + h.T2);
  CHECK(h.v_r == 0.05);
  CHECK(h.g_r > 0.0);
  CHECK(h.g_star - h.g_r > 0.0);

  const HarrisConstants h4 = harris_constants(p, 4.0);
  CHECK(h4.M == 3.0);
  CHECK(h4.T == h.T);  // the horizon does not depend on the level
}

TEST_CASE("corner minimum matches a brute-force scan of the box faces") {
  const ModelParams p = reference();
  const HarrisConstants h = harris_constants(p, 1.0);
  double scan = 1e300;
  bool left_positive = true, right_negative = true;
  for (int k = 0; k <= 4000; ++k) {
    const double g = h.g_star - h.g_r + 2.0 * h.g_r * double(k) / 4000.0;
    const double jl = velocity(p, h.v_star - h.v_r, g);
    const double jr = velocity(p, h.v_star + h.v_r, g);
    left_positive = left_positive && jl > 0.0;
    right_negative = right_negative && jr < 0.0;
    scan = std::min(scan, std::min(std::fabs(jl), std::fabs(jr)));
  }
  CHECK(left_positive);
  CHECK(right_negative);
  CHECK(h.J_star == doctest::Approx(scan).epsilon(1e-10));
}

TEST_CASE("boxes straddling the nullcline are rejected") {
  const ModelParams p = reference();
  // nullcline(0.45) = 0.29032 exceeds g* - 0.05 = 0.28333, so the
  // left face changes drift sign inside this box.
  CHECK_THROWS_AS(harris_constants(p, 1.0, 0.05, 0.05), ConfigError);
  CHECK_THROWS_AS(harris_constants(p, 1.0, 0.0, 0.01), ConfigError);
  CHECK_THROWS_AS(harris_constants(p, 1.0, 0.01, 0.0), ConfigError);
  CHECK_THROWS_AS(harris_constants(p, 0.5, 0.01, 0.01), ConfigError);
  CHECK_THROWS_AS(harris_constants(p, 1.0, 0.6, 0.01), ConfigError);

  // Just inside the admissible band is fine.
  const double v_r = 0.05;
  const double band = std::min(
      nullcline_conductance(p, 0.5) - nullcline_conductance(p, 0.5 - v_r),
      nullcline_conductance(p, 0.5 + v_r) - nullcline_conductance(p, 0.5));
  CHECK_NOTHROW(harris_constants(p, 1.0, v_r, 0.9 * band));
  CHECK_THROWS_AS(harris_constants(p, 1.0, v_r, 1.1 * band), ConfigError);
}

TEST_CASE("constants require normalized units") {
  ModelParams p = reference();
  p.a = 2.0;
  CHECK_THROWS_WITH_AS(harris_constants(p, 1.0),
                       doctest::Contains("normalized"), ConfigError);
  p = reference();
  p.g_in = 0.5;
  CHECK_THROWS_AS(harris_constants(p, 1.0), ConfigError);
}

TEST_CASE("stationary conductance density normalizes and peaks at g_in") {
  const ModelParams p = reference();
  const double cap = 8.0;
  // Simpson quadrature of the closed form.
  const int n = 4000;
  const double hh = cap / n;
  double integral = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    integral += w * stationary_conductance_density(p, k * hh, cap);
  }
  integral *= hh / 3.0;
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(stationary_conductance_density(p, 1.0, cap) >
        stationary_conductance_density(p, 0.5, cap));
  CHECK(stationary_conductance_density(p, 1.0, cap) >
        stationary_conductance_density(p, 1.5, cap));
  CHECK(stationary_conductance_density(p, -0.1, cap) == 0.0);
  CHECK(stationary_conductance_density(p, 9.0, cap) == 0.0);
}
