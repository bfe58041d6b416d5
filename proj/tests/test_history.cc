#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "retarda/errors.hpp"
#include "retarda/history_space.hpp"

using namespace retarda;

namespace {
Vec v1(double v) { return Vec::Constant(1, v); }
}

TEST_CASE("seminorm adds the integral part and the present value") {
  GridSpec g(2.0, 128, 1.0);
  History phi = constant_history(v1(-3.0), g);
  phi.value_at_zero = v1(5.0);
  // Trapezoid of a constant is exact: 2 * 3 + 5.
  CHECK(seminorm_m1(phi) == doctest::Approx(11.0).epsilon(1e-14));
}

TEST_CASE("instantaneous history carries mass only at zero") {
  GridSpec g(1.0, 64, 1.0);
  History phi = instantaneous(v1(7.0), g);
  CHECK(seminorm_m1(phi) == doctest::Approx(7.0).epsilon(1e-14));
  for (int j = 0; j <= g.N; ++j) CHECK(phi.samples[j](0) == 0.0);
  CHECK_FALSE(phi.continuous_at_zero());
  CHECK(phi.sup_norm() == 7.0);
}

TEST_CASE("segment integral factorizes through the cumulative integral") {
  GridSpec g(1.0, 64, 2.0);
  const double xi = 1.75;
  Trajectory x = constant_prolongation(instantaneous(v1(xi), g), 2.0);

  const double t = 0.5;
  const auto psi = integrate_segments(x, t);
  const auto C = cumulative_integral(x);
  const int m = g.node_of_time(t);
  for (int j = 0; j <= g.N; ++j) {
    // Exact factorization, same arithmetic path.
    CHECK(psi[j](0) == C[m + j](0) - C[j](0));
    // Closed form for the instantaneous history: xi * max(0, t + theta).
    const double want = xi * std::max(0.0, t + g.theta(j));
    CHECK(psi[j](0) == doctest::Approx(want).epsilon(1e-14));
  }
}

TEST_CASE("cumulative integral uses the history sample left of zero") {
  GridSpec g(1.0, 16, 1.0);
  History phi = constant_history(v1(2.0), g);
  phi.value_at_zero = v1(9.0);  // discontinuous at 0
  Trajectory x = constant_prolongation(phi, 1.0);
  REQUIRE(x.value_at_zero_minus.has_value());
  CHECK((*x.value_at_zero_minus)(0) == 2.0);

  const auto C = cumulative_integral(x);
  // Left of zero the integrand is the sample value 2, right of zero it is 9.
  CHECK(C[g.N](0) == 0.0);
  CHECK(C[g.N - 1](0) == doctest::Approx(-2.0 * g.h).epsilon(1e-14));
  CHECK(C[g.N + 1](0) == doctest::Approx(9.0 * g.h).epsilon(1e-14));
}

TEST_CASE("segments expose the trajectory window") {
  GridSpec g(1.0, 8, 1.0);
  History phi = constant_history(v1(1.0), g);
  Trajectory x = constant_prolongation(phi, 1.0);
  for (int m = 0; m <= g.M; ++m) x.samples[g.N + m] = v1(1.0 + m);

  const auto seg = segment(x, g.time(4));
  CHECK(seg.size() == static_cast<size_t>(g.N + 1));
  CHECK(seg[g.N](0) == 5.0);  // x(t)
  CHECK(seg[0](0) == 1.0);    // reaches back into the history
  CHECK(segment_sup_norm(x, g.time(4)) == 5.0);

  // Segment at t = 0 ends in the present value, not the L1 representative.
  History disc = constant_history(v1(3.0), g);
  disc.value_at_zero = v1(-8.0);
  Trajectory y = constant_prolongation(disc, 1.0);
  CHECK(segment(y, 0.0)[g.N](0) == -8.0);
}

TEST_CASE("generators sample their closed forms") {
  GridSpec g(1.0, 32, 1.0);
  History s = sinusoid_history(v1(2.0), 3.0, 0.25, g);
  for (int j = 0; j <= g.N; ++j)
    CHECK(s.samples[j](0) == doctest::Approx(2.0 * std::sin(3.0 * g.theta(j) + 0.25)));
  CHECK(s.continuous_at_zero());
}

TEST_CASE("off grid requests and bad shapes are rejected") {
  GridSpec g(1.0, 32, 1.0);
  Trajectory x = constant_prolongation(constant_history(v1(1.0), g), 1.0);
  CHECK_THROWS_AS(segment(x, 0.5 + 0.1 * g.h), grid_error);
  CHECK_THROWS_AS(segment(x, 2.0), grid_error);
  CHECK_THROWS_AS(GridSpec(1.0, 32, 0.7701), grid_error);
  CHECK_THROWS_AS(GridSpec(-1.0, 32, 1.0), validation_error);
  CHECK_THROWS_AS(sampled_history(std::vector<Vec>(3, v1(0.0)), v1(0.0), g), validation_error);
}
