#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "retarda/errors.hpp"
#include "retarda/fundamental_matrix.hpp"
#include "retarda/mild_solver.hpp"
#include "retarda/stability_analyzer.hpp"
#include "support/oracles.hpp"

using namespace retarda;

namespace {

Mat m1(double v) { return Mat::Constant(1, 1, v); }
Vec v1(double v) { return Vec::Constant(1, v); }

MatrixTrajectory synthetic_decay(const GridSpec& g, double rate) {
  MatrixTrajectory X;
  X.grid = g;
  X.samples.assign(g.total_nodes(), Mat::Zero(1, 1));
  for (int m = 0; m <= g.M; ++m) X.samples[g.N + m] = m1(std::exp(-rate * g.time(m)));
  return X;
}

// Decay rate of x' = -x(t - 0.5): real part of the dominant root of
// z = -exp(-z / 2), frozen from the Newton oracle.
constexpr double kDelayRate = 1.5880472646893784;

void check_envelope(const std::vector<double>& f, const DecayFit& fit, double h) {
  for (size_t m = 0; m < f.size(); ++m)
    CHECK(f[m] <= fit.bound(m * h) * (1.0 + 1e-12) + 1e-300);
}

}  // namespace

TEST_CASE("pure exponential decay is fitted exactly") {
  GridSpec g(1.0, 64, 5.0);
  const MatrixTrajectory X = synthetic_decay(g, 1.0);
  const DecayFit fit = fit_exponential_envelope(X, 1.0, 5.0);
  CHECK(fit.alpha == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(fit.M == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(fit.residual <= 1e-9);
  CHECK(fit.stable());
  CHECK(fit.t_min == doctest::Approx(1.0));
  CHECK(fit.T == doctest::Approx(5.0));
}

TEST_CASE("a flat series is reported as not decaying") {
  GridSpec g(1.0, 32, 4.0);
  const MatrixTrajectory X = synthetic_decay(g, 0.0);
  const DecayFit fit = fit_exponential_envelope(X, 0.0, 4.0);
  CHECK(fit.alpha == doctest::Approx(0.0));
  CHECK(fit.M == doctest::Approx(1.0));
  CHECK_FALSE(fit.stable());
}

TEST_CASE("vanishing samples inside the window have no log envelope") {
  GridSpec g(1.0, 32, 3.0);
  MatrixTrajectory X = synthetic_decay(g, 1.0);
  X.samples[g.N + 48] = m1(0.0);
  CHECK_THROWS_AS((void)fit_exponential_envelope(X, 1.0, 3.0), solver_error);

  const MatrixTrajectory Z = synthetic_decay(g, 0.0);
  MatrixTrajectory zero = Z;
  for (auto& s : zero.samples) s = m1(0.0);
  CHECK_THROWS_AS((void)fit_exponential_envelope(zero, 0.0, 3.0), solver_error);
}

TEST_CASE("fit window preconditions") {
  GridSpec g(1.0, 32, 2.0);
  const MatrixTrajectory X = synthetic_decay(g, 1.0);
  CHECK_THROWS_AS((void)fit_exponential_envelope(X, 2.0, 2.0), validation_error);
  CHECK_THROWS_AS((void)fit_exponential_envelope(X, -0.5, 2.0), validation_error);
  CHECK_THROWS_AS((void)fit_exponential_envelope(X, 0.0, 3.0), grid_error);
}

TEST_CASE("single delay rate matches the characteristic root") {
  GridSpec g(0.5, 256, 30.0);
  StieltjesKernel k(g.r, g.N, 1, {{-0.5, m1(-1.0), 0}}, {});
  const MatrixTrajectory X = principal_fundamental(k, g.T);
  const DecayFit fit = fit_exponential_envelope(X, g.r, g.T);

  const auto root = oracle::rightmost_delay_root(-1.0, 0.5);
  CHECK(-root.real() == doctest::Approx(kDelayRate).epsilon(1e-12));
  CHECK(fit.alpha == doctest::Approx(kDelayRate).epsilon(0.02));

  std::vector<double> f(g.M + 1);
  for (int m = 0; m <= g.M; ++m) f[m] = X.samples[g.N + m].lpNorm<Eigen::Infinity>();
  check_envelope(f, fit, g.h);
}

TEST_CASE("windowed sup envelope") {
  SUBCASE("no kernel: the sup settles at one") {
    GridSpec g(1.0, 32, 4.0);
    StieltjesKernel none(g.r, g.N, 1, {}, {});
    const MatrixTrajectory X = principal_fundamental(none, g.T);
    const DecayFit fit = history_envelope(X, g.T);
    CHECK(fit.alpha == doctest::Approx(0.0));
    CHECK(fit.M == doctest::Approx(1.0));
    CHECK_FALSE(fit.stable());
  }

  SUBCASE("pure decay: the constant absorbs exactly one window factor") {
    GridSpec g(1.0, 64, 6.0);
    const MatrixTrajectory X = synthetic_decay(g, 1.0);
    const DecayFit fit = history_envelope(X, g.T);
    CHECK(fit.alpha == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(fit.M == doctest::Approx(std::exp(1.0)).epsilon(1e-9));
    CHECK(fit.t_min == doctest::Approx(1.0));
  }

  SUBCASE("delay kernel: constant sits below the point fit times exp(alpha r)") {
    GridSpec g(0.5, 128, 20.0);
    StieltjesKernel k(g.r, g.N, 1, {{-0.5, m1(-1.0), 0}}, {});
    const MatrixTrajectory X = principal_fundamental(k, g.T);
    const DecayFit point = fit_exponential_envelope(X, g.r, g.T);
    const DecayFit hist = history_envelope(X, g.T);
    CHECK(hist.alpha == doctest::Approx(point.alpha));
    CHECK(hist.M <= point.M * std::exp(point.alpha * g.r) * (1.0 + 1e-3));
    CHECK(hist.M >= point.M);

    std::vector<double> hsup(g.M + 1, 0.0);
    for (int m = 0; m <= g.M; ++m)
      for (int j = 0; j <= g.N; ++j)
        hsup[m] = std::max(hsup[m], X.samples[m + j].lpNorm<Eigen::Infinity>());
    check_envelope(hsup, hist, g.h);
  }
}

TEST_CASE("semigroup decay estimated from probes") {
  SUBCASE("no kernel: every ratio stays at one") {
    GridSpec g(1.0, 32, 4.0);
    StieltjesKernel none(g.r, g.N, 1, {}, {});
    const DecayFit fit = semigroup_decay(none, g.T);
    CHECK(fit.alpha == doctest::Approx(0.0));
    CHECK(fit.M == doctest::Approx(1.0));
    CHECK_FALSE(fit.stable());
    CHECK(fit.t_min == doctest::Approx(g.r));
  }

  SUBCASE("stable delay kernel: probe rate tracks the matrix rate") {
    GridSpec g(0.5, 128, 30.0);
    StieltjesKernel k(g.r, g.N, 1, {{-0.5, m1(-1.0), 0}}, {});
    const MatrixTrajectory X = principal_fundamental(k, g.T);
    const DecayFit point = fit_exponential_envelope(X, g.r, g.T);
    const DecayFit sg = semigroup_decay(k, g.T);
    CHECK(sg.alpha == doctest::Approx(point.alpha).epsilon(0.05));
    CHECK(sg.stable());
    CHECK(sg.M >= 1.0);
  }

  SUBCASE("probe validation") {
    GridSpec g(1.0, 32, 4.0);
    StieltjesKernel k(g.r, g.N, 1, {{-1.0, m1(-0.5), 0}}, {});
    CHECK_THROWS_AS((void)semigroup_decay(k, g.T, {}), validation_error);
    CHECK_THROWS_AS((void)semigroup_decay(k, g.T, {instantaneous(v1(1.0), g)}),
                    validation_error);
    CHECK_THROWS_AS((void)semigroup_decay(k, g.T, {constant_history(v1(0.0), g)}),
                    validation_error);
    GridSpec other(1.0, 16, 4.0);
    CHECK_THROWS_AS((void)semigroup_decay(k, g.T, {constant_history(v1(1.0), other)}),
                    validation_error);
  }

  SUBCASE("probe battery covers all directions") {
    GridSpec g(1.0, 16, 2.0);
    const auto probes = standard_probe_set(3, g);
    CHECK(probes.size() == 12);
    for (const auto& p : probes) {
      CHECK(p.continuous_at_zero());
      CHECK(p.sup_norm() > 0.0);
    }
  }
}

TEST_CASE("constant inflation formulas") {
  SUBCASE("history fit to arbitrary data") {
    DecayFit hist;
    hist.M = 2.0;
    hist.alpha = 0.5;
    const DecayFit out = semigroup_envelope(hist, 1.5, 1.0);
    CHECK(out.M == doctest::Approx(5.8923276242007692).epsilon(1e-12));
    CHECK(out.alpha == doctest::Approx(0.5));

    DecayFit flat;
    flat.M = 1.5;
    flat.alpha = 0.0;
    CHECK(semigroup_envelope(flat, 2.0, 0.5).M == doctest::Approx(3.0));
    CHECK_THROWS_AS((void)semigroup_envelope(hist, -1.0, 1.0), validation_error);
  }

  SUBCASE("semigroup fit back to the matrix") {
    GridSpec g(0.5, 64, 10.0);
    StieltjesKernel k(g.r, g.N, 1, {{-0.5, m1(-1.0), 0}}, {});
    const MatrixTrajectory X = principal_fundamental(k, g.T);
    const DecayFit sg = semigroup_decay(k, g.T);

    double sup_r = 0.0;
    for (int m = 0; m <= g.N; ++m)
      sup_r = std::max(sup_r, X.samples[g.N + m].lpNorm<Eigen::Infinity>());
    const double want = std::max(1.0, sg.M * std::exp(sg.alpha * g.r) * sup_r);

    const DecayFit back = fundamental_envelope_from_semigroup(sg, X);
    CHECK(back.M == doctest::Approx(want).epsilon(1e-6));
    CHECK(back.alpha == doctest::Approx(sg.alpha));
  }

  SUBCASE("inflated history envelope dominates arbitrary continuous starts") {
    GridSpec g(0.5, 128, 12.0);
    StieltjesKernel k(g.r, g.N, 1, {{-0.5, m1(-1.0), 0}}, {});
    const MatrixTrajectory X = principal_fundamental(k, g.T);
    const DecayFit lifted = semigroup_envelope(history_envelope(X, g.T), total_variation(k), g.r);

    std::mt19937_64 rng(2026);
    std::uniform_real_distribution<double> amp(0.5, 1.5), om(0.5, 3.0), ph(0.0, 3.1);
    for (int trial = 0; trial < 8; ++trial) {
      const History phi = sinusoid_history(v1(amp(rng)), om(rng), ph(rng), g);
      const double denom = phi.sup_norm();
      const Trajectory x = solve_homogeneous(k, phi, g.T);
      for (int m = 0; m <= g.M; ++m) {
        const double ratio = segment_sup_norm(x, g.time(m)) / denom;
        CHECK(ratio <= lifted.bound(g.time(m)) * (1.0 + 1e-3) + 1e-12);
      }
    }
  }
}

TEST_CASE("integral inequality bounds") {
  GridSpec g(1.0, 16, 3.0);

  SUBCASE("constant data reproduces the exponential closed form") {
    const std::vector<double> beta(g.M + 1, 2.0);
    const auto bound = gronwall_bound(1.0, beta, 0.0, g);
    for (int m = 0; m <= g.M; ++m)
      CHECK(bound[m] == doctest::Approx(std::exp(2.0 * g.time(m))).epsilon(1e-12));
  }

  SUBCASE("zero beta leaves the max of the data") {
    std::vector<double> alpha(g.M + 1);
    for (int m = 0; m <= g.M; ++m) alpha[m] = g.time(m);
    const std::vector<double> beta(g.M + 1, 0.0);
    const auto bound = gronwall_bound(alpha, beta, 0.7, g);
    for (int m = 0; m <= g.M; ++m)
      CHECK(bound[m] == doctest::Approx(std::max(0.7, g.time(m))));
  }

  SUBCASE("memory form dominates the convolution form for increasing data") {
    std::vector<double> alpha(g.M + 1);
    for (int m = 0; m <= g.M; ++m) alpha[m] = g.time(m);
    const std::vector<double> beta(g.M + 1, 1.0);
    const auto bound = gronwall_bound(alpha, beta, 0.0, g);
    // alpha(t) + integral of alpha(s) beta exp(t - s) ds, by trapezoid
    for (int m = 0; m <= g.M; ++m) {
      const double t = g.time(m);
      double conv = 0.0;
      for (int j = 0; j <= m; ++j) {
        const double s = g.time(j);
        const double w = (j == 0 || j == m) ? 0.5 : 1.0;
        conv += w * g.h * s * std::exp(t - s);
      }
      CHECK(bound[m] >= t + conv - 1e-9);
    }
  }

  SUBCASE("input validation") {
    std::vector<double> beta(g.M + 1, 1.0);
    beta[3] = -0.1;
    CHECK_THROWS_AS((void)gronwall_bound(1.0, beta, 0.0, g), validation_error);
    std::vector<double> down(g.M + 1, 1.0);
    down[5] = 0.5;
    CHECK_THROWS_AS((void)gronwall_bound(down, std::vector<double>(g.M + 1, 1.0), 0.0, g),
                    validation_error);
    CHECK_THROWS_AS((void)gronwall_bound(1.0, std::vector<double>(g.M, 1.0), 0.0, g),
                    validation_error);
    CHECK_THROWS_AS((void)gronwall_bound(1.0, std::vector<double>(g.M + 1, 1.0), -1.0, g),
                    validation_error);
  }

  SUBCASE("bound grows with beta") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> b1(g.M + 1), b2(g.M + 1);
      for (int m = 0; m <= g.M; ++m) {
        b1[m] = u(rng);
        b2[m] = b1[m] + u(rng);
      }
      const auto lo = gronwall_bound(1.0, b1, 0.5, g);
      const auto hi = gronwall_bound(1.0, b2, 0.5, g);
      for (int m = 0; m <= g.M; ++m) CHECK(lo[m] <= hi[m] * (1.0 + 1e-15));
    }
  }
}

TEST_CASE("checking trajectories against their a-priori bound") {
  GridSpec g(0.5, 64, 15.0);
  StieltjesKernel stable(g.r, g.N, 1, {{-0.5, m1(-1.0), 0}}, {});
  StieltjesKernel growing(g.r, g.N, 1, {{-0.5, m1(2.0), 0}}, {});

  SUBCASE("zero solution has zero margins against a zero bound") {
    const Trajectory x = solve_homogeneous(stable, constant_history(v1(0.0), g), g.T);
    const auto rep = verify_gronwall(x, 0.0, std::vector<double>(g.M + 1, total_variation(stable)));
    CHECK(rep.pass);
    CHECK(rep.min_margin == doctest::Approx(0.0));
  }

  SUBCASE("stable solution sits below the variation bound") {
    const History phi = constant_history(v1(1.0), g);
    const Trajectory x = solve_homogeneous(stable, phi, g.T);
    const auto rep =
        verify_gronwall(x, phi.sup_norm(), std::vector<double>(g.M + 1, total_variation(stable)));
    CHECK(rep.pass);
    CHECK(rep.min_margin >= -1e-9);
  }

  SUBCASE("a deliberately weakened rate is caught") {
    const History phi = constant_history(v1(1.0), g);
    const Trajectory x = solve_homogeneous(growing, phi, g.T);
    const auto rep = verify_gronwall(
        x, phi.sup_norm(), std::vector<double>(g.M + 1, 0.5 * total_variation(growing)));
    CHECK_FALSE(rep.pass);
    CHECK(rep.min_margin < -1.0);

    const auto honest =
        verify_gronwall(x, phi.sup_norm(), std::vector<double>(g.M + 1, total_variation(growing)));
    CHECK(honest.pass);
  }
}
