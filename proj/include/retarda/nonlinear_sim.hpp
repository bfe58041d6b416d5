#pragma once

#include <functional>
#include <string>
#include <vector>

#include "retarda/history_space.hpp"
#include "retarda/mild_solver.hpp"
#include "retarda/stability_analyzer.hpp"
#include "retarda/stieltjes_kernel.hpp"

namespace retarda {

/// Hook evaluating a perturbation at one instant: receives the absolute time
/// and the current segment (theta-grid samples, entry N is the present
/// value), returns the n-vector added to the right-hand side.
using SegmentFn = std::function<Vec(double, const std::vector<Vec>&)>;

/// Nonlinear right-hand side f(t, x_t) = N(t, x_t) + h(t, x_t) together with
/// the bounds the caller asserts for it. h is the small nonlinearity:
/// |h(t, phi)| <= eps_modulus(sup|phi|) * sup|phi| with a nondecreasing
/// modulus vanishing at 0+. N is an optional time-decaying linear part with
/// operator-norm envelope nu_envelope, decreasing to 0. Null hooks mean the
/// corresponding term is absent; the all-null spec is the linear equation.
/// The advertised bounds are the caller's contract; simulate spot-checks the
/// cheap consequences (h vanishes on the zero segment, N is linear on probe
/// segments, the moduli are monotone) and rejects specs that fail them.
struct PerturbationSpec {
  SegmentFn h_map;
  std::function<double(double)> eps_modulus;
  SegmentFn N_map;
  std::function<double(double)> nu_envelope;
};

/// Built-in scalar-componentwise perturbations selectable by name:
///   "cubic"       h_i = -phi_i(0)^3,                eps(u) = u^2
///   "quadratic"   h_i = phi_i(0) |phi_i(0)|,        eps(u) = u
///   "saturating"  h_i = -phi_i(0)^3 / (1 + phi_i(0)^2), eps(u) = u^2/(1+u^2)
PerturbationSpec builtin_perturbation(const std::string& name);

struct NonlinearConfig {
  SolverConfig base;
  /// Positive radius makes leaving {sup segment norm <= radius} end the run
  /// with a truncated result; 0 disables the check.
  double working_radius = 0.0;
};

/// Outcome of a nonlinear run. The trajectory always extends to stop_time;
/// when the run could not be continued (Picard divergence, working-ball
/// exit), completed is false, stop_time is the last certified time and
/// stop_reason says why in one line.
struct SimulationResult {
  Trajectory x;
  bool completed = false;
  double stop_time = 0.0;
  std::string stop_reason;
};

/// Windowed Picard iteration on the fixed-point form
///
///   x(t) = xlin(t) + integral over [0, t] of X(t - u) f(u, x_u) du
///
/// in time relative to t0 (hooks receive absolute time t0 + u). xlin is the
/// linear solution with history phi; X the fundamental matrix. The window
/// length keeps sup|X| * Lf * window below one half, where Lf is a sampled
/// local Lipschitz surrogate of f at the current solution scale, refreshed
/// each window. phi must be continuous. T is the absolute end time.
/// Non-convergence is reported, not thrown.
SimulationResult simulate(const StieltjesKernel& k, const PerturbationSpec& pert,
                          const History& phi, double t0, double T,
                          const NonlinearConfig& cfg = {});

/// simulate against a fundamental matrix computed once by the caller; X must
/// live on the kernel's grid with horizon at least T - t0.
SimulationResult simulate_with_fundamental(const MatrixTrajectory& X, const StieltjesKernel& k,
                                           const PerturbationSpec& pert, const History& phi,
                                           double t0, double T, const NonlinearConfig& cfg = {});

/// Decay certificate for the perturbed equation near zero: segments started
/// in the delta-ball obey sup-norm decay M exp(-beta (t - t0)) sup|phi|, and
/// stay inside the working ball of radius delta_tilde = M * delta.
struct StabilityCertificate {
  double M = 1.0;
  double beta = 0.0;
  double delta = 0.0;
  double delta_tilde = 0.0;
};

/// Certificate from a fitted segment envelope (M, alpha) of the linear part:
/// with eps = epsilon_modulus(delta_tilde), requires M * eps < alpha and
/// returns beta = alpha - M * eps, delta = delta_tilde / M. The fit must
/// dominate segments of every solution the certificate speaks about, so pass
/// an envelope valid for arbitrary starting histories (semigroup_envelope),
/// not the bare matrix fit. Inadmissible inputs raise solver_error.
StabilityCertificate linearized_stability_certificate(
    const DecayFit& fitM, const std::function<double(double)>& epsilon_modulus,
    double delta_tilde);

/// Certificate additionally absorbing a decaying linear drift N with
/// envelope nu: burn-in ends at the first a with nu(t) < epsilon for t >= a
/// (nu decreasing); the constant is inflated to
/// M0 exp(M0 (R - epsilon)(a - sigma)) for starts at sigma < a and stays M0
/// once sigma >= a. Requires 2 M0 epsilon < alpha, R > nu(sigma),
/// R > epsilon. beta = alpha - 2 M0 epsilon, delta = delta_tilde / M.
StabilityCertificate poincare_lyapunov_certificate(
    const DecayFit& fit, double epsilon, const std::function<double(double)>& nu_envelope,
    double sigma, double R, double delta_tilde);

/// Pointwise check of a run against its certificate. margins[m] =
/// M exp(-beta t_m) phi_seminorm - sup_theta |x(t_m + theta)| on the run's
/// forward grid (relative time; t0 only documents the absolute start). When
/// phi_seminorm >= cert.delta the certificate asserts nothing: the report is
/// flagged outside_certificate and passes vacuously, margins still recorded.
struct DecayReport {
  std::vector<double> margins;
  double min_margin = 0.0;
  bool pass = false;
  bool outside_certificate = false;
};

DecayReport verify_decay(const Trajectory& x, const StabilityCertificate& cert,
                         double phi_seminorm, double t0);

}  // namespace retarda
