#pragma once

#include <cmath>
#include <vector>

#include "retarda/history_space.hpp"
#include "retarda/stieltjes_kernel.hpp"

namespace retarda {

/// Exponential envelope fitted to a decaying quantity: the claim is
/// |f(t)| <= M exp(-alpha t) at every grid node of [0, T], with alpha
/// extracted from the crests of |f| on the fit window [t_min, T] and M the
/// smallest constant (at least 1) making the envelope hold on all of [0, T].
/// residual is the largest gap between log|f| and the fitted line at the
/// nodes that entered the fit. alpha <= 0 means no decay was visible at this
/// horizon; that is a finding, not an error.
struct DecayFit {
  double M = 1.0;
  double alpha = 0.0;
  double residual = 0.0;
  double t_min = 0.0;
  double T = 0.0;

  [[nodiscard]] bool stable() const { return alpha > 0.0; }
  [[nodiscard]] double bound(double t) const { return M * std::exp(-alpha * t); }
};

/// Envelope of the fundamental matrix itself: |X(t)| <= M exp(-alpha t).
/// The rate comes from a least-squares line through log|X| at the local
/// maxima of |X| on [t_min, T]; oscillatory solutions spend most nodes far
/// below their envelope, so fitting through all of them would bias the rate.
/// When fewer than two crests exist (monotone decay), all window nodes are
/// used instead. A vanishing |X| at a fit node has no logarithm and raises a
/// degenerate-fit solver_error.
DecayFit fit_exponential_envelope(const MatrixTrajectory& X, double t_min, double T);

/// Envelope of the windowed sup t -> sup over theta of |X(t + theta)|, the
/// quantity the solution segments inherit. The rate is taken from
/// fit_exponential_envelope on [r, T]; the constant is the smallest one
/// covering the sup series on [0, T]. Since the windowed sup lags the point
/// values by at most r, that constant never exceeds the point constant by
/// more than a factor exp(alpha r).
DecayFit history_envelope(const MatrixTrajectory& X, double T);

/// Deterministic probe battery for semigroup_decay: 2n constants (plus and
/// minus each coordinate direction), n coordinate sinusoids, n ramps rising
/// from 0 at -r to 1 at 0. All continuous, none identically zero.
std::vector<History> standard_probe_set(int n, const GridSpec& grid);

/// Decay of the solution operator estimated from below by probing: for each
/// probe phi, solve the homogeneous equation and track
/// sup over theta of |x(t + theta)| divided by sup |phi|; the pointwise
/// maximum of these ratio curves over the probe set is envelope-fitted on
/// [r, T]. Finitely many probes cannot exceed the operator norm, so the
/// fitted rate is an estimate, tight in practice for the default battery.
DecayFit semigroup_decay(const StieltjesKernel& k, double T, const std::vector<History>& probes);

/// standard_probe_set variant.
DecayFit semigroup_decay(const StieltjesKernel& k, double T);

/// Lift a history envelope of X to an envelope for arbitrary starting data.
/// A solution started from phi is X(t) phi(0) plus a convolution of X with a
/// forcing supported on [0, r] and bounded by variation * sup|phi|, so
///
///   sup_theta |x(t + theta)| <= M (1 + variation * (exp(alpha r) - 1) / alpha)
///                               * exp(-alpha t) * sup|phi|.
///
/// Returns the fit with its constant inflated by that factor; rate, window
/// and residual pass through unchanged.
DecayFit semigroup_envelope(const DecayFit& history_fit, double variation, double r);

/// The reverse direction: from a decay estimate for the solution operator,
/// the fundamental matrix obeys |X(t)| <= M exp(alpha r) sup_{[0, r]} |X|
/// times exp(-alpha t), because past time r the columns of X are segments of
/// continuous solutions. Returns the fit with that constant (clamped at 1).
DecayFit fundamental_envelope_from_semigroup(const DecayFit& semigroup_fit,
                                             const MatrixTrajectory& X);

/// Integral-inequality bound on the forward grid of `grid`:
///
///   t -> max{u_a_norm, alpha0(t)} * exp(integral of beta over [0, t])
///
/// beta must be nonnegative; the grid-function alpha0 must be nondecreasing,
/// which is what makes the max-form bound valid for equations with memory.
/// With u_a_norm = 0 and constant alpha0 this is the classical bound
/// alpha0 * exp(integral beta).
std::vector<double> gronwall_bound(double alpha0, const std::vector<double>& beta,
                                   double u_a_norm, const GridSpec& grid);
std::vector<double> gronwall_bound(const std::vector<double>& alpha0,
                                   const std::vector<double>& beta, double u_a_norm,
                                   const GridSpec& grid);

/// Pointwise slack of a bound over a computed trajectory.
struct MarginReport {
  std::vector<double> margins;  ///< bound(t) - sup_theta |x(t + theta)|, per forward node
  double min_margin = 0.0;
  bool pass = false;  ///< all margins >= -1e-9
};

/// Check a solver trajectory against gronwall_bound with u_a_norm taken from
/// the trajectory's own initial segment.
MarginReport verify_gronwall(const Trajectory& x, double alpha0, const std::vector<double>& beta);
MarginReport verify_gronwall(const Trajectory& x, const std::vector<double>& alpha0,
                             const std::vector<double>& beta);

}  // namespace retarda
