#pragma once

#include <utility>
#include <vector>

#include "retarda/fundamental_matrix.hpp"
#include "retarda/history_space.hpp"
#include "retarda/stieltjes_kernel.hpp"

namespace retarda {

/// The two forcing terms a history feeds into the forward equation: the
/// density gl(t) (how the past enters the derivative at time t) and its
/// cumulative form GL(t). gl vanishes on [r, T] because the memory window is
/// r; GL(0) = 0 and GL is constant on [r, T] up to quadrature error.
///
/// At a time equal to a delay, gl stores the right limit; the jump there is
/// minus (atom mass) * phi(0). Cumulative quantities built from gl must
/// account for those jumps, see volterra_with_drops.
struct ForcingPair {
  GridSpec grid;
  std::vector<Vec> gl;  ///< M + 1 values, zero from node N on
  std::vector<Vec> GL;  ///< M + 1 values, GL[0] = 0
};

/// History forcing density on [0, r], sampled per forward node (size N + 1):
/// the kernel integrated over [-r, -t] against phi(t + theta), with an atom
/// exactly at -t excluded (right-limit convention, so the value at a delay
/// time is the one valid just after it). Requires a history continuous at 0;
/// discontinuous histories only have the cumulative form, use G_ell.
std::vector<Vec> g_ell(const StieltjesKernel& k, const History& phi);

/// Same function computed the other way: the kernel applied to the constant
/// prolongation segment, minus the mass the kernel carries on [-t, 0] times
/// phi(0). Agrees with g_ell to rounding; kept as an internal cross-check
/// and exercised by the self test.
std::vector<Vec> g_ell_prolonged(const StieltjesKernel& k, const History& phi);

/// Cumulative history forcing on [0, T]: the kernel applied to the segment
/// integrals of the constant prolongation, minus the integrated mass ramp
/// times phi(0). The atom part of the ramp is piecewise linear in t and is
/// evaluated in closed form, so delay crossings cost no accuracy. Accepts any
/// history, discontinuous ones included.
std::vector<Vec> G_ell(const StieltjesKernel& k, const History& phi, double T);

/// Reference route for the same function: the kernel integrated against
/// theta -> integral of phi over [theta, min(t + theta, 0)], evaluated from
/// the cumulative history integral. O(N) per time node; used to cross-check
/// G_ell, not on the assembly paths.
std::vector<Vec> G_ell_reference(const StieltjesKernel& k, const History& phi, double T);

/// Both forcing terms for a continuous history, gl zero-extended to [0, T].
ForcingPair history_forcing(const StieltjesKernel& k, const History& phi, double T);

/// Downward jumps of g_ell at delay crossings: pairs (forward node of tau_k,
/// left limit minus right limit = atom mass * phi(0)), ascending in node.
std::vector<std::pair<int, Vec>> forcing_drops(const StieltjesKernel& k, const History& phi);

/// Cumulative trapezoid of a grid function whose stored values are right
/// limits at the given drop nodes. The plain rule loses an O(h) sliver in
/// each cell ending at a drop; adding back h/2 * (left - right) per crossed
/// drop restores second order.
std::vector<Vec> volterra_with_drops(const std::vector<Vec>& f, double h,
                                     const std::vector<std::pair<int, Vec>>& drops);

/// Solution with zero history under a cumulative forcing G:
/// x(t) = G(t) + integral of X'(t - u) G(u) du. The derivative factor's
/// recorded one-sided limits keep the quadrature second order across delay
/// nodes. G(0) must vanish.
Trajectory voc_zero_history(const MatrixTrajectory& X, const MatrixTrajectory& Xdot,
                            const std::vector<Vec>& G, double T);

/// Homogeneous solution reassembled from the fundamental matrix:
/// x(t) = X(t) phi(0) + GL(t) + integral of X'(t - u) GL(u) du.
Trajectory voc_homogeneous(const MatrixTrajectory& X, const MatrixTrajectory& Xdot,
                           const StieltjesKernel& k, const History& phi);

/// Forced solution from a history and a cumulative forcing G with G(0) = 0:
/// the homogeneous assembly with GL replaced by GL + G.
Trajectory voc_full(const MatrixTrajectory& X, const MatrixTrajectory& Xdot,
                    const StieltjesKernel& k, const History& phi, const std::vector<Vec>& G);

/// Forced solution via the undifferentiated factor:
/// x(t) = X(t) phi(0) + integral of X(t - u) [gl(u) + g(u)] du.
/// phi must be continuous (gl must exist); g is an integrable forcing
/// density sampled per forward node, assumed continuous, and may be empty
/// for the homogeneous case. gl's drops at delay crossings are folded in
/// analytically.
Trajectory voc_kernel_form(const MatrixTrajectory& X, const StieltjesKernel& k,
                           const History& phi, const std::vector<Vec>& g);

/// Homogeneous solution as x(t) = phi(0) + integral of X(t - u) L phibar_u du
/// where phibar_u is the segment of the constant prolongation at u. The
/// integrand is continuous in u for continuous phi, so the plain trapezoid
/// convolution applies.
Trajectory naito_formula(const MatrixTrajectory& X, const StieltjesKernel& k, const History& phi);

/// Closed form for kernels made of atoms only (discrete delays):
/// x(t) = X(t) phi(0) + sum_k integral over [-tau_k, 0] of
/// X(t - tau_k - theta) J_k phi(theta) dtheta. An atom at theta = 0
/// contributes through X alone. Kernels with a density part are rejected.
Trajectory dd_closed_form(const MatrixTrajectory& X, const StieltjesKernel& k, const History& phi);

}  // namespace retarda
