#pragma once

#include "retarda/history_space.hpp"
#include "retarda/mild_solver.hpp"

namespace retarda {

/// Principal matrix solution X on [-r, T]: zero on [-r, 0), the identity at
/// t = 0, and column j solving the homogeneous equation from the history
/// that is zero almost everywhere with present value e_j. X(t) xi then
/// reproduces the solution started from the instantaneous history xi.
MatrixTrajectory principal_fundamental(const StieltjesKernel& k, double T,
                                       const SolverConfig& cfg = {});

/// Almost-everywhere derivative of X: the kernel integrated against the
/// segment of X at t, with the integration clipped at -r,
///   X'(t) = integral over [max(-t, -r), 0] of deta(theta) X(t + theta).
/// At a node where t equals a delay the stored value is the right limit
/// (the atom at theta = -t is included with full mass); the node is listed
/// in breakpoint_nodes and the left limit is kept alongside. Consumers that
/// integrate X' across such a node should use both one-sided values.
MatrixTrajectory fundamental_derivative(const StieltjesKernel& k, const MatrixTrajectory& X);

/// Matrix exponential exp(t A) by scaling and squaring of the Taylor series.
/// Absolute error at most 1e-12 for |tA| <= 10. Reference quality only; no
/// attempt at balancing or Pade economy.
Mat expm_oracle(const Mat& A, double t);

/// Closed form for the scalar equation x'(t) = b x(t - tau) started from the
/// instantaneous history 1 at 0: a polynomial in t with one new term per
/// elapsed delay, sum over k of b^k (t - k tau)^k / k!.
double pure_delay_series(double b, double tau, double t);

}  // namespace retarda
