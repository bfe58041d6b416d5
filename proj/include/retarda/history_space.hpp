#pragma once

#include <optional>
#include <vector>

#include "retarda/grid.hpp"
#include "retarda/linalg.hpp"

namespace retarda {

/// Initial history on [-r, 0]: an integrable part sampled at the theta nodes
/// plus a separately stored value at theta = 0. The two may disagree; the
/// samples are the L1 representative used inside integrals, value_at_zero is
/// the state the solution actually starts from. A history is continuous as a
/// grid object when samples[N] equals value_at_zero.
struct History {
  GridSpec grid;
  std::vector<Vec> samples;  ///< N + 1 values at theta nodes
  Vec value_at_zero;

  [[nodiscard]] int dim() const { return static_cast<int>(value_at_zero.size()); }
  [[nodiscard]] bool continuous_at_zero() const {
    return (samples.back() - value_at_zero).lpNorm<Eigen::Infinity>() == 0.0;
  }
  /// Sup of |phi| over the theta nodes and the value at zero.
  [[nodiscard]] double sup_norm() const;
};

/// Solution record on [-r, T]: one sample per global node. samples[N] is the
/// solution value x(0). When the originating history was discontinuous at 0,
/// its integrable value there is kept in value_at_zero_minus so that
/// integrals crossing t = 0 keep using the history's L1 representative.
struct Trajectory {
  GridSpec grid;
  std::vector<Vec> samples;  ///< N + M + 1 values at global nodes
  std::optional<Vec> value_at_zero_minus;

  [[nodiscard]] int dim() const { return static_cast<int>(samples.front().size()); }
  [[nodiscard]] const Vec& at_time(double t) const { return samples[grid.N + grid.node_of_time(t)]; }
};

/// Same layout for matrix valued solutions (fundamental matrices and their
/// derivatives). breakpoint_nodes marks forward nodes where the stored value
/// is one one-sided limit of a jump; left_values carries the other side.
struct MatrixTrajectory {
  GridSpec grid;
  std::vector<Mat> samples;
  std::optional<Mat> value_at_zero_minus;
  std::vector<int> breakpoint_nodes;  ///< forward node indices, ascending
  std::vector<Mat> left_values;       ///< left limits at those nodes

  [[nodiscard]] int dim() const { return static_cast<int>(samples.front().rows()); }
  [[nodiscard]] const Mat& at_time(double t) const { return samples[grid.N + grid.node_of_time(t)]; }
};

/// Norm that makes integrable histories with an attached present value a
/// complete space: the trapezoid integral of |phi| over [-r, 0] computed from
/// the samples, plus |value_at_zero|. The integral part deliberately uses
/// samples[N], not value_at_zero, at the right end.
double seminorm_m1(const History& phi);

/// History that is zero almost everywhere with present value xi.
History instantaneous(const Vec& xi, const GridSpec& grid);

/// Extend a history forward by its present value: phi on [-r, 0], then
/// constantly value_at_zero on [0, T].
Trajectory constant_prolongation(const History& phi, double T);

/// Values of x(t + theta) for theta on the grid; entry j is x(t + theta_j).
/// At t = 0 this returns the history with value_at_zero at theta = 0.
std::vector<Vec> segment(const Trajectory& x, double t);
std::vector<Mat> segment(const MatrixTrajectory& x, double t);

/// Sup of |x(t + theta)| over the theta nodes.
double segment_sup_norm(const Trajectory& x, double t);

/// Cumulative integral C over all global nodes, normalized so C(0) = 0:
/// C(s) = integral of x from 0 to s (negative s integrates backwards through
/// the history). Composite trapezoid; the cell just left of t = 0 uses the
/// history's integrable value there when the trajectory records one.
std::vector<Vec> cumulative_integral(const Trajectory& x);
std::vector<Mat> cumulative_integral(const MatrixTrajectory& x);

/// The theta grid function theta -> integral of x(s + theta) ds for s in
/// [0, t], evaluated as C(t + theta) - C(theta). Cost O(1) per theta after
/// the cumulative pass.
std::vector<Vec> integrate_segments(const Trajectory& x, double t);

/// Generators used by tests and the CLI.
History constant_history(const Vec& c, const GridSpec& grid);
History sampled_history(std::vector<Vec> samples, Vec value_at_zero, const GridSpec& grid);
/// amplitude * sin(omega * theta + phase) per component.
History sinusoid_history(const Vec& amplitude, double omega, double phase, const GridSpec& grid);

}  // namespace retarda
