#pragma once

#include <vector>

#include "retarda/grid.hpp"
#include "retarda/linalg.hpp"

namespace retarda {

/// One atom of the kernel measure: mass `weight` concentrated at `theta`,
/// which must coincide with a theta grid node (`node`).
struct KernelJump {
  double theta = 0.0;
  Mat weight;
  int node = 0;
};

/// Matrix valued Stieltjes kernel on [-r, 0], stored as its measure:
/// a finite set of atoms plus an absolutely continuous density sampled on the
/// uniform theta grid. The functional it represents acts on a history phi by
///
///   L phi = sum_k J_k phi(theta_k) + integral A(theta) phi(theta) dtheta.
///
/// Integration over a subinterval [a, b] counts an atom at either endpoint
/// with its full mass. The kernel is constant below -r, so integrals never
/// reach past the left end; callers clip their bounds at -r.
///
/// Kernels are immutable after construction. `reverse` returns a new object.
struct StieltjesKernel {
  double r = 1.0;
  int n = 1;
  int N = 256;
  double h = 1.0 / 256.0;
  std::vector<KernelJump> jumps;  ///< sorted by theta, one atom per node
  std::vector<Mat> density;       ///< empty, or N + 1 samples at theta nodes

  StieltjesKernel() = default;

  /// Validates and snaps atoms to the grid. Atom locations must lie within
  /// 1e-12 * r of a theta node; duplicates and off-grid locations are
  /// rejected. `density_` is either empty or has exactly N + 1 samples.
  StieltjesKernel(double r_, int N_, int n_, std::vector<KernelJump> jumps_,
                  std::vector<Mat> density_);

  [[nodiscard]] double theta(int j) const { return -r + j * h; }

  /// Theta node index for an on-grid location; throws grid_error otherwise.
  [[nodiscard]] int node_of_theta(double th) const;
};

/// Kernel measure pushed forward through u = -theta, living on [0, r] and
/// constant beyond r. Atom k sits at u_k = -theta_k; the density sample at u
/// is the original density at -u. Used by convolutions from the left.
struct ReversedKernel {
  double r = 1.0;
  int n = 1;
  int N = 256;
  double h = 1.0 / 256.0;
  std::vector<KernelJump> jumps;  ///< positions in [0, r], sorted ascending
  std::vector<Mat> density;       ///< empty, or N + 1 samples at u nodes
};

/// Riemann-Stieltjes integral of a grid function f against the kernel over
/// [a, b], a subinterval of [-r, 0] with on-grid endpoints. f has one sample
/// per theta node (size N + 1). Atoms inside [a, b], endpoints included,
/// contribute weight * f(node); the density contributes a composite trapezoid
/// sum. Second order accurate for integrands smooth between nodes.
Vec rs_integrate(const StieltjesKernel& k, const std::vector<Vec>& f, double a, double b);
Mat rs_integrate(const StieltjesKernel& k, const std::vector<Mat>& f, double a, double b);

/// L phi: the kernel applied to a full history sample set (rs_integrate over
/// all of [-r, 0]).
Vec apply_functional(const StieltjesKernel& k, const std::vector<Vec>& phi);
Mat apply_functional(const StieltjesKernel& k, const std::vector<Mat>& phi);

/// Total variation of the kernel measure: sum of the atoms' operator norms
/// plus the trapezoid integral of the density's operator norm. This bounds
/// the functional: |L phi| <= total_variation * sup |phi|.
double total_variation(const StieltjesKernel& k);

/// Push the measure through u = -theta.
ReversedKernel reverse(const StieltjesKernel& k);

/// Mass of the reversed measure on [0, u] per u node: atoms with u_k <= u
/// plus the cumulative trapezoid of the reversed density. Entry j corresponds
/// to u = j * h; entries above N repeat entry N.
std::vector<Mat> cumulative_mass(const ReversedKernel& rk, int nodes);

}  // namespace retarda
