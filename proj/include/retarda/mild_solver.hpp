#pragma once

#include <vector>

#include "retarda/history_space.hpp"
#include "retarda/stieltjes_kernel.hpp"

namespace retarda {

/// Starting iterate for the Picard sweep inside each window.
enum class PicardSeed { constant, zero };

struct SolverConfig {
  double picard_tol = 1e-12;
  int max_picard_iters = 200;
  /// Window length for the method of steps. 0 selects
  /// min(r, 0.5 / total_variation); an explicit value must keep
  /// total_variation * window below 1 or the configuration is rejected.
  double window = 0.0;
  PicardSeed seed = PicardSeed::constant;
};

/// Solution of x(t) = phi(0) + L (integral of x_s over [0, t]) + G(t) on
/// [0, T], sampled on the grid phi lives on. The integral equation is solved
/// window by window, each window anchored at its own starting value so that
/// decaying solutions keep relative accuracy arbitrarily deep; inside a
/// window, Picard iteration runs on the integral form until successive
/// sweeps differ by less than picard_tol (scaled down with the window's
/// magnitude once that drops below one), warm started from the previous
/// iterate. x(0) equals phi's value at zero exactly; the history samples are
/// carried into the returned trajectory unchanged.
Trajectory solve_forced_G(const StieltjesKernel& k, const History& phi,
                          const std::vector<Vec>& G, double T, const SolverConfig& cfg = {});

/// G identically zero. Shares the code path of solve_forced_G bit for bit.
Trajectory solve_homogeneous(const StieltjesKernel& k, const History& phi, double T,
                             const SolverConfig& cfg = {});

/// Integrable forcing g entering through its cumulative integral: solves the
/// same equation with G = volterra(g).
Trajectory solve_forced_g(const StieltjesKernel& k, const History& phi,
                          const std::vector<Vec>& g, double T, const SolverConfig& cfg = {});

/// sup over t in [0, T] of exp(-gamma t) |x(t)|. Requires a trajectory whose
/// history part vanishes identically; for those the weighted sup over states
/// equals the weighted sup over segments, which is what the norm means.
double gamma_norm(const Trajectory& x, double gamma);

}  // namespace retarda
