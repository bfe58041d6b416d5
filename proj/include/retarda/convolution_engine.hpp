#pragma once

#include <string>
#include <vector>

#include "retarda/linalg.hpp"
#include "retarda/stieltjes_kernel.hpp"

namespace retarda {

/// Cumulative trapezoid integral on a uniform forward grid; result[0] = 0.
std::vector<double> volterra(const std::vector<double>& f, double h);
std::vector<Vec> volterra(const std::vector<Vec>& f, double h);
std::vector<Mat> volterra(const std::vector<Mat>& f, double h);

/// Finite convolution (g * f)(t) = integral of g(t - u) f(u) du over [0, t],
/// composite trapezoid, direct summation. Inputs share one uniform grid.
std::vector<double> convolve(const std::vector<double>& g, const std::vector<double>& f, double h);
std::vector<Vec> convolve(const std::vector<Mat>& g, const std::vector<Vec>& f, double h);
std::vector<Mat> convolve(const std::vector<Mat>& g, const std::vector<Mat>& f, double h);

/// Convolution against a measure: (dalpha * f)(t) = sum of atom masses times
/// f(t - u_k) over atoms with u_k <= t, plus the trapezoid integral of the
/// density part over [0, min(t, r)]. The measure lives on [0, r] and the
/// integral never reaches past r.
std::vector<double> rs_convolve(const ReversedKernel& alpha, const std::vector<double>& f);
std::vector<Vec> rs_convolve(const ReversedKernel& alpha, const std::vector<Vec>& f);
std::vector<Mat> rs_convolve(const ReversedKernel& alpha, const std::vector<Mat>& f);

/// Convolution with a locally BV factor represented as its value at 0 plus
/// its derivative measure: (g * f) = g(0) (Vf) + (dg * Vf). Keeps second
/// order accuracy even when g itself has jumps, which a sampled g cannot.
std::vector<double> bv_convolve(double g0, const ReversedKernel& dg, const std::vector<double>& f);
std::vector<Vec> bv_convolve(const Mat& g0, const ReversedKernel& dg, const std::vector<Vec>& f);
std::vector<Mat> bv_convolve(const Mat& g0, const ReversedKernel& dg, const std::vector<Mat>& f);

/// One named residual from the identity battery.
struct IdentityReport {
  struct Item {
    std::string name;
    double residual = 0.0;
  };
  std::vector<Item> items;
  /// Per-node residual traces in the same order as items (diagnostic CSV).
  std::vector<std::vector<double>> traces;
  [[nodiscard]] double max_residual() const;
};

/// Evaluates the algebraic identities tying together volterra, convolve,
/// rs_convolve and bv_convolve on scalar fixtures:
///   V(dalpha * f) = dalpha * (Vf)
///   g_bv * f      = g_bv(0) Vf + dalpha * (Vf),  g_bv built from alpha
///   V(g * f)      = g * (Vf) = (Vg) * f
///   dalpha * (g * f) = (dalpha * g) * f
///   |g * f|_L1   <= |g|_L1 |f|_L1  (reported as the violation margin)
///   (g * f)'      = g(0) f + g' * f  (central differences, interior nodes)
/// f and g are sampled on a uniform grid of step h covering [0, T]. The
/// sup residuals are second order in h for smooth f, g and a smooth alpha
/// density; atoms away from 0 degrade the materialized-g comparison to first
/// order, so tight tolerances belong with density-only fixtures.
IdentityReport check_convolution_identities(const ReversedKernel& alpha,
                                            const std::vector<double>& f,
                                            const std::vector<double>& g, double h);

}  // namespace retarda
