#pragma once

#include <cmath>
#include <cstdint>

#include "retarda/errors.hpp"

namespace retarda {

/// Uniform grid covering the history interval [-r, 0] and the forward horizon
/// [0, T]. The step h divides both r and T exactly: h = r / N and T = M * h.
/// Node conventions used everywhere in the library:
///   theta node j in [0, N]      <->  theta_j = -r + j * h
///   forward node m in [0, M]    <->  t_m = m * h
///   global node g in [0, N + M] <->  s_g = -r + g * h (history then forward)
/// Delays and evaluation times must land on nodes; off-grid values are
/// rejected rather than interpolated.
struct GridSpec {
  double r = 1.0;
  double h = 1.0 / 256.0;
  int N = 256;
  double T = 1.0;
  int M = 256;

  GridSpec() = default;

  /// Grid with N cells over the history interval and horizon T.
  GridSpec(double r_, int N_, double T_) {
    if (!(r_ > 0.0)) throw validation_error("grid: r must be positive");
    if (N_ < 1) throw validation_error("grid: N must be at least 1");
    if (!(T_ >= 0.0)) throw validation_error("grid: T must be nonnegative");
    r = r_;
    N = N_;
    h = r_ / static_cast<double>(N_);
    M = static_cast<int>(std::llround(T_ / h));
    if (std::abs(M * h - T_) > 1e-9 * (1.0 + std::abs(T_)))
      throw grid_error("grid: T is not an integer multiple of h");
    T = M * h;
  }

  /// Grid with a requested step; h is snapped so that N = r / h is integral.
  static GridSpec with_step(double r_, double h_, double T_) {
    if (!(h_ > 0.0)) throw validation_error("grid: h must be positive");
    const auto cells = static_cast<int>(std::llround(r_ / h_));
    if (cells < 1 || std::abs(cells * h_ - r_) > 1e-9 * (1.0 + r_))
      throw grid_error("grid: r is not an integer multiple of h");
    return GridSpec(r_, cells, T_);
  }

  [[nodiscard]] double theta(int j) const { return -r + j * h; }
  [[nodiscard]] double time(int m) const { return m * h; }
  [[nodiscard]] int total_nodes() const { return N + M + 1; }

  /// Forward node index of t in [0, T]; throws if t is off the grid.
  [[nodiscard]] int node_of_time(double t) const {
    const auto m = static_cast<int>(std::llround(t / h));
    if (m < 0 || m > M || std::abs(m * h - t) > 1e-9 * (1.0 + std::abs(t)))
      throw grid_error("grid: time is not on the grid");
    return m;
  }

  /// Theta node index of th in [-r, 0]; throws if th is off the grid.
  [[nodiscard]] int node_of_theta(double th) const {
    const auto j = static_cast<int>(std::llround((th + r) / h));
    if (j < 0 || j > N || std::abs(theta(j) - th) > 1e-9 * (1.0 + std::abs(th)))
      throw grid_error("grid: theta is not on the grid");
    return j;
  }

  [[nodiscard]] bool same_geometry(const GridSpec& o) const {
    return N == o.N && M == o.M && std::abs(r - o.r) <= 1e-12 * r;
  }
};

}  // namespace retarda
