#include "retarda/mild_solver.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "retarda/convolution_engine.hpp"
#include "retarda/errors.hpp"

namespace retarda {

namespace {

void check_compatible(const StieltjesKernel& k, const History& phi) {
  if (phi.dim() != k.n) throw validation_error("solver: history dimension differs from kernel");
  if (phi.grid.N != k.N || std::abs(phi.grid.r - k.r) > 1e-12 * k.r)
    throw grid_error("solver: history grid differs from kernel grid");
  if (static_cast<int>(phi.samples.size()) != phi.grid.N + 1)
    throw validation_error("solver: history sample count differs from N + 1");
}

int window_nodes(const StieltjesKernel& k, const GridSpec& g, const SolverConfig& cfg) {
  const double var = total_variation(k);
  double window = cfg.window;
  if (window == 0.0) {
    window = var > 0.0 ? std::min(k.r, 0.5 / var) : k.r;
  } else {
    if (!(window > 0.0)) throw validation_error("solver.window: must be positive");
    if (var * window >= 1.0)
      throw validation_error("solver.window: contraction requires total_variation * window < 1");
  }
  return std::max(1, static_cast<int>(std::floor(window / g.h + 1e-9)));
}

}  // namespace

Trajectory solve_forced_G(const StieltjesKernel& k, const History& phi,
                          const std::vector<Vec>& G, double T, const SolverConfig& cfg) {
  check_compatible(k, phi);
  if (!(cfg.picard_tol > 0.0)) throw validation_error("solver.picard_tol: must be positive");
  if (cfg.max_picard_iters < 1) throw validation_error("solver.max_picard_iters: must be positive");

  GridSpec g(phi.grid.r, phi.grid.N, T);
  const int N = g.N, M = g.M, total = N + M + 1;
  const double h = g.h;

  if (static_cast<int>(G.size()) != M + 1)
    throw validation_error("solver: forcing sample count differs from M + 1");
  double gsup = 0.0;
  for (const auto& v : G) {
    if (v.size() != k.n) throw validation_error("solver: forcing dimension differs from kernel");
    gsup = std::max(gsup, vnorm(v));
  }
  if (vnorm(G[0]) > 1e-12 * std::max(1.0, gsup))
    throw validation_error("solver: forcing must vanish at t = 0");

  const int W = window_nodes(k, g, cfg);

  Trajectory x;
  x.grid = g;
  x.samples.assign(total, Vec::Zero(k.n));
  for (int j = 0; j < N; ++j) x.samples[j] = phi.samples[j];
  x.samples[N] = phi.value_at_zero;
  if (!phi.continuous_at_zero()) x.value_at_zero_minus = phi.samples[N];

  const bool dens = !k.density.empty();
  const Vec phi0 = phi.value_at_zero;
  std::vector<Vec> fresh(W + 1, Vec::Zero(k.n));

  // Cumulative trapezoid restarted at each window's reachback start. The
  // update below only uses differences of D taken inside one window span, so
  // for decaying solutions every term stays on the local magnitude scale
  // instead of cancelling between saturated global integrals. The cell ending
  // at node N integrates the history's L1 representative, not the present
  // value.
  std::vector<Vec> D(total, Vec::Zero(k.n));
  auto cell_right = [&](int gi) -> const Vec& {
    return (gi == N && x.value_at_zero_minus) ? *x.value_at_zero_minus : x.samples[gi];
  };

  int s = N;
  while (s < N + M) {
    const int e = std::min(s + W, N + M);
    const int base = s - N;
    const int m_s = base;
    D[base].setZero();
    for (int gi = base + 1; gi <= s; ++gi)
      D[gi] = D[gi - 1] + (0.5 * h) * (x.samples[gi - 1] + cell_right(gi));

    // Window-constant part of the density term, hoisted out of the sweeps.
    Vec ballast = Vec::Zero(k.n);
    if (dens) {
      Vec acc = Vec::Zero(k.n);
      acc.noalias() += 0.5 * (k.density[0] * D[base]);
      for (int j = 1; j < N; ++j) acc.noalias() += k.density[j] * D[base + j];
      acc.noalias() += 0.5 * (k.density[N] * D[base + N]);
      ballast = h * acc;
    }

    const Vec anchor = x.samples[s];
    double scale_fixed = vnorm(anchor);
    for (int gi = s + 1; gi <= e; ++gi)
      scale_fixed = std::max(scale_fixed, vnorm(G[gi - N] - G[m_s]));

    if (cfg.seed == PicardSeed::constant) {
      for (int gi = s + 1; gi <= e; ++gi) x.samples[gi] = anchor;
    } else {
      for (int gi = s + 1; gi <= e; ++gi) x.samples[gi].setZero();
    }

    bool converged = false;
    double diff = 0.0;
    for (int iter = 0; iter < cfg.max_picard_iters; ++iter) {
      for (int gi = s + 1; gi <= e; ++gi)
        D[gi] = D[gi - 1] + (0.5 * h) * (x.samples[gi - 1] + x.samples[gi]);

      diff = 0.0;
      double scale = scale_fixed;
      for (int gi = s + 1; gi <= e; ++gi) {
        const int m = gi - N;
        Vec val = anchor + (G[m] - G[m_s]);
        for (const auto& j : k.jumps)
          val.noalias() += j.weight * (D[m + j.node] - D[m_s + j.node]);
        if (dens) {
          Vec acc = Vec::Zero(k.n);
          acc.noalias() += 0.5 * (k.density[0] * D[m]);
          for (int j = 1; j < N; ++j) acc.noalias() += k.density[j] * D[m + j];
          acc.noalias() += 0.5 * (k.density[N] * D[m + N]);
          val.noalias() += h * acc;
          val -= ballast;
        }
        fresh[gi - s] = std::move(val);
      }
      for (int gi = s + 1; gi <= e; ++gi) {
        diff = std::max(diff, (fresh[gi - s] - x.samples[gi]).lpNorm<Eigen::Infinity>());
        scale = std::max(scale, vnorm(fresh[gi - s]));
        x.samples[gi] = fresh[gi - s];
      }
      // Stop at picard_tol on the window's own magnitude scale: for order-one
      // solutions this is the plain sup-change rule, for deeply decayed ones
      // it keeps contracting instead of accepting the seed.
      if (diff <= cfg.picard_tol * std::min(1.0, scale)) {
        converged = true;
        break;
      }
    }
    if (!converged)
      throw solver_error("solver: Picard iteration did not reach tolerance in " +
                         std::to_string(cfg.max_picard_iters) +
                         " sweeps, last residual " + std::to_string(diff));
    s = e;
  }
  return x;
}

Trajectory solve_homogeneous(const StieltjesKernel& k, const History& phi, double T,
                             const SolverConfig& cfg) {
  GridSpec g(phi.grid.r, phi.grid.N, T);
  const std::vector<Vec> zero(g.M + 1, Vec::Zero(k.n));
  return solve_forced_G(k, phi, zero, T, cfg);
}

Trajectory solve_forced_g(const StieltjesKernel& k, const History& phi,
                          const std::vector<Vec>& gsmall, double T, const SolverConfig& cfg) {
  GridSpec g(phi.grid.r, phi.grid.N, T);
  if (static_cast<int>(gsmall.size()) != g.M + 1)
    throw validation_error("solver: forcing sample count differs from M + 1");
  return solve_forced_G(k, phi, volterra(gsmall, g.h), T, cfg);
}

double gamma_norm(const Trajectory& x, double gamma) {
  const auto& g = x.grid;
  // The initial segment must be zero as an integrable function. Its value at
  // t = 0 is the recorded left limit when the start is discontinuous and the
  // present value x(0) otherwise.
  for (int j = 0; j < g.N; ++j)
    if (vnorm(x.samples[j]) != 0.0)
      throw validation_error("gamma_norm: history part must vanish identically");
  const Vec& at_zero = x.value_at_zero_minus ? *x.value_at_zero_minus : x.samples[g.N];
  if (vnorm(at_zero) != 0.0)
    throw validation_error("gamma_norm: history part must vanish identically");
  double s = 0.0;
  for (int m = 0; m <= g.M; ++m)
    s = std::max(s, std::exp(-gamma * g.time(m)) * vnorm(x.samples[g.N + m]));
  return s;
}

}  // namespace retarda
