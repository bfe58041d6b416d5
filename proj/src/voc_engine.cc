#include "retarda/voc_engine.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "retarda/convolution_engine.hpp"
#include "retarda/errors.hpp"

namespace retarda {

namespace {

void check_kernel_history(const StieltjesKernel& k, const History& phi, const char* who) {
  if (phi.grid.N != k.N || std::abs(phi.grid.r - k.r) > 1e-12 * k.r)
    throw grid_error(std::string(who) + ": history grid differs from kernel grid");
  if (phi.dim() != k.n)
    throw validation_error(std::string(who) + ": history dimension differs from kernel");
}

void check_kernel_matrix(const StieltjesKernel& k, const MatrixTrajectory& X, const char* who) {
  if (X.grid.N != k.N || std::abs(X.grid.r - k.r) > 1e-12 * k.r)
    throw grid_error(std::string(who) + ": trajectory grid differs from kernel grid");
  if (X.dim() != k.n)
    throw validation_error(std::string(who) + ": trajectory dimension differs from kernel");
}

void require_continuous(const History& phi, const char* who) {
  if (!phi.continuous_at_zero())
    throw validation_error(std::string(who) +
                           ": history is discontinuous at 0, only the cumulative "
                           "form G_ell is defined for it");
}

void check_forcing_size(const std::vector<Vec>& G, int M, const char* who) {
  if (static_cast<int>(G.size()) != M + 1)
    throw validation_error(std::string(who) + ": forcing sample count differs from M + 1");
}

void check_starts_at_zero(const std::vector<Vec>& G, const char* who) {
  double sup = 0.0;
  for (const auto& v : G) sup = std::max(sup, vnorm(v));
  if (vnorm(G[0]) > 1e-12 * (1.0 + sup))
    throw validation_error(std::string(who) + ": cumulative forcing must vanish at 0");
}

std::vector<Mat> forward_samples(const MatrixTrajectory& X) {
  return {X.samples.begin() + X.grid.N, X.samples.end()};
}

/// (X' * F)(t_m) by composite trapezoid, with the recorded one-sided limits
/// folded in: replacing the stored right limit at an interior delay node by
/// the mean of the two limits cancels the O(h) cell errors pairwise. The
/// replacement enters as one rank-of-h correction per (drop, m) pair.
std::vector<Vec> convolve_derivative(const MatrixTrajectory& Xdot, const std::vector<Vec>& F) {
  const auto& g = Xdot.grid;
  const int M = static_cast<int>(F.size()) - 1;
  const int n = Xdot.dim();
  std::vector<Vec> out(M + 1, Vec::Zero(n));
  for (int m = 1; m <= M; ++m) {
    Vec acc = 0.5 * (Xdot.samples[g.N] * F[m] + Xdot.samples[g.N + m] * F[0]);
    for (int j = 1; j < m; ++j) acc.noalias() += Xdot.samples[g.N + j] * F[m - j];
    out[m] = g.h * acc;
  }
  for (size_t i = 0; i < Xdot.breakpoint_nodes.size(); ++i) {
    const int jb = Xdot.breakpoint_nodes[i];
    const Mat corr = 0.5 * g.h * (Xdot.left_values[i] - Xdot.samples[g.N + jb]);
    for (int m = jb + 1; m <= M; ++m) out[m].noalias() += corr * F[m - jb];
  }
  return out;
}

/// Shared tail of the cumulative-forcing assemblies.
Trajectory assemble(const MatrixTrajectory& X, const History& phi, const std::vector<Vec>& Gtot,
                    const std::vector<Vec>& conv, int M) {
  const auto& g = X.grid;
  Trajectory x;
  x.grid = GridSpec(g.r, g.N, M * g.h);
  x.samples.resize(g.N + M + 1);
  for (int j = 0; j <= g.N; ++j) x.samples[j] = phi.samples[j];
  for (int m = 0; m <= M; ++m)
    x.samples[g.N + m] = X.samples[g.N + m] * phi.value_at_zero + Gtot[m] + conv[m];
  x.samples[g.N] = phi.value_at_zero;  // exact: X(0) = I and both forcings vanish at 0
  if (!phi.continuous_at_zero()) x.value_at_zero_minus = phi.samples[g.N];
  return x;
}

}  // namespace

std::vector<Vec> g_ell(const StieltjesKernel& k, const History& phi) {
  check_kernel_history(k, phi, "g_ell");
  require_continuous(phi, "g_ell");
  const int N = k.N;
  std::vector<Vec> out(N + 1, Vec::Zero(k.n));
  std::vector<Vec> f(N + 1, Vec::Zero(k.n));
  for (int ms = 0; ms <= N; ++ms) {
    for (int j = 0; j <= N; ++j)
      f[j] = (j + ms <= N) ? phi.samples[j + ms] : Vec::Zero(k.n);
    Vec val = rs_integrate(k, f, -k.r, k.theta(N - ms));
    // An atom exactly at -t belongs to the right limit: drop it again.
    for (const auto& jp : k.jumps)
      if (jp.node == N - ms) val.noalias() -= jp.weight * f[N - ms];
    out[ms] = val;
  }
  return out;
}

std::vector<Vec> g_ell_prolonged(const StieltjesKernel& k, const History& phi) {
  check_kernel_history(k, phi, "g_ell_prolonged");
  require_continuous(phi, "g_ell_prolonged");
  const int N = k.N;
  const bool dens = !k.density.empty();
  std::vector<Vec> out(N + 1, Vec::Zero(k.n));
  std::vector<Vec> f(N + 1, Vec::Zero(k.n));
  for (int ms = 0; ms <= N; ++ms) {
    for (int j = 0; j <= N; ++j)
      f[j] = (j + ms <= N) ? phi.samples[j + ms] : phi.value_at_zero;
    Vec val = apply_functional(k, f);
    // Mass the kernel carries on [-t, 0], the atom at -t included.
    Mat xi = Mat::Zero(k.n, k.n);
    for (const auto& jp : k.jumps)
      if (jp.node >= N - ms) xi += jp.weight;
    if (dens && ms >= 1) {
      Mat d = 0.5 * (k.density[N - ms] + k.density[N]);
      for (int j = N - ms + 1; j < N; ++j) d += k.density[j];
      xi += k.h * d;
    }
    out[ms] = val - xi * phi.value_at_zero;
  }
  return out;
}

std::vector<Vec> G_ell(const StieltjesKernel& k, const History& phi, double T) {
  check_kernel_history(k, phi, "G_ell");
  const GridSpec g(phi.grid.r, phi.grid.N, T);
  const int N = g.N, M = g.M;

  const Trajectory xbar = constant_prolongation(phi, g.T);
  const std::vector<Vec> C = cumulative_integral(xbar);

  // Integrated density mass: D(t) = integral of A over [-t, 0], frozen past
  // t = r, then its own cumulative integral.
  std::vector<Mat> Dcum;
  if (!k.density.empty()) {
    std::vector<Mat> D(M + 1, Mat::Zero(k.n, k.n));
    for (int m = 1; m <= std::min(N, M); ++m)
      D[m] = D[m - 1] + 0.5 * g.h * (k.density[N - m] + k.density[N - m + 1]);
    for (int m = N + 1; m <= M; ++m) D[m] = D[N];
    Dcum = volterra(D, g.h);
  }

  std::vector<Vec> S(N + 1);
  std::vector<Vec> out(M + 1);
  for (int m = 0; m <= M; ++m) {
    for (int j = 0; j <= N; ++j) S[j] = C[m + j] - C[j];
    Vec val = apply_functional(k, S);
    // Integrated atom mass: each atom contributes its weight times the ramp
    // max(0, t - tau_k), exact in closed form.
    Vec ramp = Vec::Zero(k.n);
    for (const auto& jp : k.jumps) {
      const int dk = N - jp.node;
      if (m > dk) ramp.noalias() += jp.weight * (g.h * (m - dk) * phi.value_at_zero);
    }
    val -= ramp;
    if (!Dcum.empty()) val.noalias() -= Dcum[m] * phi.value_at_zero;
    out[m] = val;
  }
  return out;
}

std::vector<Vec> G_ell_reference(const StieltjesKernel& k, const History& phi, double T) {
  check_kernel_history(k, phi, "G_ell_reference");
  const GridSpec g(phi.grid.r, phi.grid.N, T);
  const int N = g.N, M = g.M;

  std::vector<Vec> Cphi(N + 1, Vec::Zero(k.n));
  for (int j = 1; j <= N; ++j)
    Cphi[j] = Cphi[j - 1] + 0.5 * g.h * (phi.samples[j - 1] + phi.samples[j]);

  std::vector<Vec> inner(N + 1);
  std::vector<Vec> out(M + 1);
  for (int m = 0; m <= M; ++m) {
    for (int j = 0; j <= N; ++j) inner[j] = Cphi[std::min(m + j, N)] - Cphi[j];
    out[m] = apply_functional(k, inner);
  }
  return out;
}

ForcingPair history_forcing(const StieltjesKernel& k, const History& phi, double T) {
  check_kernel_history(k, phi, "history_forcing");
  require_continuous(phi, "history_forcing");
  ForcingPair fp;
  fp.grid = GridSpec(phi.grid.r, phi.grid.N, T);
  const std::vector<Vec> gl = g_ell(k, phi);
  fp.gl.assign(fp.grid.M + 1, Vec::Zero(k.n));
  for (int m = 0; m <= std::min(fp.grid.N, fp.grid.M); ++m) fp.gl[m] = gl[m];
  fp.GL = G_ell(k, phi, T);
  return fp;
}

std::vector<std::pair<int, Vec>> forcing_drops(const StieltjesKernel& k, const History& phi) {
  check_kernel_history(k, phi, "forcing_drops");
  require_continuous(phi, "forcing_drops");
  std::vector<std::pair<int, Vec>> drops;
  // Atoms sorted by theta ascending give drops descending in node.
  for (auto it = k.jumps.rbegin(); it != k.jumps.rend(); ++it) {
    if (it->node == k.N) continue;  // an atom at 0 never enters g_ell
    drops.emplace_back(k.N - it->node, Vec(it->weight * phi.value_at_zero));
  }
  return drops;
}

std::vector<Vec> volterra_with_drops(const std::vector<Vec>& f, double h,
                                     const std::vector<std::pair<int, Vec>>& drops) {
  std::vector<Vec> V = volterra(f, h);
  const int M = static_cast<int>(V.size()) - 1;
  for (const auto& [node, delta] : drops) {
    if (node < 1 || node > M) continue;
    const Vec add = 0.5 * h * delta;
    for (int m = node; m <= M; ++m) V[m] += add;
  }
  return V;
}

Trajectory voc_zero_history(const MatrixTrajectory& X, const MatrixTrajectory& Xdot,
                            const std::vector<Vec>& G, double T) {
  if (!X.grid.same_geometry(Xdot.grid))
    throw grid_error("voc_zero_history: X and X' grids disagree");
  const GridSpec g(X.grid.r, X.grid.N, T);
  if (g.M > X.grid.M) throw grid_error("voc_zero_history: horizon exceeds the trajectory");
  check_forcing_size(G, g.M, "voc_zero_history");
  check_starts_at_zero(G, "voc_zero_history");

  const std::vector<Vec> conv = convolve_derivative(Xdot, G);
  Trajectory x;
  x.grid = g;
  x.samples.assign(g.N + g.M + 1, Vec::Zero(X.dim()));
  for (int m = 0; m <= g.M; ++m) x.samples[g.N + m] = G[m] + conv[m];
  if (vnorm(x.samples[g.N]) != 0.0) x.value_at_zero_minus = Vec::Zero(X.dim());
  return x;
}

Trajectory voc_homogeneous(const MatrixTrajectory& X, const MatrixTrajectory& Xdot,
                           const StieltjesKernel& k, const History& phi) {
  check_kernel_matrix(k, X, "voc_homogeneous");
  if (!X.grid.same_geometry(Xdot.grid))
    throw grid_error("voc_homogeneous: X and X' grids disagree");
  check_kernel_history(k, phi, "voc_homogeneous");
  const std::vector<Vec> GL = G_ell(k, phi, X.grid.T);
  const std::vector<Vec> conv = convolve_derivative(Xdot, GL);
  return assemble(X, phi, GL, conv, X.grid.M);
}

Trajectory voc_full(const MatrixTrajectory& X, const MatrixTrajectory& Xdot,
                    const StieltjesKernel& k, const History& phi, const std::vector<Vec>& G) {
  check_kernel_matrix(k, X, "voc_full");
  if (!X.grid.same_geometry(Xdot.grid)) throw grid_error("voc_full: X and X' grids disagree");
  check_kernel_history(k, phi, "voc_full");
  check_forcing_size(G, X.grid.M, "voc_full");
  check_starts_at_zero(G, "voc_full");
  std::vector<Vec> Gtot = G_ell(k, phi, X.grid.T);
  for (size_t m = 0; m < Gtot.size(); ++m) Gtot[m] += G[m];
  const std::vector<Vec> conv = convolve_derivative(Xdot, Gtot);
  return assemble(X, phi, Gtot, conv, X.grid.M);
}

Trajectory voc_kernel_form(const MatrixTrajectory& X, const StieltjesKernel& k,
                           const History& phi, const std::vector<Vec>& g) {
  check_kernel_matrix(k, X, "voc_kernel_form");
  check_kernel_history(k, phi, "voc_kernel_form");
  require_continuous(phi, "voc_kernel_form");
  const auto& gr = X.grid;
  const int M = gr.M, N = gr.N;
  if (!g.empty()) check_forcing_size(g, M, "voc_kernel_form");

  const std::vector<Vec> gl = g_ell(k, phi);
  std::vector<Vec> f(M + 1, Vec::Zero(k.n));
  for (int m = 0; m <= M; ++m) {
    if (m <= N) f[m] = gl[m];
    if (!g.empty()) f[m] += g[m];
  }

  const std::vector<Mat> Xf = forward_samples(X);
  std::vector<Vec> conv = convolve(Xf, f, gr.h);
  // gl stores right limits; crossing a drop the trapezoid misses
  // h/2 * X(t - tau_k) * (atom mass) * phi(0) per cell pair.
  for (const auto& [node, delta] : forcing_drops(k, phi)) {
    if (node > M) continue;
    for (int m = node; m <= M; ++m) conv[m].noalias() += 0.5 * gr.h * (Xf[m - node] * delta);
  }

  Trajectory x;
  x.grid = gr;
  x.samples.resize(N + M + 1);
  for (int j = 0; j <= N; ++j) x.samples[j] = phi.samples[j];
  for (int m = 0; m <= M; ++m) x.samples[N + m] = Xf[m] * phi.value_at_zero + conv[m];
  x.samples[N] = phi.value_at_zero;
  return x;
}

Trajectory naito_formula(const MatrixTrajectory& X, const StieltjesKernel& k,
                         const History& phi) {
  check_kernel_matrix(k, X, "naito_formula");
  check_kernel_history(k, phi, "naito_formula");
  require_continuous(phi, "naito_formula");
  const auto& gr = X.grid;
  const int M = gr.M, N = gr.N;

  std::vector<Vec> Lbar(M + 1);
  std::vector<Vec> f(N + 1);
  for (int mu = 0; mu <= M; ++mu) {
    for (int j = 0; j <= N; ++j)
      f[j] = (j + mu <= N) ? phi.samples[j + mu] : phi.value_at_zero;
    Lbar[mu] = apply_functional(k, f);
  }
  const std::vector<Vec> conv = convolve(forward_samples(X), Lbar, gr.h);

  Trajectory x;
  x.grid = gr;
  x.samples.resize(N + M + 1);
  for (int j = 0; j <= N; ++j) x.samples[j] = phi.samples[j];
  for (int m = 0; m <= M; ++m) x.samples[N + m] = phi.value_at_zero + conv[m];
  return x;
}

Trajectory dd_closed_form(const MatrixTrajectory& X, const StieltjesKernel& k,
                          const History& phi) {
  check_kernel_matrix(k, X, "dd_closed_form");
  check_kernel_history(k, phi, "dd_closed_form");
  if (!k.density.empty())
    throw validation_error("dd_closed_form: kernel has a density part, only discrete "
                           "delays have this closed form");
  const auto& gr = X.grid;
  const int M = gr.M, N = gr.N;

  Trajectory x;
  x.grid = gr;
  x.samples.resize(N + M + 1);
  for (int j = 0; j <= N; ++j) x.samples[j] = phi.samples[j];
  if (!phi.continuous_at_zero()) x.value_at_zero_minus = phi.samples[N];

  for (int m = 0; m <= M; ++m) {
    Vec acc = X.samples[N + m] * phi.value_at_zero;
    for (const auto& jp : k.jumps) {
      if (jp.node == N) continue;  // instantaneous term, lives inside X
      const int dk = N - jp.node;
      const int jmin = jp.node;
      const int jmax = std::min(N, N + m - dk);  // X vanishes left of 0
      if (jmax <= jmin) continue;
      // Trapezoid over theta in [-tau_k, min(0, t - tau_k)] of
      // X(t - tau_k - theta) J_k phi(theta); every evaluation lands on a node.
      Vec s = 0.5 * (X.samples[2 * N + m - dk - jmin] * (jp.weight * phi.samples[jmin]) +
                     X.samples[2 * N + m - dk - jmax] * (jp.weight * phi.samples[jmax]));
      for (int j = jmin + 1; j < jmax; ++j)
        s.noalias() += X.samples[2 * N + m - dk - j] * (jp.weight * phi.samples[j]);
      acc.noalias() += gr.h * s;
    }
    x.samples[N + m] = acc;
  }
  x.samples[N] = phi.value_at_zero;
  return x;
}

}  // namespace retarda
