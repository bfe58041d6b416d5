#include "retarda/fundamental_matrix.hpp"

#include <algorithm>
#include <cmath>

#include "retarda/errors.hpp"

namespace retarda {

MatrixTrajectory principal_fundamental(const StieltjesKernel& k, double T,
                                       const SolverConfig& cfg) {
  GridSpec g(k.r, k.N, T);
  MatrixTrajectory X;
  X.grid = g;
  X.samples.assign(g.N + g.M + 1, Mat::Zero(k.n, k.n));
  X.value_at_zero_minus = Mat::Zero(k.n, k.n);
  for (int j = 0; j < k.n; ++j) {
    Vec ej = Vec::Zero(k.n);
    ej(j) = 1.0;
    const Trajectory col = solve_homogeneous(k, instantaneous(ej, g), T, cfg);
    for (int gi = 0; gi <= g.N + g.M; ++gi) X.samples[gi].col(j) = col.samples[gi];
  }
  return X;
}

MatrixTrajectory fundamental_derivative(const StieltjesKernel& k, const MatrixTrajectory& X) {
  const auto& g = X.grid;
  if (g.N != k.N || std::abs(g.r - k.r) > 1e-12 * k.r)
    throw grid_error("fundamental_derivative: trajectory grid differs from kernel grid");
  if (X.dim() != k.n)
    throw validation_error("fundamental_derivative: dimension differs from kernel");

  MatrixTrajectory D;
  D.grid = g;
  D.samples.assign(g.N + g.M + 1, Mat::Zero(k.n, k.n));

  const bool dens = !k.density.empty();
  for (int m = 0; m <= g.M; ++m) {
    const int jlo = std::max(g.N - m, 0);  // theta >= max(-t, -r)
    Mat acc = Mat::Zero(k.n, k.n);
    for (const auto& j : k.jumps)
      if (j.node >= jlo) acc.noalias() += j.weight * X.samples[m + j.node];
    if (dens && jlo < g.N) {
      Mat dacc = Mat::Zero(k.n, k.n);
      dacc.noalias() += 0.5 * (k.density[jlo] * X.samples[m + jlo]);
      for (int j = jlo + 1; j < g.N; ++j) dacc.noalias() += k.density[j] * X.samples[m + j];
      dacc.noalias() += 0.5 * (k.density[g.N] * X.samples[m + g.N]);
      acc += g.h * dacc;
    }
    D.samples[g.N + m] = acc;
  }

  // The atom at theta_k enters the integration range exactly at t = -theta_k,
  // so the derivative jumps there by weight * X(0) = weight.
  for (const auto& j : k.jumps) {
    if (j.node == g.N) continue;  // atom at 0 is present from t = 0 on
    const int m = g.N - j.node;
    if (m > g.M) continue;
    D.breakpoint_nodes.push_back(m);
    D.left_values.push_back(D.samples[g.N + m] - j.weight);
  }
  // Atoms are sorted by theta ascending, so breakpoints came out descending.
  std::reverse(D.breakpoint_nodes.begin(), D.breakpoint_nodes.end());
  std::reverse(D.left_values.begin(), D.left_values.end());
  return D;
}

Mat expm_oracle(const Mat& A, double t) {
  if (A.rows() != A.cols()) throw validation_error("expm_oracle: matrix must be square");
  const int n = static_cast<int>(A.rows());
  Mat B = t * A;
  const double norm = opnorm(B);
  int s = 0;
  if (norm > 0.5) s = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  B /= std::pow(2.0, s);

  Mat sum = Mat::Identity(n, n);
  Mat term = Mat::Identity(n, n);
  for (int j = 1; j <= 60; ++j) {
    term = (term * B) / static_cast<double>(j);
    sum += term;
    if (term.cwiseAbs().maxCoeff() < 1e-20) break;
  }
  for (int j = 0; j < s; ++j) sum = sum * sum;
  return sum;
}

double pure_delay_series(double b, double tau, double t) {
  if (!(tau > 0.0)) throw validation_error("pure_delay_series: tau must be positive");
  if (t < 0.0) return 0.0;
  double acc = 0.0;
  double factorial = 1.0;
  for (int kk = 0; kk * tau <= t + 1e-12 * (1.0 + t); ++kk) {
    if (kk > 0) factorial *= kk;
    acc += std::pow(b, kk) * std::pow(std::max(0.0, t - kk * tau), kk) / factorial;
    if (kk > 100000) throw solver_error("pure_delay_series: too many terms");
  }
  return acc;
}

}  // namespace retarda
