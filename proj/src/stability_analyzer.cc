#include "retarda/stability_analyzer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "retarda/errors.hpp"
#include "retarda/mild_solver.hpp"

namespace retarda {

namespace {

double mat_norm(const Mat& A) { return A.lpNorm<Eigen::Infinity>(); }

/// Nodes the envelope line is fitted through: non-strict local maxima of f
/// inside [m_lo, m_hi], or the whole window when fewer than two exist.
std::vector<int> crest_nodes(const std::vector<double>& f, int m_lo, int m_hi) {
  std::vector<int> pts;
  const int last = static_cast<int>(f.size()) - 1;
  for (int m = std::max(m_lo, 1); m <= std::min(m_hi, last - 1); ++m)
    if (f[m] >= f[m - 1] && f[m] >= f[m + 1]) pts.push_back(m);
  if (pts.size() < 2) {
    pts.clear();
    for (int m = m_lo; m <= m_hi; ++m) pts.push_back(m);
  }
  return pts;
}

std::vector<double> log_at(const std::vector<double>& f, const std::vector<int>& pts) {
  std::vector<double> y(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) {
    if (!(f[pts[i]] > 0.0))
      throw solver_error("envelope fit: series vanishes at a fit node, no log-envelope exists");
    y[i] = std::log(f[pts[i]]);
  }
  return y;
}

/// Smallest constant, at least 1, with f(t) <= C exp(-alpha t) on [0, T].
double min_envelope_constant(const std::vector<double>& f, double h, int m_hi, double alpha) {
  double C = 1.0;
  for (int m = 0; m <= m_hi; ++m) C = std::max(C, f[m] * std::exp(alpha * (m * h)));
  return C;
}

DecayFit fit_series(const std::vector<double>& f, double h, int m_lo, int m_hi) {
  if (m_hi - m_lo < 1) throw validation_error("envelope fit: window holds fewer than two nodes");
  const std::vector<int> pts = crest_nodes(f, m_lo, m_hi);
  const std::vector<double> y = log_at(f, pts);

  double tbar = 0.0, ybar = 0.0;
  for (size_t i = 0; i < pts.size(); ++i) {
    tbar += pts[i] * h;
    ybar += y[i];
  }
  tbar /= static_cast<double>(pts.size());
  ybar /= static_cast<double>(pts.size());
  double sxx = 0.0, sxy = 0.0;
  for (size_t i = 0; i < pts.size(); ++i) {
    const double dt = pts[i] * h - tbar;
    sxx += dt * dt;
    sxy += dt * (y[i] - ybar);
  }
  if (sxx == 0.0) throw solver_error("envelope fit: fit nodes are collinear in time");
  const double slope = sxy / sxx;
  const double intercept = ybar - slope * tbar;

  DecayFit out;
  out.alpha = -slope;
  out.M = min_envelope_constant(f, h, m_hi, out.alpha);
  out.residual = 0.0;
  for (size_t i = 0; i < pts.size(); ++i)
    out.residual = std::max(out.residual, std::abs(y[i] - (intercept + slope * pts[i] * h)));
  out.t_min = m_lo * h;
  out.T = m_hi * h;
  return out;
}

/// Misfit against a line of prescribed slope, intercept chosen least-squares.
double residual_with_rate(const std::vector<double>& f, double h, int m_lo, int m_hi,
                          double alpha) {
  const std::vector<int> pts = crest_nodes(f, m_lo, m_hi);
  const std::vector<double> y = log_at(f, pts);
  double intercept = 0.0;
  for (size_t i = 0; i < pts.size(); ++i) intercept += y[i] + alpha * pts[i] * h;
  intercept /= static_cast<double>(pts.size());
  double res = 0.0;
  for (size_t i = 0; i < pts.size(); ++i)
    res = std::max(res, std::abs(y[i] - (intercept - alpha * pts[i] * h)));
  return res;
}

std::vector<double> forward_norms(const MatrixTrajectory& X, int m_hi) {
  std::vector<double> f(m_hi + 1);
  for (int m = 0; m <= m_hi; ++m) f[m] = mat_norm(X.samples[X.grid.N + m]);
  return f;
}

}  // namespace

DecayFit fit_exponential_envelope(const MatrixTrajectory& X, double t_min, double T) {
  if (!(t_min >= 0.0) || !(t_min < T))
    throw validation_error("envelope fit: need 0 <= t_min < T");
  const GridSpec& g = X.grid;
  const int m_lo = g.node_of_time(t_min);
  const int m_hi = g.node_of_time(T);
  return fit_series(forward_norms(X, m_hi), g.h, m_lo, m_hi);
}

DecayFit history_envelope(const MatrixTrajectory& X, double T) {
  const GridSpec& g = X.grid;
  const int m_hi = g.node_of_time(T);
  if (g.time(m_hi) <= g.r)
    throw validation_error("history envelope: horizon must exceed the delay interval");

  // Trailing-window sup; global index m + j sweeps X(t + theta_j).
  std::vector<double> hsup(m_hi + 1, 0.0);
  for (int m = 0; m <= m_hi; ++m)
    for (int j = 0; j <= g.N; ++j) hsup[m] = std::max(hsup[m], mat_norm(X.samples[m + j]));

  const DecayFit point = fit_exponential_envelope(X, g.r, T);
  DecayFit out;
  out.alpha = point.alpha;
  out.M = min_envelope_constant(hsup, g.h, m_hi, out.alpha);
  out.residual = residual_with_rate(hsup, g.h, g.N, m_hi, out.alpha);
  out.t_min = g.r;
  out.T = g.time(m_hi);
  return out;
}

std::vector<History> standard_probe_set(int n, const GridSpec& grid) {
  if (n < 1) throw validation_error("probe set: dimension must be positive");
  std::vector<History> probes;
  probes.reserve(4 * static_cast<size_t>(n));
  for (int j = 0; j < n; ++j) {
    Vec e = Vec::Zero(n);
    e(j) = 1.0;
    probes.push_back(constant_history(e, grid));
    probes.push_back(constant_history(-e, grid));
  }
  for (int j = 0; j < n; ++j) {
    Vec e = Vec::Zero(n);
    e(j) = 1.0;
    probes.push_back(sinusoid_history(e, 1.0 + j, 0.0, grid));
  }
  for (int j = 0; j < n; ++j) {
    std::vector<Vec> ramp(grid.N + 1);
    for (int i = 0; i <= grid.N; ++i) {
      Vec v = Vec::Zero(n);
      v(j) = static_cast<double>(i) / grid.N;
      ramp[i] = v;
    }
    probes.push_back(sampled_history(ramp, ramp.back(), grid));
  }
  return probes;
}

DecayFit semigroup_decay(const StieltjesKernel& k, double T,
                         const std::vector<History>& probes) {
  if (probes.empty()) throw validation_error("semigroup decay: probe set is empty");
  if (!(T > k.r)) throw validation_error("semigroup decay: horizon must exceed the delay interval");
  const GridSpec g(k.r, k.N, T);

  std::vector<double> ratio(g.M + 1, 0.0);
  for (const History& phi : probes) {
    if (phi.dim() != k.n) throw validation_error("semigroup decay: probe dimension mismatch");
    if (phi.grid.N != k.N || std::abs(phi.grid.r - k.r) > 1e-12 * k.r)
      throw validation_error("semigroup decay: probe grid does not match the kernel");
    if (!phi.continuous_at_zero())
      throw validation_error("semigroup decay: probes must be continuous");
    const double denom = phi.sup_norm();
    if (!(denom > 0.0)) throw validation_error("semigroup decay: probe is identically zero");

    History ph = phi;
    ph.grid = g;
    const Trajectory x = solve_homogeneous(k, ph, T);
    for (int m = 0; m <= g.M; ++m)
      ratio[m] = std::max(ratio[m], segment_sup_norm(x, g.time(m)) / denom);
  }
  return fit_series(ratio, g.h, g.N, g.M);
}

DecayFit semigroup_decay(const StieltjesKernel& k, double T) {
  const GridSpec g(k.r, k.N, T);
  return semigroup_decay(k, T, standard_probe_set(k.n, g));
}

DecayFit semigroup_envelope(const DecayFit& history_fit, double variation, double r) {
  if (!(variation >= 0.0)) throw validation_error("semigroup envelope: variation must be nonnegative");
  if (!(r > 0.0)) throw validation_error("semigroup envelope: r must be positive");
  const double a = history_fit.alpha;
  // integral of exp(alpha u) over [0, r]; the alpha = 0 limit is r
  const double ramp = (a == 0.0) ? r : std::expm1(a * r) / a;
  DecayFit out = history_fit;
  out.M = history_fit.M * (1.0 + variation * ramp);
  return out;
}

DecayFit fundamental_envelope_from_semigroup(const DecayFit& semigroup_fit,
                                             const MatrixTrajectory& X) {
  const GridSpec& g = X.grid;
  const int m_r = std::min(g.N, g.M);
  double sup_r = 0.0;
  for (int m = 0; m <= m_r; ++m) sup_r = std::max(sup_r, mat_norm(X.samples[g.N + m]));
  DecayFit out = semigroup_fit;
  out.M = std::max(1.0, semigroup_fit.M * std::exp(semigroup_fit.alpha * g.r) * sup_r);
  return out;
}

namespace {

std::vector<double> gronwall_impl(const std::vector<double>& alpha0,
                                  const std::vector<double>& beta, double u_a_norm,
                                  const GridSpec& grid) {
  const size_t want = static_cast<size_t>(grid.M) + 1;
  if (alpha0.size() != want) throw validation_error("gronwall: alpha grid function has wrong length");
  if (beta.size() != want) throw validation_error("gronwall: beta grid function has wrong length");
  if (!(u_a_norm >= 0.0)) throw validation_error("gronwall: u_a_norm must be nonnegative");
  for (size_t i = 0; i < want; ++i)
    if (!(beta[i] >= 0.0)) throw validation_error("gronwall: beta must be nonnegative");
  for (size_t i = 1; i < want; ++i)
    if (alpha0[i] < alpha0[i - 1])
      throw validation_error("gronwall: alpha must be nondecreasing for the memory form");

  std::vector<double> B(want, 0.0);
  for (size_t i = 1; i < want; ++i)
    B[i] = B[i - 1] + 0.5 * grid.h * (beta[i - 1] + beta[i]);

  std::vector<double> out(want);
  for (size_t i = 0; i < want; ++i)
    out[i] = std::max(u_a_norm, alpha0[i]) * std::exp(B[i]);
  return out;
}

}  // namespace

std::vector<double> gronwall_bound(double alpha0, const std::vector<double>& beta,
                                   double u_a_norm, const GridSpec& grid) {
  return gronwall_impl(std::vector<double>(static_cast<size_t>(grid.M) + 1, alpha0), beta,
                       u_a_norm, grid);
}

std::vector<double> gronwall_bound(const std::vector<double>& alpha0,
                                   const std::vector<double>& beta, double u_a_norm,
                                   const GridSpec& grid) {
  return gronwall_impl(alpha0, beta, u_a_norm, grid);
}

namespace {

MarginReport verify_impl(const Trajectory& x, const std::vector<double>& bound) {
  MarginReport rep;
  rep.margins.resize(static_cast<size_t>(x.grid.M) + 1);
  rep.min_margin = std::numeric_limits<double>::infinity();
  for (int m = 0; m <= x.grid.M; ++m) {
    rep.margins[m] = bound[m] - segment_sup_norm(x, x.grid.time(m));
    rep.min_margin = std::min(rep.min_margin, rep.margins[m]);
  }
  rep.pass = rep.min_margin >= -1e-9;
  return rep;
}

}  // namespace

MarginReport verify_gronwall(const Trajectory& x, double alpha0,
                             const std::vector<double>& beta) {
  return verify_impl(x, gronwall_bound(alpha0, beta, segment_sup_norm(x, 0.0), x.grid));
}

MarginReport verify_gronwall(const Trajectory& x, const std::vector<double>& alpha0,
                             const std::vector<double>& beta) {
  return verify_impl(x, gronwall_bound(alpha0, beta, segment_sup_norm(x, 0.0), x.grid));
}

}  // namespace retarda
