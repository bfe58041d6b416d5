#include "retarda/nonlinear_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "retarda/errors.hpp"
#include "retarda/fundamental_matrix.hpp"

namespace retarda {

namespace {

std::string time_tag(double t) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", t);
  return buf;
}

Vec eval_pert(const PerturbationSpec& p, int n, double t_abs, const std::vector<Vec>& seg) {
  Vec out = Vec::Zero(n);
  if (p.h_map) out += p.h_map(t_abs, seg);
  if (p.N_map) out += p.N_map(t_abs, seg);
  return out;
}

/// Cheap consequences of the advertised bounds; a failing spec is a caller
/// bug, not a runtime condition.
void spot_check(const PerturbationSpec& p, int n, const GridSpec& g, double t0) {
  if (p.h_map && !p.eps_modulus)
    throw validation_error("perturbation: h_map requires eps_modulus");
  if (p.N_map && !p.nu_envelope)
    throw validation_error("perturbation: N_map requires nu_envelope");

  if (p.h_map) {
    const std::vector<Vec> zero(g.N + 1, Vec::Zero(n));
    if (vnorm(p.h_map(t0, zero)) > 1e-12)
      throw validation_error("perturbation: h must vanish on the zero segment");
    double prev = 0.0;
    for (double u : {1e-6, 1e-3, 1e-1, 1.0}) {
      const double e = p.eps_modulus(u);
      if (!(e >= 0.0) || e < prev - 1e-15)
        throw validation_error("perturbation: eps_modulus must be nonnegative and nondecreasing");
      prev = e;
    }
  }
  if (p.N_map) {
    std::vector<Vec> f1(g.N + 1), f2(g.N + 1), mix(g.N + 1);
    for (int j = 0; j <= g.N; ++j) {
      Vec a = Vec::Zero(n), b = Vec::Zero(n);
      a(0) = std::sin(1.0 + 0.37 * j);
      b(n - 1) = std::cos(0.5 + 0.11 * j);
      f1[j] = a;
      f2[j] = b;
      mix[j] = 0.7 * a - 1.3 * b;
    }
    const Vec lhs = p.N_map(t0, mix);
    const Vec rhs = 0.7 * p.N_map(t0, f1) - 1.3 * p.N_map(t0, f2);
    if (vnorm(lhs - rhs) > 1e-8 * std::max(1.0, vnorm(rhs)))
      throw validation_error("perturbation: N_map is not linear on probe segments");
    const double n0 = p.nu_envelope(t0), n1 = p.nu_envelope(t0 + 1.0), n2 = p.nu_envelope(t0 + 10.0);
    if (!(n2 >= 0.0) || n0 < n1 - 1e-12 || n1 < n2 - 1e-12)
      throw validation_error("perturbation: nu_envelope must be nonnegative and decreasing");
  }
}

/// Secant quotient of h over coordinate segments at the working magnitude,
/// doubled for curvature headroom, plus the current drift envelope.
double sampled_lipschitz(const PerturbationSpec& p, int n, const GridSpec& g, double t_abs,
                         double sigma) {
  double L = 0.0;
  if (p.h_map) {
    std::vector<Vec> hi(g.N + 1), lo(g.N + 1);
    for (int dir = 0; dir < n; ++dir)
      for (int sign = -1; sign <= 1; sign += 2) {
        for (int j = 0; j <= g.N; ++j) {
          Vec v = Vec::Zero(n);
          v(dir) = sign * sigma;
          hi[j] = v;
          lo[j] = 0.5 * v;
        }
        L = std::max(L, vnorm(p.h_map(t_abs, hi) - p.h_map(t_abs, lo)) / (0.5 * sigma));
      }
    L *= 2.0;
  }
  if (p.N_map) L += p.nu_envelope(t_abs);
  return L;
}

SimulationResult finished(Trajectory x, double t_end) {
  SimulationResult res;
  res.x = std::move(x);
  res.completed = true;
  res.stop_time = t_end;
  res.stop_reason = "reached horizon";
  return res;
}

}  // namespace

SimulationResult simulate_with_fundamental(const MatrixTrajectory& X, const StieltjesKernel& k,
                                           const PerturbationSpec& pert, const History& phi,
                                           double t0, double T, const NonlinearConfig& cfg) {
  if (!(T > t0)) throw validation_error("simulate: end time must exceed t0");
  if (!phi.continuous_at_zero())
    throw validation_error("simulate: history must be continuous at zero");
  spot_check(pert, k.n, phi.grid, t0);

  const double Trel = T - t0;
  const GridSpec g(phi.grid.r, phi.grid.N, Trel);
  if (X.dim() != k.n) throw validation_error("simulate: fundamental matrix dimension mismatch");
  if (X.grid.N != g.N || std::abs(X.grid.r - g.r) > 1e-12 * g.r || X.grid.M < g.M)
    throw grid_error("simulate: fundamental matrix does not cover the grid");

  const Trajectory xlin = solve_homogeneous(k, phi, Trel, cfg.base);
  if (!pert.h_map && !pert.N_map) return finished(xlin, T);

  const int N = g.N, M = g.M;
  const double h = g.h;

  Trajectory x;
  x.grid = g;
  x.samples.assign(g.total_nodes(), Vec::Zero(k.n));
  for (int j = 0; j <= N; ++j) x.samples[j] = phi.samples[j];

  auto Xf = [&](int i) -> const Mat& { return X.samples[X.grid.N + i]; };
  double CX = 0.0;
  for (int m = 0; m <= std::min(N, M); ++m) CX = std::max(CX, opnorm(Xf(m)));

  std::vector<Vec> f(M + 1, Vec::Zero(k.n));
  std::vector<Vec> seg(N + 1, Vec::Zero(k.n));
  auto fill_segment = [&](int m) {
    for (int j = 0; j <= N; ++j) seg[j] = x.samples[m + j];
  };
  fill_segment(0);
  f[0] = eval_pert(pert, k.n, t0, seg);

  int s = 0;
  bool truncated = false;
  std::string reason;

  while (s < M) {
    double sigma = segment_sup_norm(x, g.time(s));
    if (sigma <= 0.0) sigma = 1e-8;
    const double L = sampled_lipschitz(pert, k.n, g, t0 + g.time(s), sigma);
    double w = (CX * L > 0.0) ? 0.5 / (CX * L) : g.r;
    if (cfg.base.window > 0.0) {
      if (CX * L * cfg.base.window >= 1.0)
        throw validation_error(
            "simulate.window: contraction requires sup|X| * Lf * window < 1");
      w = cfg.base.window;
    }
    w = std::min(w, g.r);
    const int W = std::max(1, static_cast<int>(std::floor(w / h + 1e-9)));
    const int e = std::min(s + W, M);

    // Convolution contribution of the already certified prefix, fixed for
    // the whole window.
    std::vector<Vec> pre(e - s, Vec::Zero(k.n));
    for (int m = s + 1; m <= e; ++m) {
      Vec acc = 0.5 * (Xf(m) * f[0]);
      for (int j = 1; j <= s; ++j) acc.noalias() += Xf(m - j) * f[j];
      pre[m - s - 1] = h * acc;
    }

    const Vec anchor = x.samples[N + s];
    if (cfg.base.seed == PicardSeed::constant) {
      for (int m = s + 1; m <= e; ++m) x.samples[N + m] = anchor;
    } else {
      for (int m = s + 1; m <= e; ++m) x.samples[N + m].setZero();
    }

    bool converged = false;
    for (int it = 0; it < cfg.base.max_picard_iters; ++it) {
      for (int m = s + 1; m <= e; ++m) {
        fill_segment(m);
        f[m] = eval_pert(pert, k.n, t0 + g.time(m), seg);
      }
      double diff = 0.0, scale = vnorm(anchor);
      for (int m = s + 1; m <= e; ++m) {
        Vec acc = Vec::Zero(k.n);
        for (int j = s + 1; j < m; ++j) acc.noalias() += Xf(m - j) * f[j];
        Vec val = xlin.samples[N + m] + pre[m - s - 1] + h * acc + (0.5 * h) * (Xf(0) * f[m]);
        scale = std::max(scale, vnorm(val));
        diff = std::max(diff, vnorm(val - x.samples[N + m]));
        x.samples[N + m] = std::move(val);
      }
      if (!std::isfinite(diff)) break;
      if (diff <= cfg.base.picard_tol * std::min(1.0, scale)) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      truncated = true;
      reason = "picard iteration failed to contract past t = " + time_tag(t0 + g.time(s));
      break;
    }

    if (cfg.working_radius > 0.0) {
      int last_inside = e;
      for (int m = s + 1; m <= e; ++m)
        if (segment_sup_norm(x, g.time(m)) > cfg.working_radius) {
          last_inside = m - 1;
          break;
        }
      if (last_inside < e) {
        truncated = true;
        reason = "left the working ball after t = " + time_tag(t0 + g.time(last_inside));
        s = last_inside;
        break;
      }
    }
    s = e;
  }

  if (!truncated) return finished(std::move(x), T);

  SimulationResult res;
  const double reached = g.time(s);
  GridSpec gc(g.r, g.N, reached);
  res.x.grid = gc;
  res.x.samples.assign(gc.total_nodes(), Vec::Zero(k.n));
  for (int i = 0; i <= N + s; ++i) res.x.samples[i] = x.samples[i];
  res.completed = false;
  res.stop_time = t0 + reached;
  res.stop_reason = reason;
  return res;
}

SimulationResult simulate(const StieltjesKernel& k, const PerturbationSpec& pert,
                          const History& phi, double t0, double T, const NonlinearConfig& cfg) {
  if (!pert.h_map && !pert.N_map) {
    if (!(T > t0)) throw validation_error("simulate: end time must exceed t0");
    if (!phi.continuous_at_zero())
      throw validation_error("simulate: history must be continuous at zero");
    spot_check(pert, k.n, phi.grid, t0);
    return finished(solve_homogeneous(k, phi, T - t0, cfg.base), T);
  }
  const MatrixTrajectory X = principal_fundamental(k, T - t0);
  return simulate_with_fundamental(X, k, pert, phi, t0, T, cfg);
}

PerturbationSpec builtin_perturbation(const std::string& name) {
  PerturbationSpec p;
  if (name == "cubic") {
    p.h_map = [](double, const std::vector<Vec>& seg) {
      return Vec(-seg.back().array().cube());
    };
    p.eps_modulus = [](double u) { return u * u; };
  } else if (name == "quadratic") {
    p.h_map = [](double, const std::vector<Vec>& seg) {
      return Vec(seg.back().array() * seg.back().array().abs());
    };
    p.eps_modulus = [](double u) { return u; };
  } else if (name == "saturating") {
    p.h_map = [](double, const std::vector<Vec>& seg) {
      const auto v = seg.back().array();
      return Vec(-v.cube() / (1.0 + v.square()));
    };
    p.eps_modulus = [](double u) { return u * u / (1.0 + u * u); };
  } else {
    throw validation_error("perturbation: unknown builtin '" + name + "'");
  }
  return p;
}

StabilityCertificate linearized_stability_certificate(
    const DecayFit& fitM, const std::function<double(double)>& epsilon_modulus,
    double delta_tilde) {
  if (!epsilon_modulus) throw validation_error("certificate: epsilon modulus is required");
  if (!(delta_tilde > 0.0)) throw validation_error("certificate: delta_tilde must be positive");
  if (!(fitM.M >= 1.0)) throw validation_error("certificate: fit constant must be at least 1");
  if (!(fitM.alpha > 0.0))
    throw solver_error("certificate unavailable: envelope shows no decay");
  const double eps = epsilon_modulus(delta_tilde);
  if (!(eps >= 0.0)) throw validation_error("certificate: epsilon modulus must be nonnegative");
  if (!(fitM.M * eps < fitM.alpha))
    throw solver_error("certificate unavailable: M * eps >= alpha on the working ball");

  StabilityCertificate c;
  c.M = fitM.M;
  c.beta = fitM.alpha - fitM.M * eps;
  c.delta_tilde = delta_tilde;
  c.delta = delta_tilde / fitM.M;
  return c;
}

StabilityCertificate poincare_lyapunov_certificate(
    const DecayFit& fit, double epsilon, const std::function<double(double)>& nu_envelope,
    double sigma, double R, double delta_tilde) {
  if (!nu_envelope) throw validation_error("certificate: nu envelope is required");
  if (!(delta_tilde > 0.0)) throw validation_error("certificate: delta_tilde must be positive");
  if (!(epsilon > 0.0)) throw validation_error("certificate: epsilon must be positive");
  if (!(fit.M >= 1.0)) throw validation_error("certificate: fit constant must be at least 1");
  if (!(fit.alpha > 0.0))
    throw solver_error("certificate unavailable: envelope shows no decay");
  const double M0 = fit.M;
  if (!(2.0 * M0 * epsilon < fit.alpha))
    throw solver_error("certificate unavailable: 2 * M0 * eps >= alpha");

  const double nu_sigma = nu_envelope(sigma);
  if (!(nu_sigma >= 0.0)) throw validation_error("certificate: nu envelope must be nonnegative");
  if (nu_envelope(sigma + 1.0) > nu_sigma + 1e-12)
    throw validation_error("certificate: nu envelope must be decreasing");
  if (!(R > epsilon) || !(R > nu_sigma))
    throw solver_error("certificate unavailable: R must exceed eps and nu at sigma");

  double M = M0;
  if (nu_sigma >= epsilon) {
    // Burn-in end: first a with nu < eps, bracketed by doubling, then
    // bisected; the decreasing envelope makes both valid.
    double lo = sigma, span = 1.0, hi = sigma + span;
    int guard = 0;
    while (nu_envelope(hi) >= epsilon) {
      lo = hi;
      span *= 2.0;
      hi = sigma + span;
      if (++guard > 60) throw solver_error("certificate unavailable: nu never drops below eps");
    }
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (nu_envelope(mid) < epsilon ? hi : lo) = mid;
    }
    M = M0 * std::exp(M0 * (R - epsilon) * (hi - sigma));
  }

  StabilityCertificate c;
  c.M = M;
  c.beta = fit.alpha - 2.0 * M0 * epsilon;
  c.delta_tilde = delta_tilde;
  c.delta = delta_tilde / M;
  return c;
}

DecayReport verify_decay(const Trajectory& x, const StabilityCertificate& cert,
                         double phi_seminorm, double) {
  if (!(phi_seminorm >= 0.0))
    throw validation_error("verify_decay: history seminorm must be nonnegative");
  DecayReport rep;
  rep.outside_certificate = phi_seminorm >= cert.delta;
  const GridSpec& g = x.grid;
  rep.margins.resize(static_cast<size_t>(g.M) + 1);
  rep.min_margin = std::numeric_limits<double>::infinity();
  for (int m = 0; m <= g.M; ++m) {
    const double bound = cert.M * std::exp(-cert.beta * g.time(m)) * phi_seminorm;
    rep.margins[m] = bound - segment_sup_norm(x, g.time(m));
    rep.min_margin = std::min(rep.min_margin, rep.margins[m]);
  }
  rep.pass = rep.outside_certificate || rep.min_margin >= -1e-9;
  return rep;
}

}  // namespace retarda
