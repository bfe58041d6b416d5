#include "retarda/convolution_engine.hpp"

#include <algorithm>
#include <cmath>

#include "retarda/errors.hpp"

namespace retarda {

namespace detail {

inline double mul(double a, double b) { return a * b; }
inline Vec mul(const Mat& a, const Vec& b) { return a * b; }
inline Mat mul(const Mat& a, const Mat& b) { return a * b; }
inline double mul_atom(const Mat& w, double f) { return w(0, 0) * f; }
inline Vec mul_atom(const Mat& w, const Vec& f) { return w * f; }
inline Mat mul_atom(const Mat& w, const Mat& f) { return w * f; }

template <class T>
std::vector<T> volterra_impl(const std::vector<T>& f, double h) {
  if (f.empty()) throw validation_error("volterra: empty input");
  if (!(h > 0.0)) throw validation_error("volterra: step must be positive");
  std::vector<T> out(f.size(), zero_like(f[0]));
  for (size_t m = 1; m < f.size(); ++m) out[m] = out[m - 1] + (0.5 * h) * (f[m - 1] + f[m]);
  return out;
}

template <class G, class F, class R>
std::vector<R> convolve_impl(const std::vector<G>& g, const std::vector<F>& f, double h) {
  if (g.size() != f.size()) throw validation_error("convolve: factor lengths differ");
  if (g.empty()) throw validation_error("convolve: empty input");
  if (!(h > 0.0)) throw validation_error("convolve: step must be positive");
  const int M = static_cast<int>(f.size()) - 1;
  const R zero = zero_like(mul(g[0], f[0]));
  std::vector<R> out(f.size(), zero);
  for (int m = 1; m <= M; ++m) {
    R acc = 0.5 * (mul(g[m], f[0]) + mul(g[0], f[m]));
    for (int j = 1; j < m; ++j) acc += mul(g[m - j], f[j]);
    out[m] = h * acc;
  }
  return out;
}

template <class F, class R>
std::vector<R> rs_convolve_impl(const ReversedKernel& alpha, const std::vector<F>& f) {
  if (f.empty()) throw validation_error("rs_convolve: empty input");
  const int M = static_cast<int>(f.size()) - 1;
  const double h = alpha.h;
  const R zero = zero_like(mul_atom(Mat::Zero(alpha.n, alpha.n), f[0]));
  std::vector<R> out(f.size(), zero);
  for (int m = 0; m <= M; ++m) {
    R acc = zero;
    for (const auto& j : alpha.jumps)
      if (j.node <= m) acc += mul_atom(j.weight, f[m - j.node]);
    if (!alpha.density.empty()) {
      const int U = std::min(m, alpha.N);
      if (U >= 1) {
        R dens = 0.5 * (mul_atom(alpha.density[0], f[m]) + mul_atom(alpha.density[U], f[m - U]));
        for (int j = 1; j < U; ++j) dens += mul_atom(alpha.density[j], f[m - j]);
        acc += h * dens;
      }
    }
    out[m] = acc;
  }
  return out;
}

template <class G0, class F>
std::vector<F> bv_convolve_impl(const G0& g0, const ReversedKernel& dg, const std::vector<F>& f) {
  auto vf = volterra_impl(f, dg.h);
  auto out = rs_convolve_impl<F, F>(dg, vf);
  for (size_t m = 0; m < out.size(); ++m) out[m] += mul(g0, vf[m]);
  return out;
}

}  // namespace detail

std::vector<double> volterra(const std::vector<double>& f, double h) { return detail::volterra_impl(f, h); }
std::vector<Vec> volterra(const std::vector<Vec>& f, double h) { return detail::volterra_impl(f, h); }
std::vector<Mat> volterra(const std::vector<Mat>& f, double h) { return detail::volterra_impl(f, h); }

std::vector<double> convolve(const std::vector<double>& g, const std::vector<double>& f, double h) {
  return detail::convolve_impl<double, double, double>(g, f, h);
}
std::vector<Vec> convolve(const std::vector<Mat>& g, const std::vector<Vec>& f, double h) {
  return detail::convolve_impl<Mat, Vec, Vec>(g, f, h);
}
std::vector<Mat> convolve(const std::vector<Mat>& g, const std::vector<Mat>& f, double h) {
  return detail::convolve_impl<Mat, Mat, Mat>(g, f, h);
}

std::vector<double> rs_convolve(const ReversedKernel& alpha, const std::vector<double>& f) {
  if (alpha.n != 1) throw validation_error("rs_convolve: scalar form needs a 1 by 1 kernel");
  return detail::rs_convolve_impl<double, double>(alpha, f);
}
std::vector<Vec> rs_convolve(const ReversedKernel& alpha, const std::vector<Vec>& f) {
  if (!f.empty() && f[0].size() != alpha.n)
    throw validation_error("rs_convolve: state dimension differs from kernel dimension");
  return detail::rs_convolve_impl<Vec, Vec>(alpha, f);
}
std::vector<Mat> rs_convolve(const ReversedKernel& alpha, const std::vector<Mat>& f) {
  if (!f.empty() && f[0].rows() != alpha.n)
    throw validation_error("rs_convolve: state dimension differs from kernel dimension");
  return detail::rs_convolve_impl<Mat, Mat>(alpha, f);
}

std::vector<double> bv_convolve(double g0, const ReversedKernel& dg, const std::vector<double>& f) {
  if (dg.n != 1) throw validation_error("bv_convolve: scalar form needs a 1 by 1 kernel");
  return detail::bv_convolve_impl(g0, dg, f);
}
std::vector<Vec> bv_convolve(const Mat& g0, const ReversedKernel& dg, const std::vector<Vec>& f) {
  return detail::bv_convolve_impl(g0, dg, f);
}
std::vector<Mat> bv_convolve(const Mat& g0, const ReversedKernel& dg, const std::vector<Mat>& f) {
  return detail::bv_convolve_impl(g0, dg, f);
}

double IdentityReport::max_residual() const {
  double m = 0.0;
  for (const auto& it : items) m = std::max(m, it.residual);
  return m;
}

namespace {

std::vector<double> abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d(a.size(), 0.0);
  for (size_t i = 0; i < a.size(); ++i) d[i] = std::abs(a[i] - b[i]);
  return d;
}

double sup(const std::vector<double>& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

double l1_trapezoid(const std::vector<double>& f, double h) {
  if (f.size() < 2) return 0.0;
  double s = 0.5 * (std::abs(f.front()) + std::abs(f.back()));
  for (size_t i = 1; i + 1 < f.size(); ++i) s += std::abs(f[i]);
  return h * s;
}

}  // namespace

IdentityReport check_convolution_identities(const ReversedKernel& alpha,
                                            const std::vector<double>& f,
                                            const std::vector<double>& g, double h) {
  if (alpha.n != 1) throw validation_error("check_convolution_identities: kernel must be scalar");
  if (f.size() != g.size() || f.size() < 3)
    throw validation_error("check_convolution_identities: need matching grids of length >= 3");
  if (std::abs(alpha.h - h) > 1e-12 * h)
    throw validation_error("check_convolution_identities: kernel step differs from grid step");

  IdentityReport rep;
  auto push = [&rep](std::string name, std::vector<double> trace) {
    rep.items.push_back({std::move(name), sup(trace)});
    rep.traces.push_back(std::move(trace));
  };

  const auto vf = volterra(f, h);
  const auto vg = volterra(g, h);
  const auto conv_af = rs_convolve(alpha, f);
  const auto gf = convolve(g, f, h);

  // V(dalpha * f) = dalpha * (Vf)
  push("volterra_measure", abs_diff(volterra(conv_af, h), rs_convolve(alpha, vf)));

  // Materialized BV factor versus its split form, offset 1.
  {
    const auto mass = cumulative_mass(alpha, static_cast<int>(f.size()));
    std::vector<double> gbv(f.size());
    for (size_t m = 0; m < f.size(); ++m) gbv[m] = 1.0 + mass[m](0, 0);
    push("bv_split", abs_diff(convolve(gbv, f, h), bv_convolve(1.0, alpha, f)));
  }

  // V(g * f) = g * (Vf) = (Vg) * f
  const auto v_gf = volterra(gf, h);
  push("volterra_left", abs_diff(v_gf, convolve(g, vf, h)));
  push("volterra_right", abs_diff(v_gf, convolve(vg, f, h)));

  // dalpha * (g * f) = (dalpha * g) * f
  push("assoc", abs_diff(rs_convolve(alpha, gf), convolve(rs_convolve(alpha, g), f, h)));

  // Young: |g * f|_L1 <= |g|_L1 |f|_L1, reported as the positive excess.
  {
    const double margin = l1_trapezoid(gf, h) - l1_trapezoid(g, h) * l1_trapezoid(f, h);
    push("young_margin", {std::max(0.0, margin)});
  }

  // (g * f)' = g(0) f + g' * f on interior nodes, derivatives by central
  // differences. Endpoints are skipped; their one-sided stencils are O(h).
  {
    const int M = static_cast<int>(f.size()) - 1;
    std::vector<double> dgf(f.size(), 0.0), dg2(f.size(), 0.0);
    for (int m = 1; m < M; ++m) {
      dgf[m] = (gf[m + 1] - gf[m - 1]) / (2.0 * h);
      dg2[m] = (g[m + 1] - g[m - 1]) / (2.0 * h);
    }
    dg2[0] = (g[1] - g[0]) / h;
    dg2[M] = (g[M] - g[M - 1]) / h;
    const auto rhs = convolve(dg2, f, h);
    std::vector<double> trace(f.size(), 0.0);
    for (int m = 1; m < M; ++m) trace[m] = std::abs(dgf[m] - (g[0] * f[m] + rhs[m]));
    push("derivative", std::move(trace));
  }

  return rep;
}

}  // namespace retarda
