#include "retarda/history_space.hpp"

#include <cmath>

#include "retarda/errors.hpp"

namespace retarda {

namespace {

void check_history(const History& phi) {
  if (static_cast<int>(phi.samples.size()) != phi.grid.N + 1)
    throw validation_error("history.samples: expected N + 1 values");
  for (const auto& s : phi.samples)
    if (s.size() != phi.value_at_zero.size())
      throw validation_error("history.samples: inconsistent dimension");
}

template <class T>
std::vector<T> cumulative_impl(const GridSpec& g, const std::vector<T>& samples,
                               const std::optional<T>& left_at_zero) {
  const int total = g.N + g.M + 1;
  if (static_cast<int>(samples.size()) != total)
    throw validation_error("trajectory.samples: expected N + M + 1 values");
  std::vector<T> C(total, zero_like(samples[0]));
  // Raw cumulative from the left end, then shift so the node at t = 0 is 0.
  // The cell ending at t = 0 closes with the history's integrable value, not
  // the present value, when the trajectory records a mismatch.
  for (int gi = 1; gi < total; ++gi) {
    const T& right = (gi == g.N && left_at_zero) ? *left_at_zero : samples[gi];
    C[gi] = C[gi - 1] + (0.5 * g.h) * (samples[gi - 1] + right);
  }
  const T shift = C[g.N];
  for (auto& c : C) c -= shift;
  return C;
}

}  // namespace

double History::sup_norm() const {
  double m = vnorm(value_at_zero);
  for (const auto& s : samples) m = std::max(m, vnorm(s));
  return m;
}

double seminorm_m1(const History& phi) {
  check_history(phi);
  const auto& g = phi.grid;
  double integral = 0.5 * vnorm(phi.samples[0]);
  for (int j = 1; j < g.N; ++j) integral += vnorm(phi.samples[j]);
  integral += 0.5 * vnorm(phi.samples[g.N]);
  return g.h * integral + vnorm(phi.value_at_zero);
}

History instantaneous(const Vec& xi, const GridSpec& grid) {
  History phi;
  phi.grid = grid;
  phi.samples.assign(grid.N + 1, Vec::Zero(xi.size()));
  phi.value_at_zero = xi;
  return phi;
}

Trajectory constant_prolongation(const History& phi, double T) {
  check_history(phi);
  GridSpec g(phi.grid.r, phi.grid.N, T);
  Trajectory x;
  x.grid = g;
  x.samples.reserve(g.N + g.M + 1);
  for (int j = 0; j < g.N; ++j) x.samples.push_back(phi.samples[j]);
  for (int m = 0; m <= g.M; ++m) x.samples.push_back(phi.value_at_zero);
  if (!phi.continuous_at_zero()) x.value_at_zero_minus = phi.samples[g.N];
  return x;
}

namespace {

template <class X, class T>
std::vector<T> segment_impl(const X& x, double t) {
  const auto& g = x.grid;
  const int m = g.node_of_time(t);
  std::vector<T> out;
  out.reserve(g.N + 1);
  for (int j = 0; j <= g.N; ++j) out.push_back(x.samples[m + j]);
  return out;
}

}  // namespace

std::vector<Vec> segment(const Trajectory& x, double t) { return segment_impl<Trajectory, Vec>(x, t); }
std::vector<Mat> segment(const MatrixTrajectory& x, double t) {
  return segment_impl<MatrixTrajectory, Mat>(x, t);
}

double segment_sup_norm(const Trajectory& x, double t) {
  const auto& g = x.grid;
  const int m = g.node_of_time(t);
  double s = 0.0;
  for (int j = 0; j <= g.N; ++j) s = std::max(s, vnorm(x.samples[m + j]));
  return s;
}

std::vector<Vec> cumulative_integral(const Trajectory& x) {
  return cumulative_impl(x.grid, x.samples, x.value_at_zero_minus);
}

std::vector<Mat> cumulative_integral(const MatrixTrajectory& x) {
  return cumulative_impl(x.grid, x.samples, x.value_at_zero_minus);
}

std::vector<Vec> integrate_segments(const Trajectory& x, double t) {
  const auto& g = x.grid;
  const int m = g.node_of_time(t);
  const auto C = cumulative_integral(x);
  std::vector<Vec> out;
  out.reserve(g.N + 1);
  for (int j = 0; j <= g.N; ++j) out.push_back(C[m + j] - C[j]);
  return out;
}

History constant_history(const Vec& c, const GridSpec& grid) {
  History phi;
  phi.grid = grid;
  phi.samples.assign(grid.N + 1, c);
  phi.value_at_zero = c;
  return phi;
}

History sampled_history(std::vector<Vec> samples, Vec value_at_zero, const GridSpec& grid) {
  History phi;
  phi.grid = grid;
  phi.samples = std::move(samples);
  phi.value_at_zero = std::move(value_at_zero);
  check_history(phi);
  return phi;
}

History sinusoid_history(const Vec& amplitude, double omega, double phase, const GridSpec& grid) {
  History phi;
  phi.grid = grid;
  phi.samples.reserve(grid.N + 1);
  for (int j = 0; j <= grid.N; ++j) {
    const double w = std::sin(omega * grid.theta(j) + phase);
    phi.samples.push_back(amplitude * w);
  }
  phi.value_at_zero = phi.samples.back();
  return phi;
}

}  // namespace retarda
