#include "retarda/stieltjes_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "retarda/errors.hpp"

namespace retarda {

namespace {

void check_square(const Mat& m, int n, const char* what) {
  if (m.rows() != n || m.cols() != n)
    throw validation_error(std::string(what) + ": matrix is not n by n");
}

}  // namespace

StieltjesKernel::StieltjesKernel(double r_, int N_, int n_, std::vector<KernelJump> jumps_,
                                 std::vector<Mat> density_) {
  if (!(r_ > 0.0)) throw validation_error("kernel.r: must be positive");
  if (N_ < 1) throw validation_error("kernel.N: must be at least 1");
  if (n_ < 1) throw validation_error("kernel.n: must be at least 1");
  r = r_;
  N = N_;
  n = n_;
  h = r_ / static_cast<double>(N_);

  if (!density_.empty() && static_cast<int>(density_.size()) != N + 1)
    throw validation_error("kernel.density: expected N + 1 samples or none");
  for (const auto& a : density_) check_square(a, n, "kernel.density");

  // Snap atoms to the theta grid; the tolerance is absolute in units of r.
  for (auto& j : jumps_) {
    check_square(j.weight, n, "kernel.jumps.matrix");
    if (j.theta < -r - 1e-12 * r || j.theta > 1e-12 * r)
      throw validation_error("kernel.jumps.theta: outside [-r, 0]");
    const auto node = static_cast<int>(std::llround((j.theta + r) / h));
    const double snapped = -r + node * h;
    if (node < 0 || node > N || std::abs(snapped - j.theta) > 1e-12 * r)
      throw validation_error("kernel.jumps.theta: not on the theta grid");
    j.node = node;
    j.theta = snapped;
  }
  std::sort(jumps_.begin(), jumps_.end(),
            [](const KernelJump& a, const KernelJump& b) { return a.node < b.node; });
  for (size_t i = 1; i < jumps_.size(); ++i)
    if (jumps_[i].node == jumps_[i - 1].node)
      throw validation_error("kernel.jumps.theta: duplicate atom location");

  jumps = std::move(jumps_);
  density = std::move(density_);
}

int StieltjesKernel::node_of_theta(double th) const {
  const auto j = static_cast<int>(std::llround((th + r) / h));
  if (j < 0 || j > N || std::abs((-r + j * h) - th) > 1e-9 * (1.0 + std::abs(th)))
    throw grid_error("kernel: theta is not on the grid");
  return j;
}

namespace {

template <class T>
T rs_integrate_impl(const StieltjesKernel& k, const std::vector<T>& f, double a, double b) {
  if (static_cast<int>(f.size()) != k.N + 1)
    throw validation_error("rs_integrate: integrand sample count differs from N + 1");
  if (b < a) throw validation_error("rs_integrate: empty or reversed interval");
  const int ja = k.node_of_theta(a);
  const int jb = k.node_of_theta(b);

  T acc = zero_like(f[0]);
  for (const auto& j : k.jumps)
    if (j.node >= ja && j.node <= jb) acc += j.weight * f[j.node];

  if (!k.density.empty() && jb > ja) {
    T dens = zero_like(f[0]);
    dens += 0.5 * (k.density[ja] * f[ja]);
    for (int j = ja + 1; j < jb; ++j) dens += k.density[j] * f[j];
    dens += 0.5 * (k.density[jb] * f[jb]);
    acc += k.h * dens;
  }
  return acc;
}

}  // namespace

Vec rs_integrate(const StieltjesKernel& k, const std::vector<Vec>& f, double a, double b) {
  return rs_integrate_impl(k, f, a, b);
}

Mat rs_integrate(const StieltjesKernel& k, const std::vector<Mat>& f, double a, double b) {
  return rs_integrate_impl(k, f, a, b);
}

Vec apply_functional(const StieltjesKernel& k, const std::vector<Vec>& phi) {
  return rs_integrate_impl(k, phi, -k.r, 0.0);
}

Mat apply_functional(const StieltjesKernel& k, const std::vector<Mat>& phi) {
  return rs_integrate_impl(k, phi, -k.r, 0.0);
}

double total_variation(const StieltjesKernel& k) {
  double var = 0.0;
  for (const auto& j : k.jumps) var += opnorm(j.weight);
  if (!k.density.empty()) {
    double dens = 0.5 * opnorm(k.density[0]);
    for (int j = 1; j < k.N; ++j) dens += opnorm(k.density[j]);
    dens += 0.5 * opnorm(k.density[k.N]);
    var += k.h * dens;
  }
  return var;
}

ReversedKernel reverse(const StieltjesKernel& k) {
  ReversedKernel rk;
  rk.r = k.r;
  rk.n = k.n;
  rk.N = k.N;
  rk.h = k.h;
  rk.jumps.reserve(k.jumps.size());
  // theta ascending maps to u descending; rebuild in ascending u order.
  for (auto it = k.jumps.rbegin(); it != k.jumps.rend(); ++it) {
    KernelJump j;
    j.theta = -it->theta;
    j.node = k.N - it->node;
    j.weight = it->weight;
    rk.jumps.push_back(std::move(j));
  }
  if (!k.density.empty()) {
    rk.density.resize(k.N + 1);
    for (int j = 0; j <= k.N; ++j) rk.density[j] = k.density[k.N - j];
  }
  return rk;
}

std::vector<Mat> cumulative_mass(const ReversedKernel& rk, int nodes) {
  if (nodes < 1) throw validation_error("cumulative_mass: need at least one node");
  std::vector<Mat> out(nodes, Mat::Zero(rk.n, rk.n));
  Mat dens_acc = Mat::Zero(rk.n, rk.n);
  Mat jump_acc = Mat::Zero(rk.n, rk.n);
  size_t next_jump = 0;
  for (int m = 0; m < nodes; ++m) {
    if (m > 0 && m <= rk.N && !rk.density.empty())
      dens_acc += 0.5 * rk.h * (rk.density[m - 1] + rk.density[m]);
    while (next_jump < rk.jumps.size() && rk.jumps[next_jump].node <= m)
      jump_acc += rk.jumps[next_jump++].weight;
    out[m] = dens_acc + jump_acc;
  }
  return out;
}

}  // namespace retarda
