#include "ep/velocity_grid.hpp"

#include <cmath>
#include <numbers>

#include "ep/maxwellian.hpp"

namespace ep {

VelocityGrid VelocityGrid::hermite(int n, bool split3) {
  VelocityGrid g;
  g.kind_ = Kind::Hermite;
  g.n_ = n;
  const Rule1D full = gauss_hermite(n), split = split3 ? split_hermite(n) : full;
  const Rule1D r[3] = {full, full, split};
  double L = 0;
  for (double x : split.x) L = std::max(L, std::abs(x));
  for (double x : full.x) L = std::max(L, std::abs(x));
  g.L_ = L;
  g.finish(r, true);
  return g;
}

VelocityGrid VelocityGrid::legendre(int n, double L) {
  VelocityGrid g;
  g.kind_ = Kind::Legendre;
  g.n_ = n;
  g.L_ = L;
  const Rule1D full = gauss_legendre(n, -L, L), split = split_legendre(n, L);
  const Rule1D r[3] = {full, full, split};
  g.finish(r, false);
  return g;
}

void VelocityGrid::finish(const Rule1D r[3], bool normal_weights) {
  for (int k = 0; k < 3; ++k) {
    axes_[k] = r[k].x;
    lag_[k] = Lagrange1D(r[k].x);
  }
  const int N = size();
  nodes_.resize(N);
  w_.resize(N);
  wmu_.resize(N);
  sqmu_.resize(N);
  const double c = 1.0 / std::sqrt(2 * std::numbers::pi);
  for (int a = 0; a < n_; ++a)
    for (int b = 0; b < n_; ++b)
      for (int cc = 0; cc < n_; ++cc) {
        const int i = index(a, b, cc);
        const Eigen::Vector3d v(r[0].x[a], r[1].x[b], r[2].x[cc]);
        nodes_[i] = v;
        const double m = mu0(v);
        sqmu_[i] = std::sqrt(m);
        if (normal_weights) {
          wmu_[i] = r[0].w[a] * r[1].w[b] * r[2].w[cc];
          double dens = 1;
          for (int k = 0; k < 3; ++k) dens *= c * std::exp(-0.5 * v[k] * v[k]);
          w_[i] = wmu_[i] / dens;
        } else {
          w_[i] = r[0].w[a] * r[1].w[b] * r[2].w[cc];
          wmu_[i] = w_[i] * m;
        }
      }
}

double VelocityGrid::interpolate(const Eigen::VectorXd& values, const Eigen::Vector3d& p) const {
  std::vector<double> lx(n_), ly(n_), lz(n_);
  lag_[0].basis(p[0], lx.data());
  lag_[1].basis(p[1], ly.data());
  lag_[2].basis(p[2], lz.data());
  double s = 0;
  for (int a = 0; a < n_; ++a) {
    double sa = 0;
    for (int b = 0; b < n_; ++b) {
      const double* v = values.data() + index(a, b, 0);
      double sb = 0;
      for (int c = 0; c < n_; ++c) sb += lz[c] * v[c];
      sa += ly[b] * sb;
    }
    s += lx[a] * sa;
  }
  return s;
}

}  // namespace ep
