#pragma once

#include <vector>

#include <Eigen/Dense>

#include "ep/quadrature.hpp"

namespace ep {

// Tensor velocity grid. With a split third axis, half-space integrals at the
// wall are Gauss-exact on each side.
class VelocityGrid {
 public:
  enum class Kind { Hermite, Legendre };

  // Hermite: normal-density Gauss rules, axis 3 optionally half-range. Legendre: box [-L, L]^3.
  static VelocityGrid hermite(int n, bool split3 = false);
  static VelocityGrid legendre(int n, double L);

  Kind kind() const { return kind_; }
  int n() const { return n_; }
  int size() const { return n_ * n_ * n_; }
  double box() const { return L_; }
  int index(int a, int b, int c) const { return (a * n_ + b) * n_ + c; }

  const Eigen::Vector3d& node(int i) const { return nodes_[i]; }
  const std::vector<Eigen::Vector3d>& nodes() const { return nodes_; }
  // Lebesgue quadrature weight for dxi.
  const Eigen::VectorXd& weight() const { return w_; }
  // Weight with respect to mu0, i.e. weight * mu0(node).
  const Eigen::VectorXd& weight_mu() const { return wmu_; }
  const std::vector<double>& axis(int k) const { return axes_[k]; }
  const Lagrange1D& interp(int k) const { return lag_[k]; }

  // sqrt(mu0) at every node.
  const Eigen::VectorXd& sqrt_mu0() const { return sqmu_; }

  // Tensor interpolation of nodal values at an arbitrary point (polynomial extension).
  double interpolate(const Eigen::VectorXd& values, const Eigen::Vector3d& p) const;

 private:
  Kind kind_ = Kind::Hermite;
  int n_ = 0;
  double L_ = 0;
  std::vector<double> axes_[3];
  Lagrange1D lag_[3];
  std::vector<Eigen::Vector3d> nodes_;
  Eigen::VectorXd w_, wmu_, sqmu_;
  void finish(const Rule1D r[3], bool normal_weights);
};

}  // namespace ep
