#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>

namespace ep {

struct Rule1D {
  std::vector<double> x, w;
  std::size_t size() const { return x.size(); }
};

// Plain Gauss-Legendre on [a, b].
Rule1D gauss_legendre(int n, double a = -1.0, double b = 1.0);

// Gauss rule for the standard normal density on the real line (weights sum to 1).
Rule1D gauss_hermite(int n);

// Gauss rule for the standard normal density restricted to [0, inf) (weights sum to 1/2).
Rule1D half_range_hermite(int n);

// Normal-density rule split at zero: n/2 half-range nodes on each side.
Rule1D split_hermite(int n);

// Gauss-Legendre on [-L, 0] and [0, L] with n/2 nodes each.
Rule1D split_legendre(int n, double L);

// Product rule on the unit sphere: Gauss in cos(theta), uniform azimuth. Weights sum to 4 pi.
struct SphereRule {
  std::vector<Eigen::Vector3d> dir;
  std::vector<double> w;
};
SphereRule sphere_product(int n_theta, int n_phi);

// Orthonormal frame whose third axis is `axis` (need not be unit).
Eigen::Matrix3d frame_along(const Eigen::Vector3d& axis);

// Lagrange basis on fixed nodes via the barycentric formula.
class Lagrange1D {
 public:
  Lagrange1D() = default;
  explicit Lagrange1D(std::vector<double> nodes);

  int size() const { return static_cast<int>(x_.size()); }
  const std::vector<double>& nodes() const { return x_; }
  // out[j] = l_j(t)
  void basis(double t, double* out) const;
  Eigen::RowVectorXd basis(double t) const;
  // First-derivative matrix D(i, j) = l_j'(x_i)
  Eigen::MatrixXd diff_matrix() const;
  // M(i, j) = l_j(t_i)
  Eigen::MatrixXd eval_matrix(const std::vector<double>& t) const;

 private:
  std::vector<double> x_, bw_;
};

}  // namespace ep
