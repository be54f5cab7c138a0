#pragma once

#include <vector>

#include <Eigen/Dense>

namespace ep {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Chebyshev-Gauss-Lobatto collocation on [0, L]; node 0 sits at the wall.
class Chebyshev {
 public:
  Chebyshev() = default;
  Chebyshev(int n, double L);

  int n() const { return n_; }
  int size() const { return n_ + 1; }
  double length() const { return L_; }
  const Vec& x() const { return x_; }
  const Mat& D() const { return D_; }
  const Mat& D2() const { return D2_; }
  // Clenshaw-Curtis weights.
  const Vec& w() const { return w_; }
  // (Q f)_i = int_0^{x_i} f, exact for the interpolant.
  const Mat& Q() const { return Q_; }
  // (T f)_i = int_{x_i}^L f.
  const Mat& T() const { return T_; }
  // Row k: the k-th derivative at x = 0.
  Vec wall_derivative(int k) const;
  // E(i, j) = l_j(t_i); points outside [0, L] are rejected by the caller.
  Mat eval_matrix(const std::vector<double>& t) const;
  Eigen::RowVectorXd eval_row(double t) const;

 private:
  int n_ = 0;
  double L_ = 1;
  Vec x_, w_, bw_;
  Mat D_, D2_, Q_, T_;
};

// Fourier collocation on the odd-sized uniform grid of [0, 2 pi), modes |k| <= K.
class Periodic {
 public:
  Periodic() = default;
  explicit Periodic(int K);

  int n() const { return n_; }
  int K() const { return K_; }
  const Vec& x() const { return x_; }
  const Mat& D() const { return D_; }
  // Real eigenbasis of D^2: D^2 = V diag(lambda) V^T, lambda = -k^2.
  const Mat& V() const { return V_; }
  const Vec& lambda() const { return lam_; }
  // Trigonometric interpolation weights at an arbitrary point.
  Eigen::RowVectorXd eval_row(double t) const;

 private:
  int n_ = 1, K_ = 0;
  Vec x_, lam_;
  Mat D_, V_;
};

// Tangential operators on fields stored as (n*n rows) x (wall-normal columns),
// row = i1 * n + i2.
class Tangential {
 public:
  Tangential() = default;
  explicit Tangential(int K) : p_(K) {}

  const Periodic& axis() const { return p_; }
  int n() const { return p_.n(); }
  int rows() const { return p_.n() * p_.n(); }
  double x1(int r) const { return p_.x()[r / p_.n()]; }
  double x2(int r) const { return p_.x()[r % p_.n()]; }

  Mat d1(const Mat& f) const;
  Mat d2(const Mat& f) const;
  Mat d(int axis, const Mat& f) const { return axis == 0 ? d1(f) : d2(f); }
  Mat lap(const Mat& f) const { return d1(d1(f)) + d2(d2(f)); }
  // Coordinates in the real eigenbasis and back.
  Mat to_modes(const Mat& f) const;
  Mat from_modes(const Mat& f) const;
  // |k|^2 of eigen-mode r.
  double mode_k2(int r) const;
  // Mean over the torus (per column).
  Eigen::RowVectorXd mean(const Mat& f) const { return f.colwise().mean(); }
  // Interpolation weights (length rows()) at (x1, x2).
  Eigen::RowVectorXd eval_row(double x1, double x2) const;
  // Quadrature weight of one node for the integral over the torus.
  double cell() const;

 private:
  Periodic p_;
};

}  // namespace ep
