#include "ep/spectral.hpp"

#include <algorithm>
#include <cmath>

#include "ep/error.hpp"

namespace ep {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Chebyshev::Chebyshev(int n, double L) : n_(n), L_(L) {
  if (n < 2 || !(L > 0)) throw Error(ErrorKind::Config, "Chebyshev grid needs n >= 2 and L > 0");
  const int m = n + 1;
  Vec t(m);
  x_.resize(m);
  bw_.resize(m);
  for (int j = 0; j < m; ++j) {
    t[j] = std::cos(kPi * j / n);
    x_[j] = 0.5 * L * (1 - t[j]);
    bw_[j] = (j % 2 ? -1.0 : 1.0) * ((j == 0 || j == n) ? 0.5 : 1.0);
  }
  // differentiation in t, then d/dx = -(2/L) d/dt
  Mat Dt = Mat::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    const double ci = (i == 0 || i == n) ? 2.0 : 1.0;
    for (int j = 0; j < m; ++j) {
      if (i == j) continue;
      const double cj = (j == 0 || j == n) ? 2.0 : 1.0;
      Dt(i, j) = ci / cj * (((i + j) % 2) ? -1.0 : 1.0) / (t[i] - t[j]);
    }
    Dt(i, i) = -Dt.row(i).sum();
  }
  D_ = -(2.0 / L) * Dt;
  D2_ = D_ * D_;

  // Clenshaw-Curtis
  w_ = Vec::Zero(m);
  for (int j = 0; j <= n; ++j) {
    double s = 0;
    for (int k = 0; k <= n / 2; ++k) {
      double bk = (k == 0 || (n % 2 == 0 && k == n / 2)) ? 1.0 : 2.0;
      s += bk / (1.0 - 4.0 * k * k) * std::cos(2.0 * kPi * k * j / n);
    }
    const double cj = (j == 0 || j == n) ? 1.0 : 2.0;
    w_[j] = cj / n * s * 0.5 * L;
  }

  // cumulative integral through Chebyshev coefficients
  Mat C(m, m);  // a = C f
  for (int k = 0; k <= n; ++k)
    for (int j = 0; j <= n; ++j) {
      double v = std::cos(kPi * k * j / n) * 2.0 / n;
      if (j == 0 || j == n) v *= 0.5;
      if (k == 0 || k == n) v *= 0.5;
      C(k, j) = v;
    }
  // antiderivative coefficients (degree n+1), in t
  Mat I = Mat::Zero(m + 1, m);
  for (int k = 0; k <= n; ++k) {
    if (k == 0) {
      I(1, 0) += 1;
    } else if (k == 1) {
      I(2, 1) += 0.25;
    } else {
      I(k + 1, k) += 0.5 / (k + 1);
      I(k - 1, k) -= 0.5 / (k - 1);
    }
  }
  Mat Tv(m, m + 1);  // T_k(t_i)
  for (int i = 0; i <= n; ++i)
    for (int k = 0; k <= n + 1; ++k) Tv(i, k) = std::cos(k * std::acos(std::clamp(t[i], -1.0, 1.0)));
  const Mat F = Tv * I * C;  // antiderivative values at nodes, in t
  // x = 0 is t = 1 (node 0); int_0^{x_i} f dx = (L/2) (F(t_0) - F(t_i))
  Q_.resize(m, m);
  for (int i = 0; i < m; ++i) Q_.row(i) = 0.5 * L * (F.row(0) - F.row(i));
  T_.resize(m, m);
  for (int i = 0; i < m; ++i) T_.row(i) = Q_.row(n) - Q_.row(i);
}

Vec Chebyshev::wall_derivative(int k) const {
  Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(size());
  r[0] = 1;
  for (int i = 0; i < k; ++i) r = r * D_;
  return r.transpose();
}

Eigen::RowVectorXd Chebyshev::eval_row(double t) const {
  const int m = size();
  Eigen::RowVectorXd r(m);
  for (int j = 0; j < m; ++j)
    if (t == x_[j]) {
      r.setZero();
      r[j] = 1;
      return r;
    }
  double s = 0;
  for (int j = 0; j < m; ++j) {
    r[j] = bw_[j] / (t - x_[j]);
    s += r[j];
  }
  return r / s;
}

Mat Chebyshev::eval_matrix(const std::vector<double>& t) const {
  Mat E(t.size(), size());
  for (std::size_t i = 0; i < t.size(); ++i) E.row(i) = eval_row(t[i]);
  return E;
}

Periodic::Periodic(int K) : n_(2 * K + 1), K_(K) {
  if (K < 0) throw Error(ErrorKind::Config, "K_max must be non-negative");
  x_.resize(n_);
  for (int j = 0; j < n_; ++j) x_[j] = 2 * kPi * j / n_;
  D_ = Mat::Zero(n_, n_);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j)
      if (i != j) D_(i, j) = 0.5 * (((i - j) % 2) ? -1.0 : 1.0) / std::sin(0.5 * (x_[i] - x_[j]));
  Mat D2 = D_ * D_;
  D2 = 0.5 * (D2 + D2.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(D2);
  V_ = es.eigenvectors();
  lam_ = es.eigenvalues();
  for (int i = 0; i < n_; ++i) lam_[i] = -std::round(-lam_[i]);
}

Eigen::RowVectorXd Periodic::eval_row(double t) const {
  Eigen::RowVectorXd r(n_);
  for (int j = 0; j < n_; ++j) {
    const double h = 0.5 * (t - x_[j]);
    const double s = std::sin(h);
    r[j] = std::abs(s) < 1e-14 ? 1.0 : std::sin(n_ * h) / (n_ * s);
  }
  return r;
}

Mat Tangential::d1(const Mat& f) const {
  const int n = p_.n();
  Mat out(f.rows(), f.cols());
  for (int c = 0; c < f.cols(); ++c) {
    Eigen::Map<const Mat> M(f.col(c).data(), n, n);
    Eigen::Map<Mat> O(out.col(c).data(), n, n);
    O.noalias() = M * p_.D().transpose();
  }
  return out;
}

Mat Tangential::d2(const Mat& f) const {
  const int n = p_.n();
  Mat out(f.rows(), f.cols());
  for (int c = 0; c < f.cols(); ++c) {
    Eigen::Map<const Mat> M(f.col(c).data(), n, n);
    Eigen::Map<Mat> O(out.col(c).data(), n, n);
    O.noalias() = p_.D() * M;
  }
  return out;
}

Mat Tangential::to_modes(const Mat& f) const {
  const int n = p_.n();
  Mat out(f.rows(), f.cols());
  for (int c = 0; c < f.cols(); ++c) {
    Eigen::Map<const Mat> M(f.col(c).data(), n, n);
    Eigen::Map<Mat> O(out.col(c).data(), n, n);
    O.noalias() = p_.V().transpose() * M * p_.V();
  }
  return out;
}

Mat Tangential::from_modes(const Mat& f) const {
  const int n = p_.n();
  Mat out(f.rows(), f.cols());
  for (int c = 0; c < f.cols(); ++c) {
    Eigen::Map<const Mat> M(f.col(c).data(), n, n);
    Eigen::Map<Mat> O(out.col(c).data(), n, n);
    O.noalias() = p_.V() * M * p_.V().transpose();
  }
  return out;
}

double Tangential::mode_k2(int r) const {
  const int n = p_.n();
  return -p_.lambda()[r % n] - p_.lambda()[r / n];
}

Eigen::RowVectorXd Tangential::eval_row(double x1, double x2) const {
  const int n = p_.n();
  const Eigen::RowVectorXd a = p_.eval_row(x1), b = p_.eval_row(x2);
  Eigen::RowVectorXd r(n * n);
  for (int i1 = 0; i1 < n; ++i1)
    for (int i2 = 0; i2 < n; ++i2) r[i1 * n + i2] = a[i1] * b[i2];
  return r;
}

double Tangential::cell() const {
  const double h = 2 * kPi / p_.n();
  return h * h;
}

}  // namespace ep
