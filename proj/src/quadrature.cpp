#include "ep/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace ep {

namespace {

// Golub-Welsch for a monic three-term recurrence with total mass m0.
Rule1D golub_welsch(const std::vector<double>& alpha, const std::vector<double>& beta, double m0) {
  const int n = static_cast<int>(alpha.size());
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) J(i, i) = alpha[i];
  for (int i = 1; i < n; ++i) J(i, i - 1) = J(i - 1, i) = std::sqrt(beta[i]);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  Rule1D r;
  for (int i = 0; i < n; ++i) {
    r.x.push_back(es.eigenvalues()(i));
    r.w.push_back(m0 * es.eigenvectors()(0, i) * es.eigenvectors()(0, i));
  }
  return r;
}

}  // namespace

Rule1D gauss_legendre(int n, double a, double b) {
  Rule1D r;
  r.x.resize(n);
  r.w.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1, p1 = x;
      dp = n * (x * p1 - p0) / (x * x - 1);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    {
      double p0 = 1, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1, p1 = x;
      dp = n * (x * p1 - p0) / (x * x - 1);
    }
    r.x[n - 1 - i] = 0.5 * (a + b) + 0.5 * (b - a) * x;
    r.w[n - 1 - i] = (b - a) / ((1 - x * x) * dp * dp);
  }
  return r;
}

Rule1D gauss_hermite(int n) {
  std::vector<double> alpha(n, 0.0), beta(n, 0.0);
  for (int k = 1; k < n; ++k) beta[k] = k;
  Rule1D r = golub_welsch(alpha, beta, 1.0);
  // polish nodes with Newton on the monic recurrence; weights from the Christoffel form
  for (int i = 0; i < n; ++i) {
    double x = r.x[i];
    double p0 = 0, p1 = 0;
    for (int it = 0; it < 20; ++it) {
      double q0 = 1, q1 = x;
      for (int k = 1; k < n; ++k) {
        const double q2 = x * q1 - k * q0;
        q0 = q1;
        q1 = q2;
      }
      if (n == 1) q0 = 1, q1 = x;
      p1 = q1;
      p0 = q0;  // He_{n-1}
      const double dp = n * p0;  // He_n' = n He_{n-1}
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15 * (1 + std::abs(x))) break;
    }
    double q0 = 1, q1 = x;
    for (int k = 1; k < n - 1; ++k) {
      const double q2 = x * q1 - k * q0;
      q0 = q1;
      q1 = q2;
    }
    const double hm1 = (n == 1) ? 1.0 : q1;  // He_{n-1}(x)
    r.x[i] = x;
    // w = (n-1)! / (n He_{n-1}^2) for the normal density, scaled stably via the recurrence
    double logf = std::lgamma(double(n));
    r.w[i] = std::exp(logf - std::log(double(n)) - 2 * std::log(std::abs(hm1)));
  }
  std::vector<std::size_t> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return r.x[a] < r.x[b]; });
  Rule1D s;
  for (auto i : idx) {
    s.x.push_back(r.x[i]);
    s.w.push_back(r.w[i]);
  }
  // symmetrize against roundoff
  for (int i = 0; i < n / 2; ++i) {
    const double xm = 0.5 * (s.x[n - 1 - i] - s.x[i]);
    const double wm = 0.5 * (s.w[n - 1 - i] + s.w[i]);
    s.x[i] = -xm;
    s.x[n - 1 - i] = xm;
    s.w[i] = s.w[n - 1 - i] = wm;
  }
  if (n % 2 == 1) s.x[n / 2] = 0.0;
  return s;
}

Rule1D half_range_hermite(int n) {
  // discretized Stieltjes procedure on a fine Legendre grid of [0, 14]
  const Rule1D fine = gauss_legendre(600, 0.0, 14.0);
  const int M = static_cast<int>(fine.size());
  std::vector<double> wt(M);
  const double c = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  for (int i = 0; i < M; ++i) wt[i] = fine.w[i] * c * std::exp(-0.5 * fine.x[i] * fine.x[i]);
  std::vector<double> alpha(n), beta(n);
  std::vector<double> pm(M, 0.0), p(M, 1.0);
  double norm_prev = 0;
  for (int k = 0; k < n; ++k) {
    double nrm = 0, xn = 0;
    for (int i = 0; i < M; ++i) {
      nrm += wt[i] * p[i] * p[i];
      xn += wt[i] * fine.x[i] * p[i] * p[i];
    }
    alpha[k] = xn / nrm;
    beta[k] = (k == 0) ? nrm : nrm / norm_prev;
    norm_prev = nrm;
    for (int i = 0; i < M; ++i) {
      const double pn = (fine.x[i] - alpha[k]) * p[i] - (k == 0 ? 0.0 : beta[k]) * pm[i];
      pm[i] = p[i];
      p[i] = pn;
    }
  }
  const double m0 = beta[0];
  return golub_welsch(alpha, beta, m0);
}

Rule1D split_hermite(int n) {
  if (n % 2) throw std::invalid_argument("split rule needs an even node count");
  Rule1D h = half_range_hermite(n / 2);
  Rule1D r;
  for (int i = n / 2 - 1; i >= 0; --i) {
    r.x.push_back(-h.x[i]);
    r.w.push_back(h.w[i]);
  }
  for (int i = 0; i < n / 2; ++i) {
    r.x.push_back(h.x[i]);
    r.w.push_back(h.w[i]);
  }
  return r;
}

Rule1D split_legendre(int n, double L) {
  if (n % 2) throw std::invalid_argument("split rule needs an even node count");
  Rule1D a = gauss_legendre(n / 2, -L, 0.0), b = gauss_legendre(n / 2, 0.0, L);
  a.x.insert(a.x.end(), b.x.begin(), b.x.end());
  a.w.insert(a.w.end(), b.w.begin(), b.w.end());
  return a;
}

SphereRule sphere_product(int n_theta, int n_phi) {
  SphereRule s;
  const Rule1D g = gauss_legendre(n_theta, -1.0, 1.0);
  for (int i = 0; i < n_theta; ++i) {
    const double ct = g.x[i], st = std::sqrt(std::max(0.0, 1 - ct * ct));
    for (int j = 0; j < n_phi; ++j) {
      const double ph = 2 * std::numbers::pi * (j + 0.5) / n_phi;
      s.dir.emplace_back(st * std::cos(ph), st * std::sin(ph), ct);
      s.w.push_back(g.w[i] * 2 * std::numbers::pi / n_phi);
    }
  }
  return s;
}

Eigen::Matrix3d frame_along(const Eigen::Vector3d& axis) {
  Eigen::Vector3d e3 = axis.norm() > 1e-300 ? axis.normalized() : Eigen::Vector3d(0, 0, 1);
  Eigen::Vector3d t = std::abs(e3.x()) < 0.9 ? Eigen::Vector3d(1, 0, 0) : Eigen::Vector3d(0, 1, 0);
  Eigen::Vector3d e1 = (t - t.dot(e3) * e3).normalized();
  Eigen::Vector3d e2 = e3.cross(e1);
  Eigen::Matrix3d F;
  F.col(0) = e1;
  F.col(1) = e2;
  F.col(2) = e3;
  return F;
}

Lagrange1D::Lagrange1D(std::vector<double> nodes) : x_(std::move(nodes)), bw_(x_.size()) {
  const int n = size();
  for (int j = 0; j < n; ++j) {
    double p = 1;
    for (int k = 0; k < n; ++k)
      if (k != j) p *= (x_[j] - x_[k]);
    bw_[j] = 1.0 / p;
  }
}

void Lagrange1D::basis(double t, double* out) const {
  const int n = size();
  for (int j = 0; j < n; ++j)
    if (t == x_[j]) {
      for (int k = 0; k < n; ++k) out[k] = (k == j) ? 1.0 : 0.0;
      return;
    }
  // first barycentric form: exact polynomial values, stable away from extrapolation blowup
  double ell = 1;
  for (int k = 0; k < n; ++k) ell *= (t - x_[k]);
  for (int j = 0; j < n; ++j) out[j] = ell * bw_[j] / (t - x_[j]);
}

Eigen::RowVectorXd Lagrange1D::basis(double t) const {
  Eigen::RowVectorXd r(size());
  basis(t, r.data());  // row vectors are contiguous
  return r;
}

Eigen::MatrixXd Lagrange1D::diff_matrix() const {
  const int n = size();
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double s = 0;
    for (int j = 0; j < n; ++j)
      if (i != j) {
        D(i, j) = (bw_[j] / bw_[i]) / (x_[i] - x_[j]);
        s += D(i, j);
      }
    D(i, i) = -s;
  }
  return D;
}

Eigen::MatrixXd Lagrange1D::eval_matrix(const std::vector<double>& t) const {
  Eigen::MatrixXd M(t.size(), size());
  std::vector<double> row(size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    basis(t[i], row.data());
    for (int j = 0; j < size(); ++j) M(i, j) = row[j];
  }
  return M;
}

}  // namespace ep
