#include "ep/maxwellian.hpp"

#include <cmath>
#include <numbers>

#include "ep/error.hpp"

namespace ep {

namespace {
constexpr double kTwoPi = 2 * std::numbers::pi;

FlowJet jet_at(const MaxwellianParams& p, double t, const Eigen::Vector3d& x) {
  if (!p.flow) return {};
  auto j = p.flow(t, x);
  if (!j) throw Error(ErrorKind::FieldUnavailable, "flow field not available at requested point");
  return *j;
}
}  // namespace

void MaxwellianParams::validate() const {
  if (!(epsilon > 0)) throw Error(ErrorKind::Config, "epsilon must be positive");
  if (!(TM > 0.5 && TM < 1.0)) throw Error(ErrorKind::BadTemperature, "T_M must lie in (1/2, 1)");
}

double mu0(const Eigen::Vector3d& xi) { return std::pow(kTwoPi, -1.5) * std::exp(-0.5 * xi.squaredNorm()); }

double c_mu() { return std::sqrt(kTwoPi); }

Eigen::Vector3d rel_velocity(double eps, const Eigen::Vector3d& U, const Eigen::Vector3d& xi) {
  return xi - eps * U;
}

LocalMaxwellian mu_local(const MaxwellianParams& p, double t, const Eigen::Vector3d& x,
                         const Eigen::Vector3d& xi) {
  const FlowJet j = jet_at(p, t, x);
  const Eigen::Vector3d phi = rel_velocity(p.epsilon, j.U, xi);
  return {mu0(phi), phi};
}

double dmu_local_dx(const MaxwellianParams& p, double t, const Eigen::Vector3d& x,
                    const Eigen::Vector3d& xi, int k) {
  const FlowJet j = jet_at(p, t, x);
  const Eigen::Vector3d phi = rel_velocity(p.epsilon, j.U, xi);
  return p.epsilon * j.grad.row(k).dot(phi) * mu0(phi);
}

double muM(double TM, const Eigen::Vector3d& xi) {
  return std::pow(kTwoPi * TM, -1.5) * std::exp(-xi.squaredNorm() / (2 * TM));
}

WeightTriple weights(double TM, const Eigen::Vector3d& xi) {
  if (!(TM > 0.5 && TM < 1.0)) throw Error(ErrorKind::BadTemperature, "T_M must lie in (1/2, 1)");
  const double r2 = xi.squaredNorm();
  WeightTriple w;
  w.w1 = std::exp(-(r2 / 4) * (2 - 1 / TM));
  w.w2 = xi[2] < 0 ? std::exp(-r2 / (4 * TM)) * std::abs(xi[2]) : 0.0;
  w.w3 = std::pow(TM, 1.5) * std::exp(-(r2 / 4) * (1 / TM - 1));
  return w;
}

double sqrt_muM_over_sqrt_mu(double eps, double TM, const Eigen::Vector3d& U, const Eigen::Vector3d& xi) {
  const Eigen::Vector3d phi = xi - eps * U;
  return std::pow(TM, -0.75) * std::exp(-xi.squaredNorm() / (4 * TM) + phi.squaredNorm() / 4);
}

double mu_over_sqrt_muM(double eps, double TM, const Eigen::Vector3d& U, const Eigen::Vector3d& xi) {
  const Eigen::Vector3d phi = xi - eps * U;
  return std::pow(kTwoPi, -0.75) * std::pow(TM, 0.75) *
         std::exp(-phi.squaredNorm() / 2 + xi.squaredNorm() / (4 * TM));
}

double exp_derivative_bound_ratio(double A, double R0, double s, int max_n) {
  // d^n/ds^n e^{-A s^2} = (-sqrt A)^n H_n(sqrt(A) s) e^{-A s^2}, physicists' Hermite H_n
  const double y = std::sqrt(A) * s;
  double h0 = 1, h1 = 2 * y;
  double worst = 1.0;  // n = 0 term: e^{-As^2} / e^{-As^2/2} <= 1
  double fact = 1, pw = 1;
  worst = std::exp(-A * s * s / 2);
  for (int n = 1; n <= max_n; ++n) {
    const double hn = (n == 1) ? h1 : 0.0;
    double h = hn;
    if (n >= 2) {
      h = 2 * y * h1 - 2 * (n - 1) * h0;
      h0 = h1;
      h1 = h;
    }
    fact *= n;
    pw *= R0 * std::sqrt(A);
    const double term = pw / fact * std::abs(h) * std::exp(-A * s * s / 2);
    worst = std::max(worst, term);
  }
  return worst;
}

GridMoments mu_moments(const VelocityGrid& g, double eps, const Eigen::Vector3d& U) {
  GridMoments m{0, Eigen::Vector3d::Zero(), Eigen::Matrix3d::Zero()};
  for (int i = 0; i < g.size(); ++i) {
    const Eigen::Vector3d phi = g.node(i) - eps * U;
    const double f = g.weight()[i] * mu0(phi);
    m.mass += f;
    m.mean += f * phi;
    m.cov += f * phi * phi.transpose();
  }
  return m;
}

double c_mu_grid_check(const VelocityGrid& g) {
  double s = 0;
  for (int i = 0; i < g.size(); ++i)
    if (g.node(i)[2] > 0) s += g.weight_mu()[i] * g.node(i)[2];
  return c_mu() * s;
}

}  // namespace ep
