#pragma once

#include <functional>
#include <optional>

#include <Eigen/Dense>

#include "ep/velocity_grid.hpp"

namespace ep {

// Flow velocity and its first derivatives at one space-time point.
// grad(i, j) = d_i U_j.
struct FlowJet {
  Eigen::Vector3d U = Eigen::Vector3d::Zero();
  Eigen::Matrix3d grad = Eigen::Matrix3d::Zero();
  Eigen::Vector3d dt = Eigen::Vector3d::Zero();
};

// Anything that can hand out U and its derivatives. Returns nullopt outside its domain.
using FlowProvider = std::function<std::optional<FlowJet>(double t, const Eigen::Vector3d& x)>;

struct MaxwellianParams {
  double epsilon = 0.05;
  double TM = 0.9;
  FlowProvider flow;  // empty means U = 0
  void validate() const;
};

double mu0(const Eigen::Vector3d& xi);
double c_mu();

// Velocity measured in the frame moving with eps*U.
Eigen::Vector3d rel_velocity(double eps, const Eigen::Vector3d& U, const Eigen::Vector3d& xi);

struct LocalMaxwellian {
  double value;
  Eigen::Vector3d phi;
};
LocalMaxwellian mu_local(const MaxwellianParams& p, double t, const Eigen::Vector3d& x,
                         const Eigen::Vector3d& xi);
// d/dx_k of mu_local via the chain rule: eps (d_k U . phi) mu.
double dmu_local_dx(const MaxwellianParams& p, double t, const Eigen::Vector3d& x,
                    const Eigen::Vector3d& xi, int k);

// Reference Maxwellian with temperature TM, centred at zero.
double muM(double TM, const Eigen::Vector3d& xi);

struct WeightTriple {
  double w1, w2, w3;
};
WeightTriple weights(double TM, const Eigen::Vector3d& xi);

// sqrt(muM)/sqrt(mu) and mu/sqrt(muM), derived from the Gaussian densities.
double sqrt_muM_over_sqrt_mu(double eps, double TM, const Eigen::Vector3d& U,
                             const Eigen::Vector3d& xi);
double mu_over_sqrt_muM(double eps, double TM, const Eigen::Vector3d& U, const Eigen::Vector3d& xi);

// Worst-case ratio sup_n R0^n/n! |d^n e^{-A s^2}| / e^{-A s^2/2} over n <= max_n.
double exp_derivative_bound_ratio(double A, double R0, double s, int max_n = 10);

// Weighted moments of mu0 over a grid: mass, mean, covariance.
struct GridMoments {
  double mass;
  Eigen::Vector3d mean;
  Eigen::Matrix3d cov;
};
GridMoments mu_moments(const VelocityGrid& g, double eps = 0.0,
                       const Eigen::Vector3d& U = Eigen::Vector3d::Zero());

// Wall-flux normalisation c_mu * int_{xi3 > 0} mu0 |xi3| on the grid (should be 1).
double c_mu_grid_check(const VelocityGrid& g);

constexpr double kDiagnosticP0 = 1.0 / 16.0;

}  // namespace ep
