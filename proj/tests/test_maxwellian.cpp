#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "ep/maxwellian.hpp"
#include "ep/quadrature.hpp"
#include "ep/velocity_grid.hpp"

using namespace ep;
using Catch::Approx;
using Eigen::Vector3d;

TEST_CASE("Gauss-Hermite rule integrates polynomials against the normal density") {
  const Rule1D r = gauss_hermite(8);
  double m0 = 0, m2 = 0, m4 = 0, m6 = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double x = r.x[i];
    m0 += r.w[i];
    m2 += r.w[i] * x * x;
    m4 += r.w[i] * std::pow(x, 4);
    m6 += r.w[i] * std::pow(x, 6);
  }
  CHECK(m0 == Approx(1).epsilon(1e-14));
  CHECK(m2 == Approx(1).epsilon(1e-13));
  CHECK(m4 == Approx(3).epsilon(1e-13));
  CHECK(m6 == Approx(15).epsilon(1e-13));
}

TEST_CASE("half-range rule: weights sum to one half, first moment is 1/sqrt(2 pi)") {
  const Rule1D r = half_range_hermite(6);
  double m0 = 0, m1 = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    CHECK(r.x[i] > 0);
    m0 += r.w[i];
    m1 += r.w[i] * r.x[i];
  }
  CHECK(m0 == Approx(0.5).epsilon(1e-13));
  CHECK(m1 == Approx(1 / std::sqrt(2 * std::numbers::pi)).epsilon(1e-13));
}

TEST_CASE("wall normalisation constant: c_mu times the one-sided flux of mu0 is one") {
  CHECK(c_mu() == Approx(std::sqrt(2 * std::numbers::pi)));
  CHECK(c_mu_grid_check(VelocityGrid::hermite(8, true)) == Approx(1).epsilon(1e-13));
}

TEST_CASE("grid moments of the shifted Maxwellian") {
  const VelocityGrid g = VelocityGrid::hermite(10);
  const Vector3d U(0.3, -0.2, 0.5);
  const double eps = 0.1;
  const GridMoments m = mu_moments(g, eps, U);
  CHECK(m.mass == Approx(1).epsilon(1e-10));
  // moments are taken in the co-moving variable, so the mean vanishes
  CHECK(m.mean.norm() < 1e-10);
  CHECK((m.cov - Eigen::Matrix3d::Identity()).norm() < 1e-8);
}

TEST_CASE("wall weights follow from the Gaussian densities") {
  const double TM = 0.9;
  for (const Vector3d xi : {Vector3d(0.1, -0.4, 0.7), Vector3d(-1.2, 0.3, -2.0), Vector3d(2.5, 1.0, 0.2)}) {
    const WeightTriple w = weights(TM, xi);
    // the weights drop the Gaussian normalisations: w1 = c mu0 / sqrt(muM)
    const double c = std::pow(2 * std::numbers::pi, 0.75) * std::pow(TM, -0.75);
    CHECK(w.w1 == Approx(c * mu0(xi) / std::sqrt(muM(TM, xi))).epsilon(1e-12));
    // muM is a normalised Gaussian with temperature TM
    const double direct = std::pow(2 * std::numbers::pi * TM, -1.5) * std::exp(-xi.squaredNorm() / (2 * TM));
    CHECK(muM(TM, xi) == Approx(direct).epsilon(1e-14));
  }
}

TEST_CASE("density ratios agree with their definitions") {
  const double eps = 0.05, TM = 0.8;
  const Vector3d U(1.0, -0.5, 0.25), xi(0.4, 1.1, -0.3);
  const double mu = mu0(xi - eps * U);
  CHECK(sqrt_muM_over_sqrt_mu(eps, TM, U, xi) == Approx(std::sqrt(muM(TM, xi)) / std::sqrt(mu)).epsilon(1e-12));
  CHECK(mu_over_sqrt_muM(eps, TM, U, xi) == Approx(mu / std::sqrt(muM(TM, xi))).epsilon(1e-12));
}

TEST_CASE("space derivative of the local Maxwellian by the chain rule matches a difference quotient") {
  MaxwellianParams p;
  p.epsilon = 0.1;
  p.flow = [](double, const Vector3d& x) -> std::optional<FlowJet> {
    FlowJet j;
    j.U = Vector3d(std::sin(x[0]), x[2] * x[2], std::cos(x[1]));
    j.grad << std::cos(x[0]), 0, 0, 0, 0, -std::sin(x[1]), 0, 2 * x[2], 0;
    return j;
  };
  const Vector3d x(0.3, 0.7, 0.4), xi(0.5, -1.0, 0.8);
  for (int k = 0; k < 3; ++k) {
    const double h = 1e-5;
    Vector3d xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    const double fd = (mu_local(p, 0, xp, xi).value - mu_local(p, 0, xm, xi).value) / (2 * h);
    CHECK(dmu_local_dx(p, 0, x, xi, k) == Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("Maxwellian setup rejects bad temperatures") {
  MaxwellianParams p;
  p.TM = -1;
  CHECK_THROWS(p.validate());
}

TEST_CASE("derivative bound ratio of a Gaussian is finite and at least the n = 0 term") {
  const double r = exp_derivative_bound_ratio(0.5, 0.5, 1.0);
  CHECK(std::isfinite(r));
  CHECK(r >= std::exp(-0.25) - 1e-15);
}
