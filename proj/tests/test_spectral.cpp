#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "ep/quadrature.hpp"
#include "ep/spectral.hpp"
#include "ep/transport.hpp"

using namespace ep;
using Catch::Approx;

TEST_CASE("Chebyshev collocation differentiates and integrates polynomials exactly") {
  const Chebyshev c(16, 3.0);
  Vec f(c.size()), df(c.size()), F(c.size());
  for (int i = 0; i < c.size(); ++i) {
    const double x = c.x()[i];
    f[i] = 1 + x - 2 * x * x * x + 0.1 * std::pow(x, 7);
    df[i] = 1 - 6 * x * x + 0.7 * std::pow(x, 6);
    F[i] = x + x * x / 2 - x * x * x * x / 2 + 0.1 * std::pow(x, 8) / 8;
  }
  CHECK((c.D() * f - df).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((c.Q() * f - F).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(c.w().dot(f) == Approx(F[c.size() - 1] - F[0]).epsilon(1e-12));
  CHECK(c.x()[0] == 0.0);
}

TEST_CASE("Chebyshev evaluation rows interpolate") {
  const Chebyshev c(12, 2.0);
  Vec f(c.size());
  for (int i = 0; i < c.size(); ++i) f[i] = std::pow(c.x()[i], 5);
  for (double t : {0.0, 0.37, 1.9, 2.0}) CHECK(c.eval_row(t).dot(f) == Approx(std::pow(t, 5)).margin(1e-12));
}

TEST_CASE("Fourier collocation differentiates trigonometric polynomials exactly") {
  const Periodic p(4);
  Vec f(p.n()), df(p.n());
  for (int i = 0; i < p.n(); ++i) {
    const double x = p.x()[i];
    f[i] = std::sin(3 * x) + std::cos(x);
    df[i] = 3 * std::cos(3 * x) - std::sin(x);
  }
  CHECK((p.D() * f - df).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(p.eval_row(0.123).dot(f) == Approx(std::sin(0.369) + std::cos(0.123)).epsilon(1e-12));
  const Mat V = p.V();
  CHECK((V * p.lambda().asDiagonal() * V.transpose() - p.D() * p.D()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("tangential operators act per axis") {
  const Tangential t(3);
  Mat f(t.rows(), 1);
  for (int r = 0; r < t.rows(); ++r) f(r, 0) = std::sin(t.x1(r)) * std::cos(2 * t.x2(r));
  Mat d1(t.rows(), 1), d2(t.rows(), 1);
  for (int r = 0; r < t.rows(); ++r) {
    d1(r, 0) = std::cos(t.x1(r)) * std::cos(2 * t.x2(r));
    d2(r, 0) = -2 * std::sin(t.x1(r)) * std::sin(2 * t.x2(r));
  }
  CHECK((t.d1(f) - d1).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((t.d2(f) - d2).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((t.from_modes(t.to_modes(f)) - f).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(t.cell() * t.rows() == Approx(4 * std::numbers::pi * std::numbers::pi));
}

TEST_CASE("stretched normal grid: derivative, weights and interpolation") {
  const StretchedNormal s(40, 4.0, 5.0);
  CHECK(s.x()[0] == Approx(0.0).margin(1e-15));
  CHECK(s.x()[s.size() - 1] == Approx(4.0));
  Vec f(s.size()), df(s.size());
  for (int i = 0; i < s.size(); ++i) {
    f[i] = std::exp(-s.x()[i]);
    df[i] = -f[i];
  }
  CHECK((s.D() * f - df).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(s.w().dot(f) == Approx(1 - std::exp(-4.0)).epsilon(1e-10));
  CHECK(s.eval_row(1.234).dot(f) == Approx(std::exp(-1.234)).epsilon(1e-9));
  // nodes cluster at the wall
  CHECK(s.x()[1] < 0.1 * (4.0 / 40));
}

TEST_CASE("Lagrange basis is a partition of unity and differentiates exactly") {
  const Lagrange1D l({-1.0, -0.3, 0.2, 0.9, 1.5});
  const Eigen::RowVectorXd b = l.basis(0.41);
  CHECK(b.sum() == Approx(1.0).epsilon(1e-14));
  Eigen::VectorXd f(5), df(5);
  for (int i = 0; i < 5; ++i) {
    const double x = l.nodes()[i];
    f[i] = x * x * x - x;
    df[i] = 3 * x * x - 1;
  }
  CHECK((l.diff_matrix() * f - df).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sphere rule integrates low-degree polynomials") {
  const SphereRule s = sphere_product(8, 16);
  double area = 0, z2 = 0;
  for (std::size_t i = 0; i < s.dir.size(); ++i) {
    area += s.w[i];
    z2 += s.w[i] * s.dir[i][2] * s.dir[i][2];
  }
  CHECK(area == Approx(4 * std::numbers::pi).epsilon(1e-13));
  CHECK(z2 == Approx(4 * std::numbers::pi / 3).epsilon(1e-13));
}
