#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "common.hpp"
#include "ep/collision.hpp"
#include "ep/quadrature.hpp"

using namespace ep;
using Catch::Approx;
using Eigen::Vector3d;
using Eigen::VectorXd;

namespace {

// 2 pi int |u| mu0(xi + u) du in spherical coordinates around xi.
double nu_by_quadrature(const Vector3d& xi) {
  const Rule1D rad = gauss_legendre(60, 0.0, 12.0);
  const SphereRule sph = sphere_product(24, 48);
  double s = 0;
  for (std::size_t d = 0; d < sph.dir.size(); ++d)
    for (std::size_t k = 0; k < rad.size(); ++k) {
      const double r = rad.x[k];
      s += sph.w[d] * rad.w[k] * r * r * r * mu0(xi + r * sph.dir[d]);
    }
  return 2 * std::numbers::pi * s;
}

}  // namespace

TEST_CASE("collision frequency matches direct quadrature of the loss integral") {
  for (const Vector3d xi : {Vector3d(0, 0, 0), Vector3d(0.5, 0, 0), Vector3d(1, -1, 2), Vector3d(0, 3, 0.1)})
    CHECK(nu_hard_sphere(xi.norm()) == Approx(nu_by_quadrature(xi)).epsilon(1e-9));
}

TEST_CASE("hydrodynamic projection reproduces invariants and is self-adjoint") {
  const Collision& c = *test_collision();
  for (const auto& v : c.invariants()) CHECK(c.norm(c.project(v) - v) < 1e-10 * c.norm(v));
  const VectorXd p = random_reduced(c.grid(), 3), q = random_reduced(c.grid(), 4);
  CHECK(std::abs(c.inner(c.project(p), q) - c.inner(p, c.project(q))) < 1e-10 * c.norm(p) * c.norm(q));
}

TEST_CASE("Gaussian moment brackets: closed-form values") {
  // with s = |phi|^2: E s = 3, E s^2 = 15, E s^3 = 105
  const OrthogonalityReport r = moment_orthogonality_check(test_collision()->grid());
  CHECK(std::abs(r.a10_full) < 1e-10);
  CHECK(std::abs(r.b5_short) < 1e-10);
  CHECK(r.a5_full == Approx(30.0).epsilon(1e-10));
  CHECK(r.b10_short == Approx(-15.0).epsilon(1e-10));
}

TEST_CASE("linear operator: invariants, symmetry, positivity") {
  const Collision& c = *test_collision();
  for (const auto& v : c.invariants()) CHECK(c.norm(c.apply_L(v)) < 1e-5 * c.norm(v));
  const VectorXd p = random_reduced(c.grid(), 5), q = random_reduced(c.grid(), 6);
  CHECK(std::abs(c.inner(c.apply_L(p), q) - c.inner(p, c.apply_L(q))) < 1e-8 * c.norm(p) * c.norm(q));
  const GapReport g = spectral_gap(c, 20, 9);
  CHECK(g.min_form >= 0);
  CHECK(g.gap_constant > 0);
}

TEST_CASE("nonlinear term is symmetric and its matrix form agrees") {
  const Collision& c = *test_collision();
  const VectorXd p = random_reduced(c.grid(), 7), q = random_reduced(c.grid(), 8);
  const VectorXd G = c.gamma(p, q);
  CHECK(c.norm(G - c.gamma(q, p)) < 1e-12 * c.norm(G));
  CHECK(c.norm(c.gamma_matrix(p) * q - G) < 1e-10 * c.norm(G));
  // Gamma(1, 1) vanishes since mu0 is an equilibrium: gain and loss (nu) cancel up to
  // the interpolation floor of the gain term, a few 1e-4 of either on the default grid
  const VectorXd one = VectorXd::Ones(c.size());
  CHECK(c.norm(c.gamma(one, one)) < 1e-3 * c.norm(c.nu()));
}

TEST_CASE("A_ij solves the source equation and has the isotropic Gram structure") {
  const Collision& c = *test_collision();
  const AijResult& a = test_aij();
  CHECK(a.eta0 > 0);
  CHECK(a.gram_fit_residual <= 1e-2);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      CHECK(c.norm(a.A[i][j] - a.A[j][i]) < 1e-10 * c.norm(a.A[i][j]));
      CHECK(c.norm(c.apply_L(a.A[i][j]) - a.Ahat[i][j]) < 1e-6 * c.norm(a.Ahat[i][j]));
    }
}

TEST_CASE("gain term: direct and kernel routes agree") {
  const KineticFn f = [](const Vector3d& e) { return std::exp(-0.3 * e.squaredNorm()) * (1 + 0.2 * e[0]); };
  const Vector3d xi(0.7, -0.3, 1.1);
  const GainQuadrature q;
  const double direct = k2_direct(xi, f, q).total, kernel = k2_kernel_route(xi, f, q);
  CHECK(std::abs(direct - kernel) < 1e-5 * std::abs(direct));
}

TEST_CASE("wall projection is idempotent and constant") {
  const VelocityGrid g = VelocityGrid::hermite(10, true);
  const VectorXd p = random_reduced(g, 12);
  const VectorXd P = boundary_project(g, p);
  CHECK((P.array() - P[0]).abs().maxCoeff() == 0.0);
  CHECK((boundary_project(g, P) - P).cwiseAbs().maxCoeff() < 1e-12 * std::abs(P[0]));
}

TEST_CASE("tables survive a save and load round trip") {
  const Collision& c = *test_collision();
  const std::string path = (std::filesystem::temp_directory_path() / "ep_collision_roundtrip.bin").string();
  c.save(path);
  const auto back = Collision::load(path, c.config());
  REQUIRE(back);
  CHECK((back->L() - c.L()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back->nu() - c.nu()).cwiseAbs().maxCoeff() == 0.0);
  std::filesystem::remove(path);
}

TEST_CASE("cache key separates grid choices") {
  CollisionConfig a, b;
  b.n_v = 10;
  CHECK(a.key() != b.key());
}
