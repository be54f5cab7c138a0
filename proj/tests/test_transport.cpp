#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "common.hpp"
#include "ep/error.hpp"
#include "ep/transport.hpp"

using namespace ep;
using Catch::Approx;
using Eigen::Vector3d;

namespace {

TransportConfig small_transport() {
  TransportConfig c;
  c.K_par = 1;
  c.n_normal = 24;
  c.dt = 1e-4;
  c.t_final = 3e-4;
  return c;
}

const LinearTransport& lt() {
  static const LinearTransport t(test_collision(), small_transport());
  return t;
}

// Constant collision frequency, h0 and source: every path integral has a closed form.
DuhamelSources constant_sources(double nu, double h0, double g, double Kh, double r) {
  DuhamelSources s;
  s.nu = [nu](int, double, const Vector3d&) { return nu; };
  s.h0 = [h0](int, const Vector3d&) { return h0; };
  s.g = [g](int, double, const Vector3d&) { return g; };
  s.Kh = [Kh](int, double, const Vector3d&) { return Kh; };
  s.r = [r](int, double, const Vector3d&) { return r; };
  return s;
}

int velocity_with(bool upward) {
  const VelocityGrid& g = lt().velocity();
  for (int q = 0; q < g.size(); ++q)
    if ((g.node(q)[2] > 0.5) == upward && std::abs(g.node(q)[2]) > 0.5) return q;
  return -1;
}

}  // namespace

TEST_CASE("backward exit time and point") {
  const Characteristic c = backward_exit(Vector3d(1, 2, 0.6), Vector3d(0.5, 0, 2.0), 0.1);
  REQUIRE(c.exits);
  CHECK(c.tb == Approx(0.1 * 0.6 / 2.0));
  CHECK((c.xb - Vector3d(1 - 0.15, 2, 0)).norm() < 1e-14);
  CHECK_FALSE(backward_exit(Vector3d(0, 0, 1), Vector3d(0, 0, -1), 0.1).exits);
}

TEST_CASE("wall weights from the Gaussian densities") {
  const Vector3d xi(0.3, -0.2, -1.1);
  const WallWeights w = wall_weights(0.9, xi);
  const double sM = std::sqrt(muM(0.9, xi));
  CHECK(w.w1 == Approx(mu0(xi) / sM));
  CHECK(w.w2 == Approx(sM * 1.1));
  CHECK(w.w3inv == Approx(std::sqrt(mu0(xi)) / sM));
  CHECK(wall_weights(0.9, Vector3d(0, 0, 1)).w2 == 0.0);
}

TEST_CASE("mild form with constant frequency: interior path") {
  const double nu = 3.0, h0 = 0.7, g = 0.4, Kh = 0.2;
  const DuhamelSources src = constant_sources(nu, h0, g, Kh, 0.0);
  const int q = velocity_with(false);  // moving away from the wall: the backward path stays inside
  REQUIRE(q >= 0);
  const double eps = lt().config().epsilon, stiff = lt().config().kappa * eps * eps;
  const double t = 2e-4;
  const Vector3d x(1.0, 2.0, 0.5);
  const DuhamelTerms d = duhamel_terms(lt(), src, t, x, q);
  const double decay = std::exp(-nu * t / stiff);
  CHECK(d.I == Approx(decay * h0).epsilon(1e-10));
  CHECK(d.F == Approx(g * stiff / nu * (1 - decay)).epsilon(1e-10));
  CHECK(d.M == Approx(Kh / nu * (1 - decay)).epsilon(1e-10));
  CHECK(d.B == 0.0);
}

TEST_CASE("mild form with constant frequency: one wall bounce") {
  const double nu = 3.0, h0 = 0.7, r = 0.25;
  const DuhamelSources src = constant_sources(nu, h0, 0.0, 0.0, r);
  const int q = velocity_with(true);
  REQUIRE(q >= 0);
  const VelocityGrid& g = lt().velocity();
  const double eps = lt().config().epsilon, stiff = lt().config().kappa * eps * eps;
  const double t = 2e-4;
  // put the wall hit at half the elapsed time
  const double tb = 0.5 * t;
  const Vector3d x(0.5, 0.5, tb * g.node(q)[2] / eps);
  const DuhamelTerms d = duhamel_terms(lt(), src, t, x, q);
  CHECK(d.B == Approx(std::exp(-nu * tb / stiff) * lt().w3inv()[q] * r).epsilon(1e-10));
  // initial data reaches the point through the diffuse wall: every outgoing path keeps the full decay
  double outgoing = 0;
  for (int k = 0; k < g.size(); ++k)
    if (g.node(k)[2] < 0) outgoing += g.weight()[k] * lt().w2()[k];
  CHECK(d.I == Approx(std::exp(-nu * t / stiff) * h0 * lt().c_mu() * lt().w1()[q] * outgoing).epsilon(1e-10));
}

TEST_CASE("frame change round trip") {
  const LinearTransport& T = lt();
  FlowOnGrid flow = FlowOnGrid::zero(T.n_space());
  for (int s = 0; s < T.n_space(); ++s) flow.U.row(s) = Vector3d(0.3, -0.1, 0.2 * std::sin(s)).transpose();
  KineticField h{Frame::H, 0.0, Mat::Random(T.n_space(), T.n_vel())};
  const KineticField back = T.to_h(T.to_f(h, flow), flow);
  CHECK((back.data - h.data).cwiseAbs().maxCoeff() < 1e-12 * h.data.cwiseAbs().maxCoeff());
  CHECK_THROWS_AS(T.to_f(T.to_f(h, flow), flow), Error);
}

TEST_CASE("wall condition leaves no mass flux, and the global Maxwellian is stationary") {
  const LinearTransport& T = lt();
  const Mat zero_r = Mat::Zero(T.rows(), T.n_vel());
  Mat h = Mat::Random(T.n_space(), T.n_vel());
  T.impose_wall(h, zero_r);
  CHECK(T.wall_mass_flux(h).cwiseAbs().maxCoeff() < 1e-13);

  KineticField eq{Frame::H, 0.0, Mat(T.n_space(), T.n_vel())};
  for (int s = 0; s < T.n_space(); ++s) eq.data.row(s) = T.w1().transpose();
  const Mat start = eq.data;
  const Mat inc = Mat::Zero(T.n_space(), T.n_vel());
  for (int k = 0; k < 3; ++k) T.step(eq, inc, zero_r, T.config().dt);
  CHECK((eq.data - start).cwiseAbs().maxCoeff() < 1e-12 * start.cwiseAbs().maxCoeff());
}

TEST_CASE("diffusely reflecting traces have zero normal flux") {
  const VelocityGrid g = VelocityGrid::hermite(10, true);
  Eigen::VectorXd F(g.size());
  for (int q = 0; q < g.size(); ++q) F[q] = std::exp(-0.3 * g.node(q).squaredNorm()) * (1 + 0.4 * g.node(q)[2]);
  const TraceReport before = boundary_trace_check(g, F);
  CHECK(before.flux > 1e-3);
  CHECK(boundary_trace_check(g, diffuse_fill(g, F)).flux < 1e-12);
}

TEST_CASE("static moment identities hold to rounding") {
  const StaticConservation s = conservation_static(test_collision()->grid(), 0.05, 0.3, 4);
  CHECK(s.mu_defect < 1e-12);
  CHECK(s.pressure_defect < 1e-12);
}

TEST_CASE("kinetic snapshots round trip and reject foreign files") {
  KineticField h{Frame::H, 0.125, Mat::Random(7, 5)};
  const auto dir = std::filesystem::temp_directory_path();
  const std::string path = (dir / "ep_kinetic_roundtrip.bin").string();
  save_snapshot(h, path);
  const KineticField back = load_snapshot(path);
  CHECK(back.frame == Frame::H);
  CHECK(back.t == 0.125);
  CHECK(back.data == h.data);
  const std::string junk = (dir / "ep_not_a_snapshot.bin").string();
  std::ofstream(junk) << "hello world, not binary";
  CHECK_THROWS_AS(load_snapshot(junk), Error);
  std::filesystem::remove(path);
  std::filesystem::remove(junk);
}

TEST_CASE("transport settings are validated") {
  TransportConfig c = small_transport();
  c.dt = -1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_transport();
  c.n_normal = 2;
  CHECK_THROWS_AS(c.validate(), Error);
}
