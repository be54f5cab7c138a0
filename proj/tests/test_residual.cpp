#include <catch_amalgamated.hpp>

#include <cmath>

#include "ep/residual.hpp"

using namespace ep;
using Catch::Approx;

TEST_CASE("log-log slope of an exact power law") {
  const std::vector<double> x{1e-3, 1e-2, 1e-1};
  std::vector<double> y;
  for (double v : x) y.push_back(4.0 * std::pow(v, 1.5));
  CHECK(loglog_slope(x, y) == Approx(1.5).epsilon(1e-12));
}

TEST_CASE("analytic norm of a single tangential mode") {
  const Tangential tan(3);
  const int nz = 5;
  Vec w(nz);
  w << 0.1, 0.2, 0.3, 0.2, 0.1;
  Mat f(tan.rows(), nz);
  double sq = 0;
  for (int r = 0; r < tan.rows(); ++r)
    for (int j = 0; j < nz; ++j) {
      f(r, j) = std::sin(2 * tan.x1(r)) * (1.0 + j);
      sq += f(r, j) * f(r, j) * w[j] * tan.cell();
    }
  const double tau = 0.1;
  const int max_order = 4;
  double expect = 0;
  for (int a = 0; a <= max_order; ++a) expect += std::pow(tau, a) * std::pow(1.0 + a, 9) / std::tgamma(a + 1.0) * std::pow(2.0, a);
  const AnalyticNorm n = analytic_norm(tan, {f}, {}, w, tau, max_order, 12);
  CHECK(n.value == Approx(expect * std::sqrt(sq)).epsilon(1e-10));
  CHECK(n.tail > 0);
  CHECK(n.tail < n.value);
}

TEST_CASE("residual routes agree on a small stack") {
  FluidConfig c;
  c.N = 1;
  c.grid.K_max = 3;
  c.grid.n_x = 32;
  c.grid.n_z = 40;
  ExpansionStack st(c);
  st.advance_to(0.02);
  const ResidualEvaluator ev(st);
  for (double kappa : {1e-1, 1e-2}) CHECK(ev.route_gap(kappa) < 1e-6);
  const ResidualReport r = ev.direct(1e-2);
  CHECK(r.total == Approx(r.ns + r.div));
  CHECK(r.total > 0);
}

TEST_CASE("sweep table has the documented columns") {
  FluidConfig c;
  c.N = 0;
  c.data = InitialData::pure_shear();
  c.grid.K_max = 2;
  c.grid.n_x = 24;
  c.grid.n_z = 32;
  ExpansionStack st(c);
  st.advance_to(0.01);
  const SweepResult s = kappa_sweep(st, {1e-1, 1e-2, 1e-3});
  CHECK(s.csv().rfind("kappa,N,ns_par,ns_normal,div,total\n", 0) == 0);
  CHECK(s.points.size() == 3);
  CHECK(std::isfinite(s.slope));
}
