#include <catch_amalgamated.hpp>

#include <cmath>

#include "common.hpp"
#include "ep/hilbert.hpp"

using namespace ep;
using Catch::Approx;
using Eigen::VectorXd;

namespace {

const HilbertKernel& kernel() {
  static const HilbertKernel K(test_collision(), test_aij());
  return K;
}

FlowPoint sample_flow() {
  FlowPoint p;
  p.P = 0.8;
  p.grad << 0.3, -0.2, 0.1, 0.05, -0.4, 0.2, 0.0, 0.15, 0.1;  // trace zero
  return p;
}

}  // namespace

TEST_CASE("second-order correction is pressure minus the strain against A_ij") {
  HilbertContext ctx;
  const FlowPoint flow = sample_flow();
  const VectorXd f2 = build_f2(kernel(), ctx, flow);
  VectorXd expect = VectorXd::Constant(f2.size(), flow.P);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) expect -= ctx.kappa * flow.grad(i, j) * kernel().A(i, j);
  CHECK((f2 - expect).cwiseAbs().maxCoeff() < 1e-12 * expect.cwiseAbs().maxCoeff());

  ctx.pressure = 2.0;
  const VectorXd fixed = build_f2(kernel(), ctx, flow);
  CHECK((fixed - f2).cwiseAbs().maxCoeff() == Approx(1.2).epsilon(1e-12));
}

TEST_CASE("bilinear table reproduces the direct nonlinear term") {
  HilbertContext ctx;
  const FlowPoint flow = sample_flow();
  const GammaTable table = GammaTable::build_or_load(kernel(), EP_TEST_CACHE);
  const VectorXd f2 = build_f2(kernel(), ctx, flow);
  const VectorXd direct = kernel().collision().gamma(f2, f2);
  const VectorXd tabled = table.apply(ctx, flow);
  CHECK(kernel().collision().norm(tabled - direct) < 1e-10 * kernel().collision().norm(direct));
}

TEST_CASE("scaling exponents of the regime") {
  HilbertContext ctx;
  ctx.kappa = 0.01;
  ctx.epsilon = 1e-4;  // kappa^2
  ctx.delta = 0.1;     // kappa^(1/2)
  CHECK(ctx.regime_eps() == Approx(1.0));
  CHECK(ctx.regime_delta() == Approx(0.5));
  ctx.kappa = -1;
  CHECK_THROWS(ctx.validate());
}
