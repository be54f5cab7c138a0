#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "ep/config.hpp"
#include "ep/error.hpp"
#include "ep/fluid.hpp"

using namespace ep;
using Catch::Approx;

namespace {
FluidConfig small_config(int N, InitialData data) {
  FluidConfig c;
  c.N = N;
  c.data = std::move(data);
  c.grid.K_max = 4;
  c.grid.n_x = 32;
  c.grid.n_z = 48;
  return c;
}
}  // namespace

TEST_CASE("profiles evaluate their closed forms") {
  const Profile p = Profile::power_exp(2.0, 2, 0.5, 0.1);
  CHECK(p(1.5) == Approx(2.0 * 2.25 * std::exp(-0.75 - 0.225)));
  const Profile e = Profile::erfc(-1.0, 2.0);
  CHECK(e(1.0) == Approx(-std::erfc(0.5)));
  CHECK(Profile::constant(3.0)(7.0) == Approx(3.0));
}

TEST_CASE("data terms combine profile sums with the tangential phase") {
  ComponentData d{DataTerm{1, 2, true, {Profile::constant(1.0), Profile::constant(0.5)}}};
  CHECK(evaluate(d, 0.3, 0.4, 0.0) == Approx(1.5 * std::sin(0.3 + 0.8)));
}

TEST_CASE("base shear layer follows the erfc heat-kernel solution") {
  ExpansionStack st(small_config(0, InitialData::pure_shear()));
  st.advance_to(0.1);
  CHECK(st.heat_kernel_error() < 1e-4);
}

TEST_CASE("layer stack keeps its matching conditions") {
  ExpansionStack st(small_config(2, InitialData::shear_default()));
  st.advance_to(0.05);
  const MatchingReport m = st.matching(st.fields());
  CHECK(m.slip < 1e-8);
  CHECK(m.wall_normal < 1e-8);
  CHECK(m.euler_div < 1e-8);
  CHECK(m.prandtl_div < 1e-8);
  CHECK(m.far_field < 1e-6);
}

TEST_CASE("snapshot round trip restores the state exactly") {
  ExpansionStack st(small_config(1, InitialData::shear_default()));
  st.advance_to(0.02);
  const std::string path = (std::filesystem::temp_directory_path() / "ep_stack_roundtrip.bin").string();
  st.save(path);
  ExpansionStack back(small_config(1, InitialData::shear_default()));
  back.load(path);
  CHECK(back.time() == st.time());
  CHECK((back.state().up[1][0] - st.state().up[1][0]).cwiseAbs().maxCoeff() == 0.0);
  std::filesystem::remove(path);
}

TEST_CASE("missing matching layer is a config error naming the key") {
  InitialData d = InitialData::shear_default();
  d.prandtl.erase(1);
  try {
    small_config(2, d).validate();
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.is_config());
    CHECK_THAT(std::string(e.what()), Catch::Matchers::ContainsSubstring("data.prandtl[1]"));
  }
  const std::string yaml = "data:\n  preset: none\n  shear:\n    b1:\n      - {kind: power_exp, c: 1.0}\n";
  CHECK_THROWS_WITH(RunConfig::from_yaml_text(yaml), Catch::Matchers::ContainsSubstring("data.prandtl[0]"));
}

TEST_CASE("Euler data must have zero tangential mean") {
  InitialData d = InitialData::pure_shear();
  d.euler[1][0] = {DataTerm{0, 0, false, {Profile::power_exp(1.0, 1, 1, 0)}}};
  CHECK_THROWS_AS(d.validate(2, 4), Error);
}
