#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "ep/config.hpp"
#include "ep/error.hpp"
#include "ep/report.hpp"

using namespace ep;

namespace {
std::string config_error(const std::string& yaml) {
  try {
    RunConfig::from_yaml_text(yaml);
  } catch (const Error& e) {
    CHECK(e.is_config());
    return e.what();
  }
  return "";
}
}  // namespace

TEST_CASE("empty config gives the defaults") {
  const RunConfig c = RunConfig::from_yaml_text("");
  CHECK(c.epsilon == 0.05);
  CHECK(c.fluid.N == 2);
  CHECK(c.kappas.size() == 5);
  CHECK(c.transport.epsilon == c.epsilon);
}

TEST_CASE("unknown keys are rejected with their dotted path") {
  CHECK_THAT(config_error("scales:\n  epsilonn: 0.1\n"), Catch::Matchers::ContainsSubstring("scales.epsilonn"));
  CHECK_THAT(config_error("grids:\n  velocity:\n    nv: 8\n"),
             Catch::Matchers::ContainsSubstring("grids.velocity.nv"));
  CHECK_THAT(config_error("colour: red\n"), Catch::Matchers::ContainsSubstring("colour"));
}

TEST_CASE("range violations are config errors") {
  CHECK_THAT(config_error("scales:\n  epsilon: -1\n"), Catch::Matchers::ContainsSubstring("epsilon"));
  CHECK_THAT(config_error("physics:\n  rho: 0.5\n"), Catch::Matchers::ContainsSubstring("p0"));
  CHECK_THAT(config_error("grids:\n  velocity:\n    n_v: 7\n"), Catch::Matchers::ContainsSubstring("n_v"));
  CHECK_THAT(config_error("run:\n  refinement_dts: [1e-4, 2e-4, 5e-5]\n"),
             Catch::Matchers::ContainsSubstring("refinement_dts"));
  CHECK_THAT(config_error("scales:\n  epsilon: [1, 2]\n"), Catch::Matchers::ContainsSubstring("wrong type"));
}

TEST_CASE("a profile without its amplitude names the missing key") {
  const std::string yaml =
      "data:\n  preset: none\n  shear:\n    b1:\n      - {kind: power_exp, power: 1}\n";
  CHECK_THAT(config_error(yaml), Catch::Matchers::ContainsSubstring("data.shear.b1"));
}

TEST_CASE("bad temperature is reported as a config problem") {
  try {
    RunConfig::from_yaml_text("physics:\n  TM: 1.5\n");
    RunConfig c = RunConfig::from_yaml_text("");
    c.TM = -1;
    c.validate();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.is_config());
  }
}

TEST_CASE("hash ignores directories and tracks physics") {
  const RunConfig a = RunConfig::from_yaml_text("run:\n  output_dir: x\n  cache_dir: y\n");
  const RunConfig b = RunConfig::from_yaml_text("run:\n  output_dir: z\n");
  const RunConfig c = RunConfig::from_yaml_text("scales:\n  delta: 0.25\n");
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() != c.hash());
  CHECK(a.hash().size() == 16);
}

TEST_CASE("report JSON carries the schema fields and is append-only on disk") {
  Report r("selftest", "0123456789abcdef", 7);
  CheckResult c;
  c.id = "x";
  c.criterion = 1;
  c.pass = true;
  c.value = 0;
  c.tolerance = 1;
  c.relation = "<=";
  c.seconds = 3.5;  // never serialised
  r.add(c);
  const Json j = Json::parse(r.dump());
  for (const char* key : {"schema", "command", "version", "config_hash", "seed", "checks", "tables", "status"})
    CHECK(j.contains(key));
  CHECK(j["status"] == "pass");
  CHECK(j["checks"][0]["status"] == "pass");
  CHECK(r.dump().find("3.5") == std::string::npos);

  const auto dir = std::filesystem::temp_directory_path() / "ep_report_test";
  std::filesystem::remove_all(dir);
  const std::string p1 = r.write(dir.string()), p2 = r.write(dir.string());
  CHECK(p1 != p2);
  std::ifstream a(p1), b(p2);
  const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
  std::filesystem::remove_all(dir);
}
