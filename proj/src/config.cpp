#include "ep/config.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "ep/error.hpp"

namespace ep {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& what) { throw Error(ErrorKind::Config, what); }

void check_keys(const YAML::Node& n, const std::string& where, const std::set<std::string>& allowed) {
  if (!n.IsMap()) fail(where + ": expected a mapping");
  for (const auto& kv : n) {
    const std::string k = kv.first.as<std::string>();
    if (!allowed.count(k)) fail("unknown key " + (where.empty() ? k : where + "." + k));
  }
}

template <class T>
void get(const YAML::Node& n, const std::string& where, const char* key, T& out) {
  const YAML::Node v = n[key];
  if (!v) return;
  try {
    out = v.as<T>();
  } catch (const YAML::Exception&) {
    fail(where + "." + key + ": wrong type");
  }
}

Profile parse_profile(const YAML::Node& n, const std::string& where) {
  check_keys(n, where, {"kind", "c", "power", "lambda", "gamma", "width"});
  std::string kind = "power_exp";
  get(n, where, "kind", kind);
  Profile p;
  if (kind == "power_exp") {
    p.kind = Profile::Kind::PowerExp;
    if (n["width"]) fail(where + ".width: only erfc profiles take a width");
  } else if (kind == "erfc") {
    p.kind = Profile::Kind::Erfc;
    if (n["power"] || n["lambda"] || n["gamma"]) fail(where + ": erfc profiles take c and width only");
  } else {
    fail(where + ".kind: expected power_exp or erfc");
  }
  if (!n["c"]) fail(where + ".c: missing");
  get(n, where, "c", p.c);
  get(n, where, "power", p.power);
  get(n, where, "lambda", p.lambda);
  get(n, where, "gamma", p.gamma);
  get(n, where, "width", p.width);
  return p;
}

std::vector<Profile> parse_profiles(const YAML::Node& n, const std::string& where) {
  if (!n.IsSequence()) fail(where + ": expected a list of profiles");
  std::vector<Profile> out;
  for (std::size_t i = 0; i < n.size(); ++i) out.push_back(parse_profile(n[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

ComponentData parse_component(const YAML::Node& n, const std::string& where) {
  if (!n.IsSequence()) fail(where + ": expected a list of terms");
  ComponentData out;
  for (std::size_t i = 0; i < n.size(); ++i) {
    const std::string w = where + "[" + std::to_string(i) + "]";
    check_keys(n[i], w, {"k1", "k2", "sine", "profiles"});
    DataTerm t;
    get(n[i], w, "k1", t.k1);
    get(n[i], w, "k2", t.k2);
    get(n[i], w, "sine", t.sine);
    if (!n[i]["profiles"]) fail(w + ".profiles: missing");
    t.profile = parse_profiles(n[i]["profiles"], w + ".profiles");
    out.push_back(std::move(t));
  }
  return out;
}

std::map<int, LayerData> parse_layers(const YAML::Node& n, const std::string& where) {
  if (!n.IsMap()) fail(where + ": expected a mapping from order to layer");
  std::map<int, LayerData> out;
  for (const auto& kv : n) {
    int order = 0;
    try {
      order = kv.first.as<int>();
    } catch (const YAML::Exception&) {
      fail(where + ": layer keys must be integer orders");
    }
    const std::string w = where + "." + std::to_string(order);
    check_keys(kv.second, w, {"u1", "u2"});
    LayerData d;
    if (kv.second["u1"]) d[0] = parse_component(kv.second["u1"], w + ".u1");
    if (kv.second["u2"]) d[1] = parse_component(kv.second["u2"], w + ".u2");
    out[order] = std::move(d);
  }
  return out;
}

InitialData parse_data(const YAML::Node& n) {
  check_keys(n, "data", {"preset", "base_normal_zero", "shear", "euler", "prandtl"});
  std::string preset = "shear_default";
  get(n, "data", "preset", preset);
  InitialData d;
  if (preset == "shear_default")
    d = InitialData::shear_default();
  else if (preset == "pure_shear")
    d = InitialData::pure_shear();
  else if (preset != "none")
    fail("data.preset: expected shear_default, pure_shear or none");
  get(n, "data", "base_normal_zero", d.base_normal_zero);
  if (const YAML::Node s = n["shear"]) {
    check_keys(s, "data.shear", {"b1", "b2"});
    d.shear = {};
    if (s["b1"]) d.shear[0] = parse_profiles(s["b1"], "data.shear.b1");
    if (s["b2"]) d.shear[1] = parse_profiles(s["b2"], "data.shear.b2");
  }
  if (n["euler"]) d.euler = parse_layers(n["euler"], "data.euler");
  if (n["prandtl"]) d.prandtl = parse_layers(n["prandtl"], "data.prandtl");
  return d;
}

json profile_json(const Profile& p) {
  if (p.kind == Profile::Kind::Erfc) return {{"kind", "erfc"}, {"c", p.c}, {"width", p.width}};
  return {{"kind", "power_exp"}, {"c", p.c}, {"power", p.power}, {"lambda", p.lambda}, {"gamma", p.gamma}};
}

json component_json(const ComponentData& c) {
  json a = json::array();
  for (const auto& t : c) {
    json pr = json::array();
    for (const auto& p : t.profile) pr.push_back(profile_json(p));
    a.push_back({{"k1", t.k1}, {"k2", t.k2}, {"sine", t.sine}, {"profiles", pr}});
  }
  return a;
}

json layers_json(const std::map<int, LayerData>& m) {
  json o = json::object();
  for (const auto& [k, d] : m) o[std::to_string(k)] = {{"u1", component_json(d[0])}, {"u2", component_json(d[1])}};
  return o;
}

}  // namespace

void RunConfig::sync() {
  fluid.N = std::max(fluid.N, 0);
  transport.epsilon = epsilon;
  transport.kappa = kappa;
  transport.delta = delta;
  transport.TM = TM;
  collision.cache_dir = cache_dir;
}

void RunConfig::validate() const {
  if (!(epsilon > 0) || !(kappa > 0) || !(delta > 0)) fail("scales: epsilon, kappa and delta must be positive");
  if (epsilon >= 1 || kappa >= 1 || delta >= 1) fail("scales: epsilon, kappa and delta must lie below 1");
  if (kappas.size() < 3) fail("scales.kappas: need at least three values");
  for (double k : kappas)
    if (!(k > 0) || k >= 1) fail("scales.kappas: values must lie in (0, 1)");
  if (!(TM > 0)) throw Error(ErrorKind::BadTemperature, "physics.TM must be positive");
  if (!(rho >= 0)) fail("physics.rho must be non-negative");
  if (!(p0 > 0)) fail("physics.p0 must be positive");
  if (rho >= p0) fail("physics.rho must stay below physics.p0");
  if (!(ledger.tau0 > 0) || !(ledger.M0 >= 0)) fail("ledger: tau0 must be positive and M0 non-negative");
  if (ledger.max_order < 0 || ledger.max_order > 64) fail("ledger.max_order must lie in 0..64");
  if (norm_order < 0 || norm_order > ledger.max_order) fail("run.norm_order must lie in 0..ledger.max_order");
  if (collision.n_v < 2 || collision.n_v % 2 || collision.n_v > 16) fail("grids.velocity.n_v must be even in 2..16");
  if (collision.sphere_theta < 2 || collision.sphere_phi < 2 || collision.radial < 2 || collision.gamma_theta < 2 ||
      collision.gamma_phi < 2 || collision.gamma_radial < 2)
    fail("grids.velocity: quadrature orders must be at least 2");
  if (!(collision.radial_span > 0)) fail("grids.velocity.radial_span must be positive");
  if (!(collision.cg_tol > 0) || collision.cg_max_iter < 1) fail("grids.velocity: bad solver settings");
  fluid.validate();
  transport.validate();
  if (!(stack_time > 0)) fail("run.t_final must be positive");
  if (ledger.tau(stack_time) <= 0) fail("run.t_final lies beyond the analyticity window tau0 / M0");
  if (refinement_dts.size() < 3) fail("run.refinement_dts: need three step sizes");
  for (std::size_t i = 0; i < refinement_dts.size(); ++i) {
    if (!(refinement_dts[i] > 0)) fail("run.refinement_dts must be positive");
    if (i > 0 && !(refinement_dts[i] < refinement_dts[i - 1])) fail("run.refinement_dts must decrease");
  }
  if (residual_points < 1 || residual_points > 1000) fail("run.residual_points must lie in 1..1000");
  if (output_dir.empty()) fail("run.output_dir must not be empty");
}

RunConfig RunConfig::from_yaml_text(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    fail(std::string("config does not parse: ") + e.what());
  }
  RunConfig c;
  if (!root || root.IsNull()) {
    c.sync();
    c.validate();
    return c;
  }
  check_keys(root, "", {"scales", "grids", "ledger", "physics", "data", "run"});
  if (const YAML::Node s = root["scales"]) {
    check_keys(s, "scales", {"epsilon", "kappa", "kappas", "delta", "N"});
    get(s, "scales", "epsilon", c.epsilon);
    get(s, "scales", "kappa", c.kappa);
    get(s, "scales", "kappas", c.kappas);
    get(s, "scales", "delta", c.delta);
    get(s, "scales", "N", c.fluid.N);
  }
  if (const YAML::Node g = root["grids"]) {
    check_keys(g, "grids", {"fluid", "velocity", "transport"});
    if (const YAML::Node f = g["fluid"]) {
      check_keys(f, "grids.fluid", {"K_max", "n_x", "X_max", "n_z", "Z_max"});
      get(f, "grids.fluid", "K_max", c.fluid.grid.K_max);
      get(f, "grids.fluid", "n_x", c.fluid.grid.n_x);
      get(f, "grids.fluid", "X_max", c.fluid.grid.X_max);
      get(f, "grids.fluid", "n_z", c.fluid.grid.n_z);
      get(f, "grids.fluid", "Z_max", c.fluid.grid.Z_max);
    }
    if (const YAML::Node v = g["velocity"]) {
      const std::string w = "grids.velocity";
      check_keys(v, w, {"n_v", "sphere_theta", "sphere_phi", "radial", "radial_span", "gamma_theta", "gamma_phi",
                        "gamma_radial", "cg_tol", "cg_max_iter"});
      get(v, w, "n_v", c.collision.n_v);
      get(v, w, "sphere_theta", c.collision.sphere_theta);
      get(v, w, "sphere_phi", c.collision.sphere_phi);
      get(v, w, "radial", c.collision.radial);
      get(v, w, "radial_span", c.collision.radial_span);
      get(v, w, "gamma_theta", c.collision.gamma_theta);
      get(v, w, "gamma_phi", c.collision.gamma_phi);
      get(v, w, "gamma_radial", c.collision.gamma_radial);
      get(v, w, "cg_tol", c.collision.cg_tol);
      get(v, w, "cg_max_iter", c.collision.cg_max_iter);
    }
    if (const YAML::Node t = g["transport"]) {
      check_keys(t, "grids.transport", {"K_par", "n_normal", "x3_max", "stretch"});
      get(t, "grids.transport", "K_par", c.transport.K_par);
      get(t, "grids.transport", "n_normal", c.transport.n_normal);
      get(t, "grids.transport", "x3_max", c.transport.x3_max);
      get(t, "grids.transport", "stretch", c.transport.stretch);
    }
  }
  if (const YAML::Node l = root["ledger"]) {
    check_keys(l, "ledger", {"tau0", "M0", "max_order"});
    get(l, "ledger", "tau0", c.ledger.tau0);
    get(l, "ledger", "M0", c.ledger.M0);
    get(l, "ledger", "max_order", c.ledger.max_order);
  }
  if (const YAML::Node p = root["physics"]) {
    check_keys(p, "physics", {"TM", "rho", "p0", "pressure"});
    get(p, "physics", "TM", c.TM);
    get(p, "physics", "rho", c.rho);
    get(p, "physics", "p0", c.p0);
    if (p["pressure"]) {
      double v = 0;
      get(p, "physics", "pressure", v);
      c.pressure = v;
    }
  }
  if (const YAML::Node d = root["data"]) c.fluid.data = parse_data(d);
  if (const YAML::Node r = root["run"]) {
    check_keys(r, "run", {"dt", "t_final", "kinetic_dt", "kinetic_t_final", "refinement_dts", "blowup", "max_shift",
                          "norm_order", "residual_points", "cache_dir", "output_dir", "seed"});
    get(r, "run", "dt", c.fluid.dt);
    get(r, "run", "t_final", c.stack_time);
    get(r, "run", "kinetic_dt", c.transport.dt);
    get(r, "run", "kinetic_t_final", c.transport.t_final);
    get(r, "run", "refinement_dts", c.refinement_dts);
    get(r, "run", "blowup", c.transport.blowup);
    get(r, "run", "max_shift", c.transport.max_shift);
    get(r, "run", "norm_order", c.norm_order);
    get(r, "run", "residual_points", c.residual_points);
    get(r, "run", "cache_dir", c.cache_dir);
    get(r, "run", "output_dir", c.output_dir);
    get(r, "run", "seed", c.seed);
  }
  c.sync();
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail("cannot read config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_yaml_text(ss.str());
}

std::string RunConfig::canonical() const {
  json j;
  j["scales"] = {{"epsilon", epsilon}, {"kappa", kappa}, {"kappas", kappas}, {"delta", delta}, {"N", fluid.N}};
  const FluidGrid& fg = fluid.grid;
  const CollisionConfig& cc = collision;
  j["grids"] = {
      {"fluid", {{"K_max", fg.K_max}, {"n_x", fg.n_x}, {"X_max", fg.X_max}, {"n_z", fg.n_z}, {"Z_max", fg.Z_max}}},
      {"velocity",
       {{"n_v", cc.n_v}, {"sphere_theta", cc.sphere_theta}, {"sphere_phi", cc.sphere_phi}, {"radial", cc.radial},
        {"radial_span", cc.radial_span}, {"gamma_theta", cc.gamma_theta}, {"gamma_phi", cc.gamma_phi},
        {"gamma_radial", cc.gamma_radial}, {"cg_tol", cc.cg_tol}, {"cg_max_iter", cc.cg_max_iter}}},
      {"transport",
       {{"K_par", transport.K_par}, {"n_normal", transport.n_normal}, {"x3_max", transport.x3_max},
        {"stretch", transport.stretch}}}};
  j["ledger"] = {{"tau0", ledger.tau0}, {"M0", ledger.M0}, {"max_order", ledger.max_order}};
  j["physics"] = {{"TM", TM}, {"rho", rho}, {"p0", p0}};
  if (pressure) j["physics"]["pressure"] = *pressure;
  const InitialData& d = fluid.data;
  json shear = {{"b1", json::array()}, {"b2", json::array()}};
  for (const auto& p : d.shear[0]) shear["b1"].push_back(profile_json(p));
  for (const auto& p : d.shear[1]) shear["b2"].push_back(profile_json(p));
  j["data"] = {{"base_normal_zero", d.base_normal_zero},
               {"shear", shear},
               {"euler", layers_json(d.euler)},
               {"prandtl", layers_json(d.prandtl)}};
  // output_dir and cache_dir do not change results, so they stay out of the hash
  j["run"] = {{"dt", fluid.dt},
              {"t_final", stack_time},
              {"kinetic_dt", transport.dt},
              {"kinetic_t_final", transport.t_final},
              {"refinement_dts", refinement_dts},
              {"blowup", transport.blowup},
              {"max_shift", transport.max_shift},
              {"norm_order", norm_order},
              {"residual_points", residual_points},
              {"seed", seed}};
  return j.dump();
}

std::string RunConfig::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : canonical()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

}  // namespace ep
