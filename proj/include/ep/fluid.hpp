#pragma once

#include <array>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ep/spectral.hpp"

namespace ep {

// c x^p exp(-lambda x - gamma x^2), or c erfc(x / width).
struct Profile {
  enum class Kind { PowerExp, Erfc };
  Kind kind = Kind::PowerExp;
  double c = 0, power = 0, lambda = 0, gamma = 0, width = 1;
  double operator()(double x) const;

  static Profile constant(double c) { return {Kind::PowerExp, c, 0, 0, 0, 1}; }
  static Profile erfc(double c, double width) { return {Kind::Erfc, c, 0, 0, 0, width}; }
  static Profile power_exp(double c, double p, double lambda, double gamma) {
    return {Kind::PowerExp, c, p, lambda, gamma, 1};
  }
};

// (sum of profiles)(normal coordinate) * cos or sin(k1 x1 + k2 x2)
struct DataTerm {
  int k1 = 0, k2 = 0;
  bool sine = false;
  std::vector<Profile> profile;
};
using ComponentData = std::vector<DataTerm>;
using LayerData = std::array<ComponentData, 2>;

double evaluate(const ComponentData& d, double x1, double x2, double normal);

// Initial layers. The order-zero Euler flow is a shear (b1, b2)(x3) with zero
// normal velocity; higher Euler layers and all Prandtl layers are finite Fourier
// sums of profiles. Normal velocities are never given: they follow from the
// divergence constraint and the wall matching.
struct InitialData {
  std::array<std::vector<Profile>, 2> shear;
  bool base_normal_zero = true;
  std::map<int, LayerData> euler;    // orders 1..N
  std::map<int, LayerData> prandtl;  // orders 0..N

  void validate(int N, int K_max) const;
  // b1 = 1 + x3 e^{-x3^2}/2 with the matching erfc layer; nothing else.
  static InitialData pure_shear();
  // pure_shear plus a tangentially divergence-free order-one layer.
  static InitialData shear_default();
};

struct FluidGrid {
  int K_max = 8;
  int n_x = 48;
  double X_max = 10;
  int n_z = 64;
  double Z_max = 30;
};

struct FluidConfig {
  int N = 2;
  double eta0 = 0.0895633;  // overwritten from the collision tables when available
  double dt = 1e-3;
  FluidGrid grid;
  InitialData data = InitialData::shear_default();
  void validate() const;
};

// The evolved unknowns, one entry per order 0..N. Fields are stored as
// (tangential nodes) x (normal nodes).
struct LayerState {
  std::vector<std::array<Mat, 2>> ue, up;

  LayerState axpy(double a, const LayerState& other) const;  // this + a * other
};

// Everything derived from a state: normal velocities, pressures and the
// time derivatives dictated by the layer equations.
struct LayerFields {
  int N = 0;
  LayerState s;
  std::vector<Mat> ve, pe, dve;            // Euler grid, orders 0..N
  std::vector<Mat> vp, dvp;                // Prandtl grid, orders 0..N+1 (order 0 is zero)
  std::vector<Mat> pp;                     // Prandtl grid, orders 0..N
  std::vector<std::array<Mat, 2>> due, dup;
  LayerState rate() const;                 // (due, dup)
};

// ---- term bookkeeping shared by the layer solver and the residual ----

// First and second derivatives of one field at a set of normal points.
// dn is the derivative in the field's own normal coordinate (x3 or z).
struct Jet {
  Mat v, d1, d2, dn, dnn, lap;
};

struct EulerAt {
  std::array<Jet, 2> u;
  Jet v;
  Mat p1, p2, pn;
};
struct PrandtlAt {
  std::array<Jet, 2> u;
  Jet v;
  Mat p1, p2, pn;
};

// Wall Taylor coefficients of the Euler layers: [order][k] -> d_3^k f at x3 = 0.
struct WallJets {
  std::vector<std::vector<std::array<Vec, 2>>> u, u1, u2;
  std::vector<std::vector<Vec>> v, v1, v2;
};

struct Sample {
  int N = 0;
  double s = 0;             // sqrt(eta0 kappa)
  Vec x3, z;                // per column
  bool euler = false, prandtl = false, remainders = false;
  std::vector<EulerAt> E;   // 0..N
  std::vector<PrandtlAt> P; // 0..N+1
  std::vector<Mat> dvp;     // d_t v_p, 0..N+1
  WallJets W;
};

enum class TermClass { Euler, Prandtl };
enum class TermKind { Advection, Viscous, Pressure };

// Term groups, named by the pair of factors involved.
enum class TermGroup {
  EulerEuler,           // u_e . grad Y_e, v_e d3 Y_e
  PrandtlTimesEuler,    // u_p . grad Y_e(x3), Taylor in x3
  EulerTimesPrandtl,    // u_e(x3) . grad Y_p, Taylor in x3
  PrandtlPrandtl,       // u_p . grad Y_p
  NormalPrandtlEuler,   // v_p d3 Y_e(x3), Taylor in x3
  NormalEulerPrandtl,   // v_e(x3) dz Y_p, Taylor in x3
  NormalPrandtlPrandtl, // v_p dz Y_p
  ViscousEuler,
  ViscousPrandtl,
  PressureEuler,
  PressurePrandtl,
  TimeDerivative,
  ClosureDefect,
  Count
};
const char* group_name(TermGroup g);

struct TermTag {
  TermClass cls;
  TermKind kind;
  TermGroup group;
  int order;     // order of the layer equation this term belongs to; N+1 marks a Taylor remainder
  int power;     // contribution to the residual is s^power * value
  bool tail;     // involves the top normal Prandtl velocity, never absorbed
  bool remainder;
};

enum class Equation { Tangential1, Tangential2, Normal };
using TermSink = std::function<void(const TermTag&, const Mat&)>;

// Visits every product in the expansion of the Navier-Stokes operator applied to the
// layered ansatz, except the time derivatives. order_filter < 0 visits all orders.
void enumerate_terms(const Sample& S, Equation eq, int order_filter, const TermSink& sink);

// Whether a term is cancelled by the layer equations.
bool absorbed(const TermTag& t, Equation eq, int N);

// ---- the stack ----

struct DecayFit {
  double sigma = 0;
  double rel_residual = 0;
  bool zero = false;
};

struct MatchingReport {
  double slip = 0;          // max |u_p^m(0) + u_e^m(0)|
  double wall_normal = 0;   // max |v_e^m(0) + v_p^m(0)|
  double far_field = 0;     // max |u_p^m(Z_max)|
  double euler_div = 0;     // max |div u_e^m + d3 v_e^m|
  double prandtl_div = 0;   // max |div u_p^m + dz v_p^{m+1}|
  double mean_drift = 0;    // max |tangential mean of u_e^1|
};

class ExpansionStack {
 public:
  explicit ExpansionStack(FluidConfig cfg);

  const FluidConfig& config() const { return cfg_; }
  int N() const { return cfg_.N; }
  double time() const { return t_; }
  const Chebyshev& euler_grid() const { return ex_; }
  const Chebyshev& prandtl_grid() const { return pz_; }
  const Tangential& tangential() const { return tan_; }
  const LayerState& state() const { return state_; }

  LayerFields derive(const LayerState& s) const;
  LayerFields fields() const { return derive(state_); }

  void step();
  void advance_to(double t);

  // Sample for the stepping grids.
  Sample euler_sample(const LayerFields& F) const;
  Sample prandtl_sample(const LayerFields& F) const;
  // Sample at arbitrary normal points: x3 values; Prandtl fields are read at
  // z = x3/s and vanish beyond Z_max.
  Sample point_sample(const LayerFields& F, const std::vector<double>& x3, double s) const;
  // Local (PDE) time derivatives at the sample points.
  struct LocalRates {
    std::vector<std::array<Mat, 2>> due, dup;
    std::vector<Mat> dve;
  };
  LocalRates local_rates(const Sample& S) const;

  DecayFit decay(const Mat& prandtl_field) const;
  MatchingReport matching(const LayerFields& F) const;
  // sup_z |mean u_p^0 + b1(0) erfc(z / (2 sqrt(1+t)))| for component 1.
  double heat_kernel_error() const;

  void save(const std::string& path) const;
  void load(const std::string& path);
  // "x1,x2,normal,value" rows for one stored field, e.g. ("up", 1, 0).
  std::string csv(const std::string& field, int order, int component, const std::vector<double>& x1,
                  const std::vector<double>& x2, const std::vector<double>& normal) const;

 private:
  void init_state();
  void step_with(double dt);
  Mat pressure_solve(const Mat& rhs, const Vec& wall_flux) const;
  Jet euler_jet(const Mat& f) const;
  Jet prandtl_jet(const Mat& f) const;
  WallJets wall_jets(const LayerFields& F) const;
  Mat div_tan(const Mat& a, const Mat& b) const { return tan_.d1(a) + tan_.d2(b); }

  FluidConfig cfg_;
  Tangential tan_;
  Chebyshev ex_, pz_;
  LayerState state_;
  double t_ = 0;
  std::vector<Eigen::PartialPivLU<Mat>> poisson_lu_;
  std::vector<int> poisson_index_;  // mode -> factor
  std::array<Eigen::PartialPivLU<Mat>, 3> diffusion_lu_;
  double lu_dt_ = 0;
};

}  // namespace ep
