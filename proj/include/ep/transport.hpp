#pragma once

#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ep/collision.hpp"
#include "ep/hilbert.hpp"
#include "ep/multiindex.hpp"
#include "ep/spectral.hpp"

namespace ep {

// Backward exit from the half space x3 > 0 along x - s xi / eps.
struct Characteristic {
  bool exits = false;  // false: the backward trajectory never meets the wall
  double tb = std::numeric_limits<double>::infinity();
  Eigen::Vector3d xb = Eigen::Vector3d::Zero();
};
Characteristic backward_exit(const Eigen::Vector3d& x, const Eigen::Vector3d& xi, double eps);

// Wall weights of the h-frame diffuse condition, from the Gaussian densities:
// w1 = mu0 / sqrt(muM), w2 = 1{xi3 < 0} sqrt(muM) |xi3|, w3inv = sqrt(mu0) / sqrt(muM).
struct WallWeights {
  double w1, w2, w3inv;
};
WallWeights wall_weights(double TM, const Eigen::Vector3d& xi);

struct TransportConfig {
  double epsilon = 0.05, kappa = 0.1, delta = 0.3, TM = 0.9;
  int K_par = 4;          // tangential modes |k| <= K_par, (2 K_par + 1)^2 nodes
  int n_normal = 63;      // Chebyshev degree in x3
  double x3_max = 4.0;
  double stretch = 5.0;   // wall clustering of the normal nodes, 0 for plain Chebyshev
  double dt = 2e-4;
  double t_final = 2e-3;
  double blowup = 1e8;      // sup |h| ceiling
  double max_shift = 0.25;  // largest normal displacement per step, as a fraction of x3_max
  void validate() const;
};

// Chebyshev nodes in y on [0, 1] mapped by x3 = L sinh(beta y) / sinh(beta).
class StretchedNormal {
 public:
  StretchedNormal(int n, double L, double beta);
  int size() const { return static_cast<int>(x_.size()); }
  double length() const { return L_; }
  const Vec& x() const { return x_; }
  const Vec& w() const { return w_; }  // quadrature weights in x3
  const Mat& D() const { return D_; }  // d/dx3
  Eigen::RowVectorXd eval_row(double x3) const;

 private:
  double to_y(double x3) const;
  Chebyshev y_;
  double L_, beta_;
  Vec x_, w_;
  Mat D_;
};

enum class Frame { F, H };

// Kinetic values, one column per velocity node, one row per space node
// (space index = tangential row + rows * normal node).
struct KineticField {
  Frame frame = Frame::H;
  double t = 0;
  Mat data;
};

// Flow quantities on the transport space grid, frozen for the run.
struct FlowOnGrid {
  Mat U;                      // n_space x 3
  Vec divU, P, dtP, divUP;    // div(U P) from the jets
  Vec UgradU;                 // sum_i U_i d_i U_i, only for the displayed law
  Vec cij_term;               // sum c_ij d_i U_j div U, only for the displayed law
  static FlowOnGrid zero(int n_space);
};

class LinearTransport {
 public:
  LinearTransport(std::shared_ptr<const Collision> col, TransportConfig cfg);

  const TransportConfig& config() const { return cfg_; }
  const Collision& collision() const { return *col_; }
  const VelocityGrid& velocity() const { return col_->grid(); }
  const Tangential& tangential() const { return tan_; }
  const StretchedNormal& normal() const { return cheb_; }
  int rows() const { return tan_.rows(); }
  int n_space() const { return tan_.rows() * cheb_.size(); }
  int n_vel() const { return col_->size(); }
  Eigen::Vector3d position(int s) const;
  // Quadrature weight of each space node for the integral over T^2 x [0, x3_max].
  const Vec& space_weight() const { return wx_; }

  const Vec& nu() const { return col_->nu(); }
  const Vec& sqrt_muM() const { return sqmuM_; }
  const Vec& w1() const { return w1_; }
  const Vec& w2() const { return w2_; }
  const Vec& w3inv() const { return w3inv_; }
  // Discrete c_mu: makes the grid wall flux of the diffuse part vanish exactly.
  double c_mu() const { return cmu_; }

  // K_M h and L_M h for every space row of an h-frame block.
  Mat apply_K(const Mat& h) const;
  Mat apply_L(const Mat& h) const;

  // Phi(dt) applied to a frozen source: the source part of one step.
  Mat source_increment(const Mat& source, double dt) const;
  // One exponential-Euler step: exact exponential of the collision operator, the
  // transport term taken as the semi-Lagrangian difference quotient (h - S h) / dt,
  // where S follows characteristics back one step and reads the wall condition.
  void step(KineticField& h, const Mat& increment, const Mat& wall_r, double dt) const;
  // Sets the incoming wall nodes from the outgoing trace.
  void impose_wall(Mat& h, const Mat& wall_r) const;

  // Wall quantities of an h-frame block.
  Vec wall_mass_flux(const Mat& h) const;  // per tangential row, int h sqrt(muM) xi3
  double mass(const Mat& h) const;         // int int h sqrt(muM)

  // Interpolation at an arbitrary point of one velocity column.
  double interpolate(const Mat& h, int q, const Eigen::Vector3d& x) const;
  Eigen::RowVectorXd space_row(const Eigen::Vector3d& x) const;

  // f = sqrt(muM) h / sqrt(mu) with the local flow; involutive pair.
  KineticField to_f(const KineticField& h, const FlowOnGrid& flow) const;
  KineticField to_h(const KineticField& f, const FlowOnGrid& flow) const;

 private:
  struct Exponential {
    double dt = 0;
    Mat A, B, Phi;  // transposed: E - Phi / dt, Phi / dt, Phi
  };
  const Exponential& exponential(double dt) const;
  void advect(const Mat& in, Mat& out, double dt) const;

  std::shared_ptr<const Collision> col_;
  TransportConfig cfg_;
  Tangential tan_;
  StretchedNormal cheb_;
  Vec wx_, sqmuM_, w1_, w2_, w3inv_, R_;
  double cmu_ = 0;
  Mat Kt_, Lt_;                       // transposed h-frame operators
  Eigen::VectorXd lambda_;            // spectrum of the symmetrised L
  Mat V_;                             // its eigenvectors
  mutable std::vector<Exponential> exp_cache_;
};

// ---- Duhamel representation ----

// Point sources for the mild-solution operators, all in the h frame.
struct DuhamelSources {
  std::function<double(int q, double s, const Eigen::Vector3d& x)> nu;  // nu_M along paths
  std::function<double(int q, double s, const Eigen::Vector3d& x)> Kh;  // K_M h
  std::function<double(int q, double s, const Eigen::Vector3d& x)> g;   // source g~
  std::function<double(int q, const Eigen::Vector3d& x)> h0;            // initial data
  std::function<double(int q, double s, const Eigen::Vector3d& xw)> r;  // wall datum r
  std::vector<double> knots;  // time partition for the s-quadrature (e.g. snapshot times)
  double cutoff = 36;         // paths stop once the attenuation exponent exceeds this
};

enum class DuhamelKind { I, M, F, B };

struct DuhamelTerms {
  double I = 0, M = 0, F = 0, B = 0;
  // I + M + F - (eps / delta) B
  double total(double eps, double delta) const { return I + M + F - eps / delta * B; }
};

// The four operators at (t, x, xi_q). The wall-mediated parts use the velocity
// grid of `lt` for the xi_star integral.
DuhamelTerms duhamel_terms(const LinearTransport& lt, const DuhamelSources& src, double t,
                           const Eigen::Vector3d& x, int q);
double duhamel_apply(DuhamelKind kind, const LinearTransport& lt, const DuhamelSources& src, double t,
                     const Eigen::Vector3d& x, int q);

// Integral of nu along the backward path from (t, x) to time s, 8-point Gauss.
double nu_line_integral(const DuhamelSources& src, int q, double t, const Eigen::Vector3d& x,
                        const Eigen::Vector3d& xi, double s, double eps);

struct DuhamelSample {
  Eigen::Vector3d x;
  int q = 0;
};
// Interior samples plus samples whose backward path meets the wall within the
// attenuation window; tb_min keeps the wall hit outside the first step.
std::vector<DuhamelSample> default_duhamel_samples(const LinearTransport& lt, double tb_min, unsigned seed);

// ---- diagnostics ----

struct NormDiagnostics {
  double E = 0, D = 0, H = 0, Y = 0, rho = 0;
};
// Norms of f with tangential derivatives exact per mode and eps d_t from `rate`
// (may be empty). H is the supremum at this time only; callers keep the running max.
NormDiagnostics kinetic_norms(const LinearTransport& lt, const KineticField& f, const KineticField* rate,
                              const FlowOnGrid& flow, const AnalyticLedger& ledger, double rho, int max_order);

struct ConservationReport {
  double defect = 0;            // |lhs - rhs| with the law derived from the moments
  double defect_full = 0;       // the same over every x3 <= x3_hi, wall included
  double defect_displayed = 0;  // same, with the right side as printed in the source
  double lhs = 0, scale = 0;    // norms of the left side and of the largest right-side term
};
// eps d_t a + div b against the right side, L2 in space over x3_lo <= x3 <= x3_hi.
// h_prev, h_next are h-frame fields one step apart; the check is centred between them.
ConservationReport conservation_check(const LinearTransport& lt, const KineticField& h_prev,
                                      const KineticField& h_next, const FlowOnGrid& flow, double x3_lo,
                                      double x3_hi);

// Quadrature form of the two moment identities behind the law at a static flow:
// int (eps d_t + xi.grad) mu and int (eps d_t + xi.grad)(P mu) against closed forms.
struct StaticConservation {
  double mu_defect = 0, pressure_defect = 0;  // against the derived closed forms
  double mu_displayed = 0;                    // against the printed closed form
  double law_displayed = 0;  // printed right side for F = mu, div U = 0, where the law gives 0
};
StaticConservation conservation_static(const VelocityGrid& g, double eps, double delta, unsigned seed);

struct TraceReport {
  double flux = 0;      // |int F xi3| at the wall node
  double outgoing = 0;  // int_{xi3<0} F |xi3|
};
// F values on a (split) grid at one wall point.
TraceReport boundary_trace_check(const VelocityGrid& g, const Eigen::VectorXd& F);
// Diffusely reflecting F: outgoing half as given, incoming half c_mu mu0 * outgoing flux.
Eigen::VectorXd diffuse_fill(const VelocityGrid& g, const Eigen::VectorXd& F, double incoming_scale = 1.0);

// ---- driver ----

struct TransportProblem {
  KineticField h0;
  Mat source;  // g~ on the grid, frozen
  Mat wall_r;  // r on the wall nodes (rows x n_vel)
  FlowOnGrid flow;
};

// Source -R_a / (eps delta sqrt(muM)) and wall datum from the Hilbert evaluator.
TransportProblem hilbert_problem(const LinearTransport& lt, const HilbertEvaluator& H, const HilbertKernel& K,
                                 const GammaTable& gamma);
// r = (1 - P_gamma+) f2 at the wall on the transport velocity grid, discrete projection.
Eigen::VectorXd wall_datum(const LinearTransport& lt, const HilbertKernel& K, const HilbertContext& ctx,
                           const FlowPoint& wall_flow);

struct StepRow {
  int step = 0;
  double t = 0, mass = 0, wall_flux = 0;
  NormDiagnostics norms;
  std::optional<double> duhamel;
};

struct IntegrateOptions {
  bool norms = true;
  AnalyticLedger ledger;
  double rho = 0.0;
  int max_order = 4;
  std::vector<DuhamelSample> samples;  // Duhamel residual at the final step
  double conservation_lo = 0.05;  // keeps the check outside the near-wall splitting zone
  double conservation_hi = 2.0;
  std::function<void(const KineticField&, int step)> on_step;  // e.g. snapshots
};

struct TrajectoryResult {
  std::vector<StepRow> rows;
  KineticField final;
  ConservationReport conservation;  // over the last step
  double duhamel_residual = 0;      // max |h - mild form| / max |h| over the samples
  double max_wall_flux = 0;
  std::string csv() const;  // step,t,mass,wall_flux,E,D,H,Y,duhamel_residual
};

TrajectoryResult integrate_linear(const LinearTransport& lt, const TransportProblem& prob, double t_final,
                                  double dt, const IntegrateOptions& opt);

struct RefinementStudy {
  std::vector<double> dt, conservation, duhamel;
  std::vector<double> conservation_ratio, duhamel_order;  // consecutive
};
RefinementStudy refinement_study(const LinearTransport& lt, const TransportProblem& prob, double t_final,
                                 const std::vector<double>& dts, const IntegrateOptions& opt);

void save_snapshot(const KineticField& h, const std::string& path);
KineticField load_snapshot(const std::string& path);

}  // namespace ep
