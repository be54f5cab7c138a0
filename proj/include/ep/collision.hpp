#pragma once

#include <array>
#include <functional>
#include <memory>
#include <string>

#include <Eigen/Dense>

#include "ep/maxwellian.hpp"
#include "ep/velocity_grid.hpp"

namespace ep {

// Discretisation knobs for the hard-sphere operators.
struct CollisionConfig {
  int n_v = 8;             // Hermite nodes per velocity axis
  int sphere_theta = 16;   // directions for operator rows
  int sphere_phi = 32;
  int radial = 36;
  double radial_span = 9.0;
  int gamma_theta = 12;    // lighter rule for the bilinear term
  int gamma_phi = 24;
  int gamma_radial = 28;
  double cg_tol = 1e-8;
  int cg_max_iter = 5000;
  std::string cache_dir;   // empty: no caching
  std::string key() const;
};

// Hydrodynamic moments a, b, c of f = sqrt(mu0) p.
struct MomentTriple {
  double a = 0;
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  double c = 0;
};

double nu_hard_sphere(double speed);

// Diffuse-reflection projection of f = sqrt(mu0) p at the wall, using only the
// outgoing half (xi3 < 0). The reduced result is constant. Needs a split grid.
Eigen::VectorXd boundary_project(const VelocityGrid& g, const Eigen::VectorXd& p);

struct AijResult {
  std::array<std::array<Eigen::VectorXd, 3>, 3> A;     // reduced values A_ij / sqrt(mu0)
  std::array<std::array<Eigen::VectorXd, 3>, 3> Ahat;  // reduced sources
  double eta0 = 0;
  double gram_fit_residual = 0;  // max |G - eta0 T| / eta0
  double isotropy_spread = 0;    // relative spread of <Ahat_ij, A_ij>, i != j
  double null_component = 0;     // largest |P Ahat| relative to |Ahat|
  Eigen::Matrix3d c;             // integral of A_ij over velocity
  Eigen::Matrix<double, 9, 9> gram;
  int iterations = 0;
  double final_residual = 0;
};

// All operators act on reduced values p = f / sqrt(mu0) on a Hermite grid,
// in the frame moving with the flow (phi = xi - eps U).
class Collision {
 public:
  explicit Collision(const CollisionConfig& cfg);
  static std::shared_ptr<const Collision> build_or_load(const CollisionConfig& cfg);

  const CollisionConfig& config() const { return cfg_; }
  const VelocityGrid& grid() const { return grid_; }
  int size() const { return grid_.size(); }

  const Eigen::VectorXd& nu() const { return nu_; }
  const Eigen::MatrixXd& L() const { return L_; }
  const Eigen::MatrixXd& K1() const { return K1_; }
  const Eigen::MatrixXd& L_nystrom() const { return Lraw_; }
  double raw_asymmetry() const { return raw_asym_; }
  // Relative Frobenius size of (symmetric operator - Nystrom operator) in the weighted metric.
  double symmetrization_shift() const { return sym_shift_; }

  Eigen::VectorXd apply_L(const Eigen::VectorXd& p) const { return L_ * p; }
  // refine multiplies every order of the angular and radial rules.
  Eigen::VectorXd gamma(const Eigen::VectorXd& p, const Eigen::VectorXd& q, int refine = 1) const;
  // Matrix of q -> Gamma(p, q) for fixed p.
  Eigen::MatrixXd gamma_matrix(const Eigen::VectorXd& p) const;
  long gamma_out_of_range() const { return gamma_oor_; }

  double inner(const Eigen::VectorXd& p, const Eigen::VectorXd& q) const;
  double norm(const Eigen::VectorXd& p) const { return std::sqrt(inner(p, p)); }

  // collision invariants 1, phi_1, phi_2, phi_3, |phi|^2 (reduced)
  std::array<Eigen::VectorXd, 5> invariants() const;

  MomentTriple moments(const Eigen::VectorXd& p) const;
  Eigen::VectorXd hydro(const MomentTriple& m) const;
  Eigen::VectorXd project(const Eigen::VectorXd& p) const { return hydro(moments(p)); }


  AijResult solve_Aij() const;

  void save(const std::string& path) const;
  static std::shared_ptr<Collision> load(const std::string& path, const CollisionConfig& cfg);

 private:
  Collision(const CollisionConfig& cfg, bool build);
  void build_tables();
  void build_modal();
  void plane_basis(double a, const Eigen::Vector3d& e, double* out) const;
  CollisionConfig cfg_;
  VelocityGrid grid_;
  Eigen::VectorXd nu_;
  Eigen::MatrixXd L_, K1_, Lraw_, modal_;
  double raw_asym_ = 0, sym_shift_ = 0;
  mutable long gamma_oor_ = 0;
};

// Spectral-gap surrogate: min over draws of <Lf,f> / |sqrt(nu)(I-P)f|^2.
struct GapReport {
  double min_form = 0;     // smallest <Lf, f> / |f|^2
  double gap_constant = 0;
  int draws = 0;
};
GapReport spectral_gap(const Collision& c, int draws, unsigned seed);

// Random smooth reduced function: Hermite combination of total degree <= 4.
Eigen::VectorXd random_reduced(const VelocityGrid& g, unsigned seed);

// Gain part of the linear operator applied to an analytic f (full velocity frame, U = 0).
using KineticFn = std::function<double(const Eigen::Vector3d&)>;
struct GainQuadrature {
  int radial = 40, sphere_theta = 16, sphere_phi = 32, omega_theta = 12, omega_phi = 24;
};
// Direct five-dimensional quadrature over (omega, xi_star), both gain branches.
struct GainSplit {
  double total, branch_post, branch_star;
};
GainSplit k2_direct(const Eigen::Vector3d& xi, const KineticFn& f, const GainQuadrature& q);
// Parallel/perpendicular decomposition with the transverse plane integral done numerically.
double k2_kernel_route(const Eigen::Vector3d& xi, const KineticFn& f, const GainQuadrature& q);
// Constant in front of the decomposed kernel.
double k2_kernel_constant();

// Pointwise kernels of K = K2 - K1 in the moving frame (U = 0).
double kernel_k1(const Eigen::Vector3d& xi, const Eigen::Vector3d& eta);
double kernel_k2(const Eigen::Vector3d& xi, const Eigen::Vector3d& eta);

// Bound check for the kernel relative to the reference Maxwellian.
struct KernelBoundReport {
  double rho0 = 0;        // largest feasible Gaussian exponent under the constant cap
  double C = 0;           // constant at that exponent
  double nu_ratio_min = 0, nu_ratio_max = 0;
  double nuM_min = 0;
  int samples = 0;
};
KernelBoundReport lm_kernel_check(double eps, double TM, const Eigen::Vector3d& U, double C_cap,
                                  int samples, unsigned seed);

struct OrthogonalityReport {
  double a10_full, a5_full;        // <|phi|^2(|phi|^2-3)(|phi|^2-beta), mu0>
  double b10_short, b5_short;      // <|phi|^2(|phi|^2-beta), mu0>
};
OrthogonalityReport moment_orthogonality_check(const VelocityGrid& g);

}  // namespace ep
