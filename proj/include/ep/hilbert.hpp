#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ep/collision.hpp"
#include "ep/fluid.hpp"
#include "ep/maxwellian.hpp"

namespace ep {

// The assembled flow (u_a, v_a) and pressure p_a at one point, with spatial
// derivatives up to second order. grad(i, j) = d_i U_j, hess[k](i, j) = d_k d_i U_j.
struct FlowPoint {
  Eigen::Vector3d U = Eigen::Vector3d::Zero();
  Eigen::Matrix3d grad = Eigen::Matrix3d::Zero();
  std::array<Eigen::Matrix3d, 3> hess{Eigen::Matrix3d::Zero(), Eigen::Matrix3d::Zero(), Eigen::Matrix3d::Zero()};
  double P = 0;
  Eigen::Vector3d gradP = Eigen::Vector3d::Zero();
};

// FlowPoint plus time derivatives along the layer equations.
struct FlowRates {
  FlowPoint at;
  Eigen::Vector3d dtU = Eigen::Vector3d::Zero();
  Eigen::Matrix3d dtgrad = Eigen::Matrix3d::Zero();
  double dtP = 0;
};

// Point evaluation of an expansion stack at its current time for one kappa.
class FlowEvaluator {
 public:
  // time_offsets: extra states S + h * dS/dt to prepare for at_offset().
  FlowEvaluator(const ExpansionStack& stack, double kappa, std::vector<double> time_offsets = {});

  double kappa() const { return kappa_; }
  double scale() const { return s_; }  // sqrt(eta0 kappa)
  double time() const { return t_; }

  FlowPoint at(const Eigen::Vector3d& x) const { return eval(F_, x); }
  // Exact time derivatives: U and its gradient are linear in the state, p_a quadratic.
  FlowRates with_rates(const Eigen::Vector3d& x) const;
  // Flow at time t + h to first order along the state's rate (exact in h for U).
  FlowPoint at_offset(double h, const Eigen::Vector3d& x) const;
  FlowProvider provider() const;

 private:
  FlowPoint eval(const LayerFields& F, const Eigen::Vector3d& x) const;
  const ExpansionStack& stack_;
  double kappa_, s_, t_;
  LayerFields F_, Fplus_, Fminus_;
  std::map<double, LayerFields> offsets_;
};

struct HilbertContext {
  double epsilon = 0.05, kappa = 0.1, delta = 0.3;
  std::optional<double> pressure;  // replaces p_a by a constant when set
  void validate() const;
  // exponents M with eps = kappa^{2M} and delta = kappa^M
  double regime_eps() const;
  double regime_delta() const;
};

// Velocity-side data shared by every point: reduced A_ij, its velocity gradient,
// the hydrodynamic projections of phi_k A_ij.
class HilbertKernel {
 public:
  HilbertKernel(std::shared_ptr<const Collision> col, const AijResult& aij);

  const Collision& collision() const { return *col_; }
  const VelocityGrid& grid() const { return col_->grid(); }
  double eta0() const { return eta0_; }
  const Eigen::VectorXd& A(int i, int j) const { return A_[i][j]; }
  const Eigen::VectorXd& dA(int i, int j, int m) const { return dA_[i][j][m]; }
  const Eigen::VectorXd& proj_phiA(int k, int i, int j) const { return PphiA_[k][i][j]; }
  double A_at(int i, int j, const Eigen::Vector3d& phi) const { return grid().interpolate(A_[i][j], phi); }

 private:
  std::shared_ptr<const Collision> col_;
  double eta0_ = 0;
  std::array<std::array<Eigen::VectorXd, 3>, 3> A_;
  std::array<std::array<std::array<Eigen::VectorXd, 3>, 3>, 3> dA_, PphiA_;
};

// f_2 / sqrt(mu0(phi)) at the grid nodes phi: P - kappa d_i U_j A_ij(phi).
Eigen::VectorXd build_f2(const HilbertKernel& K, const HilbertContext& ctx, const FlowPoint& flow);

// Gamma(f_2, f_2) from the symmetric bilinear table over the basis {1, A_ij (i <= j)},
// so that many space points cost one table build.
class GammaTable {
 public:
  static constexpr int kBasis = 7;
  explicit GammaTable(const HilbertKernel& K);
  // Reuses <cache_dir>/gamma_table_<hash>.bin when it matches the collision tables.
  static GammaTable build_or_load(const HilbertKernel& K, const std::string& cache_dir);

  // Coefficients of f_2 in the basis.
  static Eigen::Matrix<double, kBasis, 1> coefficients(const HilbertContext& ctx, const FlowPoint& flow);
  Eigen::VectorXd apply(const Eigen::Matrix<double, kBasis, 1>& c) const;
  Eigen::VectorXd apply(const HilbertContext& ctx, const FlowPoint& flow) const {
    return apply(coefficients(ctx, flow));
  }
  const Eigen::VectorXd& entry(int a, int b) const { return table_[pair(a, b)]; }

 private:
  GammaTable() = default;
  static int pair(int a, int b);
  std::vector<Eigen::VectorXd> table_;  // a <= b, packed
};

// R_a / mu0(phi) at the grid nodes, term by term.
struct RaTerms {
  Eigen::VectorXd ns, gamma, divergence, micro_transport, pressure, strain, a_transport, gram_defect;
  Eigen::VectorXd sum() const;
};

struct RaComparison {
  Eigen::VectorXd direct, expanded;
  RaTerms terms;
  double rel_diff = 0;  // weighted L2 over velocity, relative to the expanded route
  double scale = 0;     // weighted L2 of the expanded route
};

class HilbertEvaluator {
 public:
  HilbertEvaluator(const HilbertKernel& K, const ExpansionStack& stack, HilbertContext ctx);

  const HilbertContext& context() const { return ctx_; }
  const FlowEvaluator& flow() const { return flow_; }

  Eigen::VectorXd f2(const Eigen::Vector3d& x) const;
  // Definition route: finite differences of mu + eps^2 sqrt(mu) f_2 at fixed xi,
  // collision operators applied on the grid.
  Eigen::VectorXd Ra_direct(const Eigen::Vector3d& x, const Eigen::VectorXd* gamma_f2 = nullptr) const;
  // Expanded route with the fluid operator pulled out.
  RaTerms Ra_expanded(const Eigen::Vector3d& x, const Eigen::VectorXd* gamma_f2 = nullptr) const;
  RaComparison compare(const Eigen::Vector3d& x) const;

  // (d_t + xi.grad / eps) sqrt(mu) / sqrt(mu) at the grid nodes.
  Eigen::VectorXd stretching(const Eigen::Vector3d& x) const;
  // Right side of the remainder equation for a reduced sample f.
  Eigen::VectorXd remainder_rhs(const Eigen::VectorXd& f, const Eigen::Vector3d& x) const;

 private:
  FlowRates rates(const Eigen::Vector3d& x) const;
  FlowPoint shifted(double h_t, const Eigen::Vector3d& x) const;
  const HilbertKernel& K_;
  HilbertContext ctx_;
  FlowEvaluator flow_;
  double h_t_;
};

// Boundary datum r = (1 - P_gamma+) f_2 at the wall point (x1, x2, 0), reduced by
// sqrt(mu0(xi)) on a split Hermite grid.
struct BoundaryDatum {
  VelocityGrid grid;
  Eigen::VectorXd f2, r;
  double projection_of_r = 0;  // max |P_gamma+ r|
  double orthogonality = 0;    // |int_{xi3>0} sqrt(mu0) r xi3| / |r|
};
BoundaryDatum build_r(const HilbertKernel& K, const HilbertEvaluator& H, double x1, double x2, int n_split = 12);

}  // namespace ep
