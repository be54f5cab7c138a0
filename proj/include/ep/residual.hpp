#pragma once

#include <map>
#include <string>
#include <vector>

#include "ep/fluid.hpp"
#include "ep/multiindex.hpp"

namespace ep {

struct ResidualOptions {
  AnalyticLedger ledger;  // norms use tau0
  double epsilon = 0.1;   // scale of the time derivative in the analytic norm
  int tail_order = 48;    // |alpha| range summed for the truncation tail
};

// Truncated analytic norm: sum over |alpha| <= max_order of A_alpha ||d^alpha f||,
// tangential derivatives taken exactly per Fourier mode, alpha_0 <= 1.
struct AnalyticNorm {
  double value = 0;
  double tail = 0;  // the same sum over max_order < |alpha| <= tail_order
};

// comps: components of a vector field on (tangential rows) x (normal points) with
// normal quadrature weights w; rate: eps d_t of each component (may be empty).
AnalyticNorm analytic_norm(const Tangential& tan, const std::vector<Mat>& comps, const std::vector<Mat>& rate,
                           const Vec& w, double tau, int max_order, int tail_order);

struct ResidualReport {
  double kappa = 0, t = 0;
  int N = 0;
  double ns_par = 0, ns_normal = 0, ns = 0, div = 0, total = 0;  // total = ns + div
  double tail = 0;                                               // summed tails of ns and div
  double sup = 0;                                                // max pointwise |NS|, |div|
  std::map<std::string, double> groups;                          // norm of each term group
};

// The residual of the assembled expansion. The layers do not depend on kappa, so
// one evaluator serves a whole sweep.
class ResidualEvaluator {
 public:
  ResidualEvaluator(const ExpansionStack& stack, ResidualOptions opt = {});

  // Differentiates the assembled (u_a, v_a, p_a).
  ResidualReport direct(double kappa) const;
  // Sums the leftover term groups of the layered expansion.
  ResidualReport structural(double kappa) const;
  // ||direct - structural|| / ||structural|| over NS and divergence together.
  double route_gap(double kappa) const;

  // Normal evaluation points and weights used for kappa.
  void points(double kappa, std::vector<double>& x3, Vec& w) const;

 private:
  struct Fields {
    std::vector<Mat> ns;   // 3 components
    std::vector<Mat> div;  // 1 component
    std::map<std::string, std::vector<Mat>> groups;
  };
  Fields evaluate(const LayerFields& F, double kappa, bool structural, bool with_groups) const;
  ResidualReport report(double kappa, bool structural) const;

  const ExpansionStack& stack_;
  ResidualOptions opt_;
  LayerFields F_, Fplus_, Fminus_;
};

struct SweepPoint {
  double kappa = 0;
  ResidualReport direct, structural;
  double gap = 0;
};

struct SweepResult {
  int N = 0;
  std::vector<SweepPoint> points;
  double slope = 0;      // least squares over the three smallest kappa
  double slope_all = 0;  // over every kappa, for reference
  std::map<std::string, double> group_slopes;
  std::string csv() const;  // kappa,N,ns_par,ns_normal,div,total
};

SweepResult kappa_sweep(const ExpansionStack& stack, const std::vector<double>& kappas, const ResidualOptions& opt = {});

// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace ep
