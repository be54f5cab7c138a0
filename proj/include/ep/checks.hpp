#pragma once

#include <memory>
#include <optional>

#include "ep/collision.hpp"
#include "ep/config.hpp"
#include "ep/fluid.hpp"
#include "ep/hilbert.hpp"
#include "ep/report.hpp"
#include "ep/residual.hpp"
#include "ep/transport.hpp"

namespace ep {

// Lazily built pipeline objects shared by the checks of one run.
class Workspace {
 public:
  explicit Workspace(RunConfig cfg);

  const RunConfig& config() const { return cfg_; }
  std::shared_ptr<const Collision> collision();
  const AijResult& aij();
  // Layers advanced to run.stack_time with eta0 from the collision tables.
  const ExpansionStack& stack();
  const HilbertKernel& kernel();
  const HilbertEvaluator& hilbert();
  const GammaTable& gamma();
  const LinearTransport& transport();
  const TransportProblem& problem();
  const SweepResult& sweep();
  const RefinementStudy& refinement();
  IntegrateOptions integrate_options();

 private:
  RunConfig cfg_;
  std::shared_ptr<const Collision> col_;
  std::optional<AijResult> aij_;
  std::unique_ptr<ExpansionStack> stack_;
  std::unique_ptr<HilbertKernel> kernel_;
  std::unique_ptr<HilbertEvaluator> hilbert_;
  std::unique_ptr<GammaTable> gamma_;
  std::unique_ptr<LinearTransport> transport_;
  std::unique_ptr<TransportProblem> problem_;
  std::optional<SweepResult> sweep_;
  std::optional<RefinementStudy> refinement_;
};

// One function per acceptance criterion, numbered as in the acceptance list.
CheckResult check_faa_di_bruno(Workspace& ws);         // 1
CheckResult check_gaussian_moments(Workspace& ws);     // 2
CheckResult check_collision_identities(Workspace& ws); // 3
CheckResult check_k2_routes(Workspace& ws);            // 4
CheckResult check_aij_structure(Workspace& ws);        // 5
CheckResult check_heat_layer(Workspace& ws);           // 6
CheckResult check_residual_routes(Workspace& ws);      // 7
CheckResult check_residual_scaling(Workspace& ws);     // 8
CheckResult check_ra_routes(Workspace& ws);            // 9
CheckResult check_boundary_identities(Workspace& ws);  // 10
CheckResult check_conservation(Workspace& ws);         // 11
CheckResult check_duhamel(Workspace& ws);              // 12

// Auxiliary: mass, energy and fourth moment of the velocity rule.
CheckResult check_quadrature_normalisation(Workspace& ws);

// Short fixed pipeline whose report must not depend on the thread count or on
// the run: collision identities, A_ij, R_a at a few points and a few transport steps.
Report determinism_probe(Workspace& ws, int threads);
// Criterion 13: the probe on two fresh workspaces, single-threaded and with `threads` workers.
CheckResult check_determinism(Workspace& ws, int threads);

// Runs one check, filling in its wall time and budget.
CheckResult timed(CheckResult (*fn)(Workspace&), Workspace& ws, double budget_seconds);

}  // namespace ep
