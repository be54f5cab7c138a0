#pragma once

#include <string>
#include <vector>

#include "ep/collision.hpp"
#include "ep/fluid.hpp"
#include "ep/multiindex.hpp"
#include "ep/transport.hpp"

namespace ep {

// Everything a pipeline run needs. Loaded from YAML; unknown keys are errors.
struct RunConfig {
  // scales
  double epsilon = 0.05, kappa = 0.1, delta = 0.3;
  std::vector<double> kappas{1e-1, 3e-2, 1e-2, 3e-3, 1e-3};
  // physics
  double TM = 0.9;
  double rho = 0.0;     // Gaussian weight of the sup norm
  double p0 = 1.0 / 16; // weight exponent of the Maxwellian bounds; rho must stay below it
  // pressure held constant in f_2 instead of p_a, when set
  std::optional<double> pressure;

  AnalyticLedger ledger;
  CollisionConfig collision;
  FluidConfig fluid;
  TransportConfig transport;  // its scales are overwritten from the fields above

  // run
  double stack_time = 0.25;  // fluid layers are advanced to this time
  std::vector<double> refinement_dts{2e-4, 1e-4, 5e-5};
  int norm_order = 4;
  int residual_points = 10;  // R_a comparison points
  std::string cache_dir;
  std::string output_dir = "ep-output";
  unsigned seed = 1;

  void validate() const;
  // Copies the shared scales into the module configs.
  void sync();

  static RunConfig from_yaml_text(const std::string& text);
  static RunConfig load(const std::string& path);
  // Canonical JSON dump; the hash is FNV-1a over it.
  std::string canonical() const;
  std::string hash() const;
};

}  // namespace ep
