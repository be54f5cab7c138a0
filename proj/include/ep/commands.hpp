#pragma once

#include <string>
#include <vector>

#include "ep/checks.hpp"
#include "ep/report.hpp"

namespace ep {

// Process exit codes.
enum ExitCode { kExitPass = 0, kExitCheckFailure = 1, kExitConfig = 2, kExitNumerical = 3 };

const std::vector<std::string>& command_names();

// Runs one subcommand. Side outputs (CSV tables, snapshots) go to the config's
// output_dir under names that are never overwritten; their paths are listed in
// the report tables, relative to output_dir.
Report run_command(const std::string& name, Workspace& ws, int threads);

// Auxiliary checks used by the subcommands.
CheckResult check_projections(Workspace& ws);     // P and P_gamma+ idempotent
CheckResult check_matching(Workspace& ws);        // boundary matching of the layer stack
CheckResult check_decay(Workspace& ws);           // Prandtl layers decay in z
CheckResult check_wall_flux(Workspace& ws, const TrajectoryResult& run);

}  // namespace ep
