// Command-line front end: one subcommand per verification pipeline.
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "ep/commands.hpp"
#include "ep/error.hpp"
#include "ep/parallel.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Verification pipelines for the layered hydrodynamic expansion"};
  app.require_subcommand(1, 1);

  std::string config_path, output_dir, cache_dir;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  bool json = false;
  long seed = -1;
  app.add_option("--config", config_path, "YAML run configuration (defaults apply when omitted)");
  app.add_option("--output-dir", output_dir, "directory for reports, tables and snapshots");
  app.add_option("--cache-dir", cache_dir, "directory for cached collision and Gamma tables");
  app.add_option("--threads", threads, "worker threads")->check(CLI::Range(1, 1024));
  app.add_flag("--json", json, "print the report as JSON instead of text");
  app.add_option("--seed", seed, "random seed, overrides the config")->check(CLI::Range(0L, 4294967295L));
  for (const auto& name : ep::command_names()) app.add_subcommand(name, "")->fallthrough();
  app.get_subcommand("selftest")->description("identity suites: combinatorics, moments, collision, K2, projections");
  app.get_subcommand("collision-tables")->description("build or load the collision tables and A_ij");
  app.get_subcommand("build-expansion")->description("solve the fluid layers, write a snapshot");
  app.get_subcommand("residual-sweep")->description("residual of the assembled flow over the kappa list");
  app.get_subcommand("transport-run")->description("linear kinetic remainder run with its checks");
  app.get_subcommand("report")->description("every acceptance check in one report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ep::kExitPass : ep::kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    ep::RunConfig cfg = config_path.empty() ? ep::RunConfig::from_yaml_text("") : ep::RunConfig::load(config_path);
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    if (!cache_dir.empty()) cfg.cache_dir = cache_dir;
    if (seed >= 0) cfg.seed = static_cast<unsigned>(seed);
    ep::set_threads(threads);
    ep::Workspace ws(cfg);
    const ep::Report rep = ep::run_command(command, ws, threads);
    const std::string path = rep.write(ws.config().output_dir);
    if (json)
      std::cout << rep.dump();
    else {
      rep.print_text(std::cout);
      std::cout << "report: " << path << "\n";
    }
    return rep.passed() ? ep::kExitPass : ep::kExitCheckFailure;
  } catch (const ep::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_config() ? ep::kExitConfig : ep::kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ep::kExitNumerical;
  }
}
