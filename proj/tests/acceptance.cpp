// Acceptance run: every criterion once, one line each, runtime budgets enforced.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <thread>

#include <CLI11.hpp>

#include "ep/checks.hpp"
#include "ep/error.hpp"
#include "ep/parallel.hpp"

using namespace ep;

namespace {

struct Entry {
  int criterion;
  CheckResult (*fn)(Workspace&);
  double budget;  // seconds, 0 for none
};

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string cache_dir, config_path;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  app.add_option("--cache-dir", cache_dir);
  app.add_option("--config", config_path);
  app.add_option("--threads", threads);
  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = config_path.empty() ? RunConfig::from_yaml_text("") : RunConfig::load(config_path);
    if (!cache_dir.empty()) cfg.cache_dir = cache_dir;
    set_threads(threads);
    Workspace ws(cfg);

    // Criterion 3 goes first so that its budget covers building or loading the collision tables.
    const std::vector<Entry> plan{{1, check_faa_di_bruno, 5},       {3, check_collision_identities, 120},
                                  {2, check_gaussian_moments, 5},   {4, check_k2_routes, 300},
                                  {5, check_aij_structure, 0},      {6, check_heat_layer, 30},
                                  {8, check_residual_scaling, 900}, {7, check_residual_routes, 0},
                                  {9, check_ra_routes, 0},          {10, check_boundary_identities, 0},
                                  {11, check_conservation, 0},      {12, check_duhamel, 0}};
    std::map<int, CheckResult> results;
    const auto start = std::chrono::steady_clock::now();
    for (const Entry& e : plan) {
      results[e.criterion] = timed(e.fn, ws, e.budget);
      std::fprintf(stderr, "  ... criterion %d done in %.1f s\n", e.criterion, results[e.criterion].seconds);
    }
    {
      const auto t0 = std::chrono::steady_clock::now();
      CheckResult c = check_determinism(ws, threads);
      c.seconds = since(t0);
      results[13] = c;
    }

    int failed = 0;
    for (auto& [n, c] : results) {
      const bool in_time = c.budget_seconds <= 0 || c.seconds < c.budget_seconds;
      const bool ok = c.pass && in_time;
      failed += !ok;
      std::printf("criterion %2d %-22s %s  value %.4e %s %.4e  time %.1f s", n, c.id.c_str(), ok ? "PASS" : "FAIL",
                  c.value, c.relation.c_str(), c.tolerance, c.seconds);
      if (c.budget_seconds > 0) std::printf(" (budget %.0f s%s)", c.budget_seconds, in_time ? "" : ", exceeded");
      std::printf("\n");
      if (!ok) std::printf("    detail %s\n", c.detail.dump().c_str());
    }
    std::printf("%d of %zu criteria passed, total %.1f s\n", static_cast<int>(results.size()) - failed,
                results.size(), since(start));
    std::fflush(stdout);
    return failed ? 1 : 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_config() ? 2 : 3;
  }
}
