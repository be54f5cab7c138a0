#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace ep {

using Json = nlohmann::ordered_json;

struct CheckResult {
  std::string id;         // short stable name, e.g. "collision-identities"
  int criterion = 0;      // acceptance number, 0 for auxiliary checks
  bool pass = false;
  double value = 0;       // the quantity compared against the tolerance
  double tolerance = 0;
  std::string relation;   // "<=", ">=", "in" ...
  Json detail = Json::object();
  // Wall-clock seconds and the budget; kept out of the JSON so reports stay reproducible.
  double seconds = 0;
  double budget_seconds = 0;
};

// One run of one subcommand. Deterministic given config and seed.
class Report {
 public:
  Report(std::string command, std::string config_hash, unsigned seed);

  void add(CheckResult c) { checks_.push_back(std::move(c)); }
  const std::vector<CheckResult>& checks() const { return checks_; }
  Json& tables() { return tables_; }
  bool passed() const;

  Json to_json() const;
  std::string dump() const { return to_json().dump(2) + "\n"; }
  void print_text(std::ostream& os) const;

  // Writes <dir>/<command>-<hash>-<n>.json with the first unused n; returns the path.
  std::string write(const std::string& dir) const;

  static const char* version();
  static constexpr const char* kSchema = "ep-report/1";

 private:
  std::string command_, hash_;
  unsigned seed_;
  std::vector<CheckResult> checks_;
  Json tables_ = Json::object();
};

// Writes text to <dir>/<stem>-<n><ext> with the first unused n; returns the path.
std::string write_unique(const std::string& dir, const std::string& stem, const std::string& ext,
                         const std::string& text);

}  // namespace ep
