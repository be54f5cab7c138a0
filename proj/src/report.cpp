#include "ep/report.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "ep/error.hpp"

#ifndef EP_VERSION
#define EP_VERSION "dev"
#endif

namespace ep {

namespace fs = std::filesystem;

Report::Report(std::string command, std::string config_hash, unsigned seed)
    : command_(std::move(command)), hash_(std::move(config_hash)), seed_(seed) {}

const char* Report::version() { return EP_VERSION; }

bool Report::passed() const {
  for (const auto& c : checks_)
    if (!c.pass) return false;
  return true;
}

namespace {
// NaN and infinities have no JSON spelling; keep them visible as strings.
Json number(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}
}  // namespace

Json Report::to_json() const {
  Json j;
  j["schema"] = kSchema;
  j["command"] = command_;
  j["version"] = version();
  j["config_hash"] = hash_;
  j["seed"] = seed_;
  Json arr = Json::array();
  for (const auto& c : checks_) {
    Json e;
    e["id"] = c.id;
    e["criterion"] = c.criterion;
    e["status"] = c.pass ? "pass" : "fail";
    e["value"] = number(c.value);
    e["tolerance"] = number(c.tolerance);
    e["relation"] = c.relation;
    e["detail"] = c.detail;
    arr.push_back(std::move(e));
  }
  j["checks"] = std::move(arr);
  j["tables"] = tables_;
  j["status"] = passed() ? "pass" : "fail";
  return j;
}

void Report::print_text(std::ostream& os) const {
  os << command_ << "  config " << hash_ << "  seed " << seed_ << "\n";
  for (const auto& c : checks_) {
    os << "  [" << (c.pass ? "PASS" : "FAIL") << "] ";
    if (c.criterion > 0) os << "#" << c.criterion << " ";
    os << c.id << ": " << std::setprecision(4) << std::scientific << c.value << " " << c.relation << " "
       << c.tolerance << std::defaultfloat << "\n";
  }
  os << (passed() ? "all checks passed" : "some checks failed") << "\n";
}

std::string write_unique(const std::string& dir, const std::string& stem, const std::string& ext,
                         const std::string& text) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Config, "cannot create output directory " + dir + ": " + ec.message());
  for (int n = 0;; ++n) {
    const fs::path p = fs::path(dir) / (stem + "-" + std::to_string(n) + ext);
    if (fs::exists(p)) continue;
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(ErrorKind::Config, "cannot write " + p.string());
    out << text;
    return p.string();
  }
}

std::string Report::write(const std::string& dir) const {
  return write_unique(dir, command_ + "-" + hash_, ".json", dump());
}

}  // namespace ep
