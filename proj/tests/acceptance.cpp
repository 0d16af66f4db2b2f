// Runs the shipped presets ac1..ac10 and prints one PASS/FAIL line per criterion.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "config.hpp"
#include "runner.hpp"

using namespace geolearn::cli;
using nlohmann::json;

namespace {

struct Extra {
  std::string what;
  double value = 0.0;
  double limit = 0.0;
  bool ok() const { return std::isfinite(value) && value <= limit; }
};

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

/// Closed-form oracles evaluated on the run summary.
std::vector<Extra> oracles(int n, const json& s) {
  std::vector<Extra> out;
  switch (n) {
    case 3: {
      // one step from rest with flat loss: covariance gamma^2 dt I under the square-root metric
      const auto& emp = s.at("update_covariance").at("empirical");
      const double expect = 1.0 * 1.0 * 0.01;
      double worst = 0.0;
      for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
          worst = std::max(worst, std::abs(emp[i][j].get<double>() - (i == j ? expect : 0.0)) / expect);
      out.push_back({"cov vs gamma^2 dt I", worst, 0.05});
      break;
    }
    case 5: out.push_back({"variance vs 1/(beta k)", rel(s.at("variance")[0].get<double>(), 1.0), 0.03}); break;
    case 6: out.push_back({"expansion vs beta sigma k q0", rel(s.at("expansion_parameter").get<double>(), 0.1 * 0.5 * 1.0 * 2.0), 1e-12}); break;
    case 7: {
      const double hbar = std::sqrt(2.0 * 0.5 / 1.0);
      out.push_back({"E0 vs hbar omega/2", rel(s.at("ground_energy").get<double>(), 0.5 * hbar * 1.0), 1e-3});
      break;
    }
    default: break;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path root = argc > 1 ? argv[1] : "acceptance_out";
  int failed = 0;
  for (int n = 1; n <= 10; ++n) {
    const std::string name = "ac" + std::to_string(n);
    const auto text = preset_text(name);
    if (!text) {
      std::printf("AC%d FAIL missing preset\n", n);
      ++failed;
      continue;
    }
    RunOutcome r;
    try {
      r = run_experiment(parse_config(*text, {}, (root / name).string()));
    } catch (const std::exception& e) {
      std::printf("AC%d FAIL %s\n", n, e.what());
      ++failed;
      continue;
    }
    bool pass = r.exit_code == kExitOk;
    std::string detail;
    char buf[256];
    for (const auto& c : r.checks) {
      std::snprintf(buf, sizeof buf, " %s=%.4g(%s%.4g)", c.name.c_str(), c.value, c.lower_bound ? ">=" : "<=", c.threshold);
      detail += buf;
    }
    if (r.exit_code == kExitOk || r.exit_code == kExitCheck) {
      for (const auto& x : oracles(n, r.summary)) {
        pass = pass && x.ok();
        std::snprintf(buf, sizeof buf, " [%s %.4g<=%.4g]", x.what.c_str(), x.value, x.limit);
        detail += buf;
      }
    }
    if (!r.error.empty()) detail += " error: " + r.error;
    std::printf("AC%d %s%s (%.2f s)\n", n, pass ? "PASS" : "FAIL", detail.c_str(), r.wall_seconds);
    std::fflush(stdout);
    if (!pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
