#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sheetspace/flows.hpp"
#include "sheetspace/kaehler.hpp"
#include "sheetspace/sheet.hpp"

namespace sheetspace {

// Schema violation; the message carries a JSON-pointer-style path.
class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(const std::string& path, const std::string& msg)
      : std::runtime_error(path + ": " + msg) {}
};

struct CheckSpec {
  std::string name;
  SweepSpec sweep;
  std::vector<std::vector<int>> grids;  // refinement companion to the eps list
  double residual_max = 1e-4;           // finest-point threshold for sweep checks
  double floor_min = 1e-2;              // non-lift / synthetic lower bound
  int points = 20;                      // sampled points for point batteries
  double point_eps = 1e-3;              // bracket step for point batteries
  std::string mode = "slope";           // observable: "slope" or "exact"
  double exact_max = 1e-8;
  // form payloads: (coefficient, wedge coordinate names)
  std::vector<std::pair<std::string, std::vector<std::string>>> upsilon;
  std::vector<std::pair<std::string, std::vector<std::string>>> gamma;
};

struct FlowSpec {
  FlowConfig config;
  std::vector<int> grid;  // overrides the sheet grid counts when nonempty
};

struct Scenario {
  std::string source_path;
  std::shared_ptr<MetricSpace> metric;
  ParamDomain domain;
  std::vector<std::string> map_exprs;
  std::vector<CheckSpec> checks;
  std::optional<FlowSpec> flow;
  std::string out_dir = ".";
  std::vector<std::string> formats = {"csv", "json"};
  std::uint64_t seed = 42;

  static Scenario load(const std::string& path);
};

struct ReportRow {
  std::string check;
  std::string param;
  std::string grid;
  double epsilon = std::numeric_limits<double>::quiet_NaN();
  double residual = std::numeric_limits<double>::quiet_NaN();
  double slope = std::numeric_limits<double>::quiet_NaN();
  bool pass = false;
};

struct CheckResult {
  std::string name;
  std::uint64_t seed = 0;
  bool pass = false;
  double wall_time_s = 0.0;
  std::string message;  // failure diagnostics
  std::vector<ReportRow> rows;
};

struct RunReport {
  bool all_pass = false;
  std::vector<CheckResult> checks;
};

RunReport run_scenario(const Scenario& sc, int jobs = 1);

std::string describe_scenario(const Scenario& sc);

// Atomic writers (temp file + rename). CSV columns:
// check,param,grid,epsilon,residual,slope,pass
void write_report_csv(const std::string& path, const RunReport& report);
void write_report_json(const std::string& path, const Scenario& sc, const RunReport& report);
void write_flow_csv(const std::string& path, const std::vector<FlowStep>& log);

// Full CLI entry: loads, runs, writes reports. Returns the process exit code
// (0 all checks pass, 1 any check failed, 2 invalid input).
int cli_run(const std::string& scenario_path, const std::string& out_override, int jobs);
int cli_describe(const std::string& scenario_path);

}  // namespace sheetspace
