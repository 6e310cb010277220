#pragma once

// Experiment driver: run configurations, mu-scans, and on-disk results.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "metastab/bridge.hpp"

namespace metastab {

inline constexpr const char* kVersion = "1.0.0";

struct RunConfig {
  Regime regime = Regime::kdv;
  std::vector<int> N1_list;
  double sigma_target = 0.0;
  double C0 = 1.0;
  double T0 = 0.5;
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 0.0;  // filled from the regime when unset
  double rho = 1.0;
  double delta = 0.1;
  // Empty, one value for all runs, or one value per N1.
  std::vector<double> dt_overrides;
  std::optional<Scheme> scheme;
  std::string output_dir = "metastab_out";
  std::uint64_t seed = 0;
  // Fractions of the horizon T0/mu^e, each in [0, 1].
  std::vector<double> snapshot_times{0.0, 0.5, 1.0};
  int samples = 21;
  int pde_n1 = 64;
  int pde_n2 = 33;
  int pde_steps_per_unit = 2000;
  double budget_seconds = 0.0;
  std::vector<int> k0{1, 1};
  int harmonics = 1;
  double harmonic_decay = 2.0;
  bool stated_nls_dispersion = false;

  bool operator==(const RunConfig&) const = default;
};

// Flat "key = value" lines; see docs/config_format.md. Throws ValidationError
// carrying the line number, or naming the violated window inequality.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
// Canonical text form; parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& cfg);
// Semantic checks shared by parse_config and run_experiment.
void validate_config(const RunConfig& cfg);

LatticeParams lattice_params_for(const RunConfig& cfg, int N1);
ComparisonOptions comparison_options_for(const RunConfig& cfg, std::size_t run_index);

struct CheckResult {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

// Inequalities checked on one finished report.
std::vector<CheckResult> report_checks(const ErrorReport& r);
// Inequalities checked across a scan (needs at least two runs).
std::vector<CheckResult> scan_checks(const std::vector<ErrorReport>& scan, double gamma_target);

std::string report_to_json(const ErrorReport& r, const std::vector<CheckResult>& checks = {});
ErrorReport report_from_json(const std::string& text);
ErrorReport load_report(const std::filesystem::path& path);

// Columns mu, sigma, gamma_fit, rho_fit, max_sup_error, runtime_s.
std::string aggregate_csv(const std::vector<ErrorReport>& scan, bool with_runtime = true);

// Rows kappa1, kappa2, E_kappa, bound_value for the snapshot at time t.
std::string emit_spectrum_table(const ErrorReport& r, double t);

std::string sha256_hex(const std::string& data);

enum ExitCode : int { exit_ok = 0, exit_validation = 1, exit_numerical = 2, exit_budget = 3 };

struct ExperimentOutcome {
  int exit_code = exit_ok;
  std::vector<ErrorReport> reports;
  std::vector<std::string> diagnostics;
  std::string manifest;
};

// Worker count: METASTAB_THREADS if set, else the hardware concurrency.
int worker_count();

// Runs the scan and writes report_N1_<n>.json, aggregate.csv, summary.json and
// MANIFEST into cfg.output_dir.
ExperimentOutcome run_experiment(const RunConfig& cfg, int workers = 0);

}  // namespace metastab
