// Command-line front end; talks to the library only through the C API.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "metastab/metastab.h"

namespace {

// CLI exit codes: 0 success, 1 validation (or unreadable input), 2 numerical, 3 budget.
int exit_for(int status) {
  switch (status) {
    case METASTAB_OK: return 0;
    case METASTAB_ERR_NUMERICAL: return 2;
    case METASTAB_ERR_BUDGET: return 3;
    default: return 1;
  }
}

int report_failure(int status) {
  std::cerr << "error: " << metastab_last_error() << "\n";
  return exit_for(status);
}

int cmd_validate(const std::string& path) {
  metastab_config* cfg = nullptr;
  if (int s = metastab_config_load(path.c_str(), &cfg)) return report_failure(s);
  char* text = nullptr;
  int s = metastab_config_serialize(cfg, &text);
  metastab_config_free(cfg);
  if (s) return report_failure(s);
  std::cout << text;
  metastab_string_free(text);
  return 0;
}

int cmd_run(const std::string& path, int workers, const std::string& out_dir) {
  metastab_config* cfg = nullptr;
  if (int s = metastab_config_load(path.c_str(), &cfg)) return report_failure(s);
  if (!out_dir.empty()) {
    if (int s = metastab_config_set_output_dir(cfg, out_dir.c_str())) {
      metastab_config_free(cfg);
      return report_failure(s);
    }
  }
  int code = 0;
  char* diag = nullptr;
  const int s = metastab_run(cfg, workers, &code, &diag);
  metastab_config_free(cfg);
  if (s) return report_failure(s);
  if (diag && *diag) std::cerr << diag;
  metastab_string_free(diag);
  return code;
}

int cmd_table(const std::string& path, double t, const std::string& out) {
  metastab_report* rep = nullptr;
  if (int s = metastab_report_load(path.c_str(), &rep)) return report_failure(s);
  char* csv = nullptr;
  const int s = metastab_spectrum_table(rep, t, &csv);
  metastab_report_free(rep);
  if (s) return report_failure(s);
  if (out.empty()) {
    std::cout << csv;
  } else {
    std::ofstream f(out, std::ios::binary);
    f << csv;
    if (!f) {
      std::cerr << "error: cannot write " << out << "\n";
      metastab_string_free(csv);
      return 1;
    }
  }
  metastab_string_free(csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lattice metastability experiments"};
  app.set_version_flag("--version", std::string(metastab_version()));
  app.require_subcommand(1);

  std::string run_cfg, run_out;
  int workers = 0;
  auto* run = app.add_subcommand("run", "Run a configuration and write reports");
  run->add_option("config", run_cfg, "Configuration file")->required()->check(CLI::ExistingFile);
  run->add_option("-j,--workers", workers, "Worker threads (default: METASTAB_THREADS or all cores)");
  run->add_option("-o,--output-dir", run_out, "Override output_dir");

  std::string val_cfg;
  auto* validate = app.add_subcommand("validate", "Check a configuration and print it with defaults filled");
  validate->add_option("config", val_cfg, "Configuration file")->required()->check(CLI::ExistingFile);

  std::string tbl_report, tbl_out;
  double tbl_time = 0.0;
  auto* table = app.add_subcommand("table", "Spectrum table of a report at a snapshot time");
  table->add_option("report", tbl_report, "Report JSON")->required()->check(CLI::ExistingFile);
  table->add_option("--time", tbl_time, "Snapshot time")->required();
  table->add_option("-o,--output", tbl_out, "Write the CSV to a file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  if (*run) return cmd_run(run_cfg, workers, run_out);
  if (*validate) return cmd_validate(val_cfg);
  if (*table) return cmd_table(tbl_report, tbl_time, tbl_out);
  return 1;
}
