#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "metastab/metastab.h"

namespace fs = std::filesystem;

namespace {

struct Cli {
  int code;
  std::string out;
};

Cli run_cli(const std::string& args) {
  const char* exe = std::getenv("METASTAB_CLI");
  REQUIRE(exe != nullptr);
  const std::string cmd = std::string("\"") + exe + "\" " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, n);
  const int st = pclose(p);
  return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, out};
}

fs::path write_tmp(const std::string& name, const std::string& text) {
  const auto p = fs::temp_directory_path() / ("metastab_capi_" + name);
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("config handles") {
  metastab_config* cfg = nullptr;
  REQUIRE(metastab_config_parse("regime = KdV\nN1_list = [8]\nsigma_target = 3\n", &cfg) == METASTAB_OK);
  char* text = nullptr;
  REQUIRE(metastab_config_serialize(cfg, &text) == METASTAB_OK);
  CHECK(std::string(text).find("regime = KdV") != std::string::npos);
  metastab_config* again = nullptr;
  CHECK(metastab_config_parse(text, &again) == METASTAB_OK);
  metastab_string_free(text);
  metastab_config_free(again);
  metastab_config_free(cfg);

  metastab_config* bad = nullptr;
  CHECK(metastab_config_parse("regime = KdV\nN1_list = [8]\nsigma_target = 8\n", &bad) == METASTAB_ERR_VALIDATION);
  CHECK(bad == nullptr);
  CHECK(std::string(metastab_last_error()).find("sigma < 7") != std::string::npos);
  CHECK(metastab_config_parse(nullptr, &bad) == METASTAB_ERR_ARGUMENT);
  CHECK(metastab_config_load("/nonexistent.cfg", &bad) == METASTAB_ERR_IO);
  CHECK(std::string(metastab_version()) == "1.0.0");
}

TEST_CASE("lattice handles") {
  metastab_lattice* lat = nullptr;
  REQUIRE(metastab_lattice_create(METASTAB_ETL, 4, 5, 1.0, 1.0, &lat) == METASTAB_OK);
  REQUIRE(metastab_lattice_single_mode(lat, 1, 1, 1.0, 0.0) == METASTAB_OK);
  const double mu = 1.0 / 4.5;
  double e = 0, e11 = 0, e22 = 0, t = 0;
  REQUIRE(metastab_lattice_mode_energy(lat, 1, 1, &e11) == METASTAB_OK);
  CHECK(e11 == doctest::Approx(std::pow(mu, 4)).epsilon(1e-12));
  REQUIRE(metastab_lattice_mode_energy(lat, 2, 2, &e22) == METASTAB_OK);
  CHECK(e22 < 1e-28);
  REQUIRE(metastab_lattice_energy(lat, &e) == METASTAB_OK);
  const double e_start = e;
  REQUIRE(metastab_lattice_advance(lat, 0.05, 200, "suzuki4") == METASTAB_OK);
  REQUIRE(metastab_lattice_time(lat, &t) == METASTAB_OK);
  CHECK(t == doctest::Approx(10.0));
  REQUIRE(metastab_lattice_energy(lat, &e) == METASTAB_OK);
  CHECK(std::abs(e - e_start) <= 1e-8 * e_start);

  std::vector<double> Q(9 * 11), P(9 * 11);
  CHECK(metastab_lattice_get(lat, Q.data(), P.data(), Q.size()) == METASTAB_OK);
  CHECK(metastab_lattice_get(lat, Q.data(), P.data(), 5) == METASTAB_ERR_ARGUMENT);
  CHECK(metastab_lattice_advance(lat, 0.05, 1, "rk4") == METASTAB_ERR_ARGUMENT);
  CHECK(metastab_lattice_mode_energy(lat, 7, 0, &e) == METASTAB_ERR_ARGUMENT);
  CHECK(metastab_lattice_single_mode(lat, 0, 0, 1.0, 0.0) != METASTAB_OK);
  CHECK(std::string(metastab_last_error()).size() > 0);
  CHECK(metastab_lattice_energy(nullptr, &e) == METASTAB_ERR_ARGUMENT);
  metastab_lattice_free(lat);

  CHECK(metastab_lattice_create(METASTAB_KG, 0, 5, 1.0, 1.0, &lat) != METASTAB_OK);
}

TEST_CASE("run and reports through the C API") {
  const auto dir = fs::temp_directory_path() / "metastab_capi_run";
  fs::remove_all(dir);
  metastab_config* cfg = nullptr;
  REQUIRE(metastab_config_parse("regime = NLS1D\nN1_list = [3, 4]\nsigma_target = 2\nsamples = 3\nT0 = 0.05\n"
                                "pde_n1 = 16\npde_n2 = 17\npde_steps_per_unit = 200\n",
                                &cfg) == METASTAB_OK);
  REQUIRE(metastab_config_set_output_dir(cfg, dir.c_str()) == METASTAB_OK);
  int code = -1;
  char* diag = nullptr;
  REQUIRE(metastab_run(cfg, 1, &code, &diag) == METASTAB_OK);
  CHECK(code >= 0);
  CHECK(code <= 3);
  metastab_string_free(diag);
  metastab_config_free(cfg);

  metastab_report* rep = nullptr;
  REQUIRE(metastab_report_load((dir / "report_N1_4.json").c_str(), &rep) == METASTAB_OK);
  double mu = 0, drift = 1;
  CHECK(metastab_report_scalar(rep, "mu", &mu) == METASTAB_OK);
  CHECK(mu == doctest::Approx(1 / 4.5));
  CHECK(metastab_report_scalar(rep, "energy_drift", &drift) == METASTAB_OK);
  CHECK(drift < 1e-8);
  CHECK(metastab_report_scalar(rep, "nope", &mu) == METASTAB_ERR_ARGUMENT);
  char* csv = nullptr;
  REQUIRE(metastab_spectrum_table(rep, 0.0, &csv) == METASTAB_OK);
  CHECK(std::string(csv).rfind("kappa1,kappa2,E_kappa,bound_value\n", 0) == 0);
  metastab_string_free(csv);
  CHECK(metastab_spectrum_table(rep, 0.123, &csv) == METASTAB_ERR_ARGUMENT);
  metastab_report_free(rep);
  CHECK(metastab_report_load((dir / "missing.json").c_str(), &rep) == METASTAB_ERR_IO);
  fs::remove_all(dir);
}

TEST_CASE("CLI exit codes") {
  const auto good = write_tmp("good.cfg", "regime = KdV\nN1_list = [8]\nsigma_target = 3\n");
  const auto bad = write_tmp("bad.cfg", "regime = KdV\nN1_list = [8]\nsigma_target = 8\n");
  const auto v = run_cli("validate " + good.string());
  CHECK(v.code == 0);
  CHECK(v.out.find("gamma = 1") != std::string::npos);
  const auto b = run_cli("validate " + bad.string());
  CHECK(b.code == 1);
  CHECK(b.out.find("sigma < 7") != std::string::npos);
  CHECK(run_cli("--version").out.find("1.0.0") != std::string::npos);
  CHECK(run_cli("--version").code == 0);
  CHECK(run_cli("frobnicate").code == 1);
  CHECK(run_cli("run /nonexistent.cfg").code == 1);

  const auto dir = fs::temp_directory_path() / "metastab_capi_cli";
  fs::remove_all(dir);
  const auto budget = write_tmp("budget.cfg",
                                "regime = NLS1D\nN1_list = [3]\nsigma_target = 2\nsamples = 3\npde_n1 = 16\n"
                                "pde_n2 = 17\nbudget_seconds = 1e-9\n");
  CHECK(run_cli("run -j 1 -o " + dir.string() + " " + budget.string()).code == 3);
  CHECK(fs::exists(dir / "MANIFEST"));
  fs::remove_all(dir);
  fs::remove(good);
  fs::remove(bad);
  fs::remove(budget);
}
