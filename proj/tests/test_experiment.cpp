#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "metastab/error.hpp"
#include "metastab/experiment.hpp"

using namespace metastab;
namespace fs = std::filesystem;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("metastab_test_" + name);
  fs::remove_all(p);
  return p;
}

ErrorReport toy_report() {
  ErrorReport r;
  r.regime = "KdV";
  r.N1 = 2;
  r.N2 = 3;
  r.mu = 0.4;
  r.sigma = std::log(3.5) / std::log(2.5);
  r.p = 4;
  r.alpha = 1;
  r.beta = 1;
  r.C0 = 1;
  r.T0 = 0.5;
  r.dt = 0.04;
  r.scheme = "suzuki4";
  r.gamma_target = 1;
  r.gamma_fit = std::nan("");
  r.rho_fit = 1.5;
  r.c1_fit = 2;
  r.c2_fit = 3;
  r.fit_residual = 0.02;
  r.bound_ratio = 0.9;
  r.energy_drift = 1e-12;
  r.high_mode_scaled = 4;
  r.times = {0, 1};
  r.sup_error = {0, 1e-3};
  r.max_mode_gap = {0, 1e-5};
  r.high_mode_fraction = {0.5, 0.25};
  std::vector<double> zero(12, 0.0), one(12, 0.0);
  one[1 * 4 + 1] = std::pow(0.4, 4);
  r.spectra = {{0.0, one}, {1.0, zero}};
  r.per_mode_gap = {{1, 1, 1e-6}};
  return r;
}

}  // namespace

TEST_CASE("minimal config gets defaults") {
  const auto c = parse_config("regime = KdV\nN1_list = [8, 12]\nsigma_target = 3\n");
  CHECK(c.regime == Regime::kdv);
  CHECK(c.N1_list == std::vector<int>{8, 12});
  CHECK(c.sigma_target == 3.0);
  CHECK(c.gamma == 1.0);
  CHECK(c.C0 == 1.0);
  CHECK(c.T0 == 0.5);
  CHECK(c.alpha == 1.0);
  CHECK(c.samples == 21);
  CHECK(c.snapshot_times == std::vector<double>{0.0, 0.5, 1.0});
  CHECK_FALSE(c.scheme.has_value());

  const auto k = parse_config("regime = KP\nN1_list = [8]\nsigma_target = 2\n");
  CHECK(k.gamma == 0.4);
  const auto n = parse_config("regime = \"NLS1D\"  # quoted\nN1_list = [4]\nsigma_target = 2\n");
  CHECK(n.gamma == 0.5);
  CHECK(n.alpha == 0.0);
}

TEST_CASE("window violations are rejected") {
  const auto e1 = error_of("regime = KdV\nN1_list = [4]\nsigma_target = 8\n");
  CHECK(e1.find("sigma < 7") != std::string::npos);
  CHECK(e1.find("line 3") != std::string::npos);
  const auto e2 = error_of("regime = KP\nN1_list = [8]\nsigma_target = 2\ngamma = 0.6\n");
  CHECK(e2.find("gamma < 1/2") != std::string::npos);
  CHECK(e2.find("line 4") != std::string::npos);
  CHECK(error_of("regime = KdV\nN1_list = [8]\nsigma_target = 2.5\ngamma = 1.5\n").find("min(4*sigma-5, 7)") !=
        std::string::npos);
}

TEST_CASE("syntax and semantic errors carry line numbers") {
  CHECK(error_of("regime = KdV\nN1_list = []\nsigma_target = 3\n").find("line 2: N1_list must not be empty") == 0);
  CHECK(error_of("regime = KdV\nN1_list = [8]\nsigma_target = 3\nfoo = 1\n") == "line 4: unknown key 'foo'");
  CHECK(error_of("regime = KdV\nregime = KP\n").find("line 2: duplicate key") == 0);
  CHECK(error_of("regime = KdV\nN1_list = [8]\n").find("missing required key 'sigma_target'") != std::string::npos);
  CHECK(error_of("regime KdV\n") == "line 1: expected 'key = value'");
  CHECK(error_of("regime = KdV\nN1_list = [8, x]\nsigma_target = 3\n").find("line 2") == 0);
  CHECK(error_of("regime = KdV\nN1_list = [8, 4]\nsigma_target = 3\n").find("ascending") != std::string::npos);
  CHECK(error_of("regime = FPU\n").find("line 1") == 0);
  CHECK(error_of("regime = KdV\nN1_list = [8]\nsigma_target = 3\nalpha = 0\n").find("line 4") == 0);
  CHECK(error_of("regime = NLS1D\nN1_list = [8]\nsigma_target = 2\nbeta = -1\n").find("beta > 0") != std::string::npos);
  CHECK(error_of("regime = KdV\nN1_list = [8]\nsigma_target = 3\nsnapshot_times = [0, 2]\n").find("line 4") == 0);
  CHECK(error_of("regime = KdV\nN1_list = [8]\nsigma_target = 3\nk0 = [0, 0]\n").find("line 4") == 0);
  CHECK(error_of("regime = KdV\nN1_list = [8]\nsigma_target = 3\noutput_dir = \"a\n").find("line 4") == 0);
  CHECK(error_of("regime = KdV\nN1_list = [8]\nsigma_target = 3\n1x = 2\n").find("malformed key") != std::string::npos);
  CHECK_THROWS_AS(load_config("/nonexistent/metastab.cfg"), IoError);
}

TEST_CASE("serialize then parse is the identity") {
  RunConfig c = parse_config("regime = NLS1D\nN1_list = [4, 6, 9]\nsigma_target = 2\n");
  c.C0 = 0.3;
  c.T0 = 0.125;
  c.delta = 0.1;
  c.dt_overrides = {0.01, 0.02, 1.0 / 3};
  c.scheme = Scheme::leapfrog;
  c.output_dir = "some dir/with # hash";
  c.seed = 12345678901234ULL;
  c.snapshot_times = {0.0, 0.25, 1.0};
  c.k0 = {2, 1};
  c.harmonics = 3;
  c.stated_nls_dispersion = true;
  const std::string text = serialize_config(c);
  CHECK(parse_config(text) == c);
  CHECK(serialize_config(parse_config(text)) == text);
  CHECK(text.find("delta = 0.1\n") != std::string::npos);

  for (const char* f : {"kdv_demo.cfg", "kp_demo.cfg", "nls1d_demo.cfg", "smoke.cfg"}) {
    const auto cfg = load_config(fs::path(METASTAB_SOURCE_DIR) / "configs" / f);
    CHECK(parse_config(serialize_config(cfg)) == cfg);
  }
}

TEST_CASE("options derived from a config") {
  RunConfig c = parse_config("regime = KdV\nN1_list = [8, 12]\nsigma_target = 3\ndt_overrides = [0.01, 0.02]\n");
  const auto p = lattice_params_for(c, 8);
  CHECK(p.N2 == LatticeParams::n2_for_sigma(8, 3.0));
  CHECK(p.model == LatticeModel::etl);
  CHECK(comparison_options_for(c, 1).dt.value() == 0.02);
  CHECK(comparison_options_for(c, 0).pde_grid == Extents{64, 33});
  c.dt_overrides = {0.05};
  CHECK(comparison_options_for(c, 1).dt.value() == 0.05);
}

TEST_CASE("report JSON round trip") {
  const auto r = toy_report();
  const auto back = report_from_json(report_to_json(r, report_checks(r)));
  CHECK(back.regime == r.regime);
  CHECK(back.N1 == r.N1);
  CHECK(back.N2 == r.N2);
  CHECK(back.mu == r.mu);
  CHECK(back.sigma == r.sigma);
  CHECK(std::isnan(back.gamma_fit));
  CHECK(back.rho_fit == r.rho_fit);
  CHECK(back.times == r.times);
  CHECK(back.sup_error == r.sup_error);
  CHECK(back.high_mode_fraction == r.high_mode_fraction);
  REQUIRE(back.spectra.size() == 2);
  CHECK(back.spectra[0].folded == r.spectra[0].folded);
  CHECK(back.per_mode_gap.size() == 1);
  CHECK(report_to_json(back, report_checks(back)) == report_to_json(r, report_checks(r)));
  CHECK_THROWS_AS(report_from_json("{"), IoError);
  CHECK_THROWS_AS(report_from_json("{\"regime\": \"KdV\"}"), IoError);
}

TEST_CASE("checks") {
  auto r = toy_report();
  auto checks = report_checks(r);
  REQUIRE(checks.size() == 4);
  CHECK(checks[0].pass);                    // drift
  CHECK(checks[1].pass);                    // rho
  CHECK(checks[2].pass);                    // residual
  CHECK_FALSE(checks[3].pass);              // high-mode fraction 0.5
  r.energy_drift = 2e-8;
  CHECK_FALSE(report_checks(r)[0].pass);

  std::vector<ErrorReport> scan(2, toy_report());
  scan[0].mu = 0.2;
  scan[0].sup_error = {0, 0.2};
  scan[1].mu = 0.1;
  scan[1].sup_error = {0, 0.1};
  const auto sc = scan_checks(scan, 1.0);
  REQUIRE(sc.size() == 1);
  CHECK(sc[0].value == doctest::Approx(1.0));
  CHECK(sc[0].pass);
  CHECK_FALSE(scan_checks(scan, 1.2)[0].pass);
  CHECK(scan_checks({toy_report()}, 1.0).empty());
}

TEST_CASE("spectrum table") {
  auto r = toy_report();
  const auto t0 = emit_spectrum_table(r, 0.0);
  std::istringstream in(t0);
  std::string line;
  std::getline(in, line);
  CHECK(line == "kappa1,kappa2,E_kappa,bound_value");
  int rows = 0, nonzero = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::istringstream ls(line);
    double k1, k2, E, b;
    char c;
    ls >> k1 >> c >> k2 >> c >> E >> c >> b;
    if (E != 0.0) {
      ++nonzero;
      CHECK(E == doctest::Approx(std::pow(0.4, 4)).epsilon(1e-15));
      CHECK(k1 == doctest::Approx(1 / 2.5));
      CHECK(k2 == doctest::Approx(1 / 3.5));
    }
    CHECK(b > 0.0);
  }
  CHECK(rows == (r.N1 + 1) * (r.N2 + 1));
  CHECK(nonzero == 1);

  const auto t1 = emit_spectrum_table(r, 1.0);
  CHECK(t1.find(",0,") != std::string::npos);
  CHECK_THROWS_AS(emit_spectrum_table(r, 0.5), ConfigurationError);
}

TEST_CASE("sha256") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("aggregate CSV") {
  std::vector<ErrorReport> scan{toy_report()};
  scan[0].runtime_s = 1.5;
  const auto with = aggregate_csv(scan, true), without = aggregate_csv(scan, false);
  CHECK(with.rfind("mu,sigma,gamma_fit,rho_fit,max_sup_error,runtime_s\n", 0) == 0);
  CHECK(without.rfind("mu,sigma,gamma_fit,rho_fit,max_sup_error\n", 0) == 0);
  CHECK(with.find(",1.5\n") != std::string::npos);
}

TEST_CASE("small runs are deterministic") {
  RunConfig c = parse_config(
      "regime = NLS1D\nN1_list = [3, 4]\nsigma_target = 2\nsamples = 3\nT0 = 0.05\npde_n1 = 16\npde_n2 = 17\n"
      "pde_steps_per_unit = 200\n");
  const auto d1 = scratch("det1"), d2 = scratch("det2");
  c.output_dir = d1.string();
  const auto o1 = run_experiment(c, 1);
  c.output_dir = d2.string();
  const auto o2 = run_experiment(c, 1);
  // The output directory is not part of the hashed content.
  CHECK(o1.manifest != "");
  CHECK(o1.exit_code == o2.exit_code);
  for (const char* f : {"report_N1_3.json", "report_N1_4.json", "summary.json", "aggregate.csv", "MANIFEST"}) {
    CHECK(fs::exists(d1 / f));
    CHECK(fs::exists(d2 / f));
  }
  CHECK(read_file(d1 / "report_N1_3.json") == read_file(d2 / "report_N1_3.json"));
  CHECK(read_file(d1 / "summary.json") == read_file(d2 / "summary.json"));
  // Manifests differ only through the config line, which records output_dir.
  auto strip = [](std::string m) {
    std::istringstream in(m);
    std::string line, out;
    while (std::getline(in, line))
      if (line.rfind("config_sha256", 0) != 0 && line.rfind("manifest_sha256", 0) != 0) out += line + "\n";
    return out;
  };
  CHECK(strip(o1.manifest) == strip(o2.manifest));

  // Same config, same directory: bitwise-identical MANIFEST.
  const auto o3 = run_experiment(c, 1);
  CHECK(o3.manifest == o2.manifest);
  CHECK(read_file(d2 / "MANIFEST") == o3.manifest);

  const auto rep = load_report(d1 / "report_N1_4.json");
  CHECK(rep.N1 == 4);
  CHECK(rep.times.size() == 3);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("run exit codes") {
  RunConfig c = parse_config("regime = NLS1D\nN1_list = [3, 4]\nsigma_target = 2\nsamples = 5\npde_n1 = 16\npde_n2 = 17\n");
  const auto d = scratch("budget");
  c.output_dir = d.string();
  c.budget_seconds = 1e-9;
  const auto o = run_experiment(c, 1);
  CHECK(o.exit_code == exit_budget);
  CHECK(fs::exists(d / "MANIFEST"));
  CHECK(load_report(d / "report_N1_3.json").status == "aborted");

  c.output_dir = "/proc/definitely/not/writable";
  CHECK_THROWS_AS(run_experiment(c, 1), IoError);
  c.output_dir = d.string();
  c.N1_list.clear();
  CHECK_THROWS_AS(run_experiment(c, 1), ValidationError);
  fs::remove_all(d);
}

TEST_CASE("worker count") {
  CHECK(worker_count() >= 1);
}
