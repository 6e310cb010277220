#include "metastab/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "metastab/error.hpp"

namespace metastab {

namespace {

using json = nlohmann::json;

// Shortest text that reads back to the same double.
std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ---- tokenizer for the flat config format ----

struct Scalar {
  std::string text;
  bool quoted = false;
};

struct Value {
  bool is_array = false;
  std::vector<Scalar> items;
  int line = 0;
};

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string strip_comment(const std::string& line) {
  bool in_quote = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_quote = !in_quote;
    if (line[i] == '#' && !in_quote) return line.substr(0, i);
  }
  return line;
}

Scalar parse_scalar(const std::string& raw, int line) {
  const std::string s = trim(raw);
  if (s.empty()) throw ValidationError("empty value", line);
  if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"') throw ValidationError("unterminated string", line);
    const std::string inner = s.substr(1, s.size() - 2);
    if (inner.find('"') != std::string::npos) throw ValidationError("stray quote in string", line);
    return {inner, true};
  }
  for (char c : s)
    if (std::isspace(static_cast<unsigned char>(c)) || c == '[' || c == ']' || c == ',' || c == '"')
      throw ValidationError("malformed value '" + s + "'", line);
  return {s, false};
}

Value parse_value(const std::string& raw, int line) {
  const std::string s = trim(raw);
  Value v;
  v.line = line;
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') throw ValidationError("unterminated array", line);
    v.is_array = true;
    const std::string inner = trim(s.substr(1, s.size() - 2));
    if (inner.empty()) return v;
    std::string cur;
    bool in_quote = false;
    for (char c : inner) {
      if (c == '"') in_quote = !in_quote;
      if (c == ',' && !in_quote) {
        v.items.push_back(parse_scalar(cur, line));
        cur.clear();
      } else {
        cur += c;
      }
    }
    v.items.push_back(parse_scalar(cur, line));
    return v;
  }
  v.items.push_back(parse_scalar(s, line));
  return v;
}

double to_double(const Scalar& s, int line, const std::string& key) {
  if (s.quoted) throw ValidationError(key + ": expected a number", line);
  char* end = nullptr;
  const double v = std::strtod(s.text.c_str(), &end);
  if (end == s.text.c_str() || *end != '\0' || !std::isfinite(v))
    throw ValidationError(key + ": '" + s.text + "' is not a finite number", line);
  return v;
}

long long to_int(const Scalar& s, int line, const std::string& key) {
  if (s.quoted) throw ValidationError(key + ": expected an integer", line);
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(s.text.c_str(), &end, 10);
  if (end == s.text.c_str() || *end != '\0' || errno == ERANGE)
    throw ValidationError(key + ": '" + s.text + "' is not an integer", line);
  return v;
}

int to_int32(const Scalar& s, int line, const std::string& key) {
  const long long v = to_int(s, line, key);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw ValidationError(key + ": integer out of range", line);
  return static_cast<int>(v);
}

const Scalar& single(const Value& v, const std::string& key) {
  if (v.is_array || v.items.size() != 1) throw ValidationError(key + ": expected a single value", v.line);
  return v.items.front();
}

std::vector<double> doubles(const Value& v, const std::string& key) {
  if (!v.is_array) throw ValidationError(key + ": expected an array", v.line);
  std::vector<double> out;
  for (const auto& s : v.items) out.push_back(to_double(s, v.line, key));
  return out;
}

std::vector<int> ints(const Value& v, const std::string& key) {
  if (!v.is_array) throw ValidationError(key + ": expected an array", v.line);
  std::vector<int> out;
  for (const auto& s : v.items) out.push_back(to_int32(s, v.line, key));
  return out;
}

using Setter = std::function<void(RunConfig&, const Value&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"regime",
       [](RunConfig& c, const Value& v) {
         try {
           c.regime = regime_from_string(single(v, "regime").text);
         } catch (const ConfigurationError& e) {
           throw ValidationError(e.what(), v.line);
         }
       }},
      {"N1_list", [](RunConfig& c, const Value& v) { c.N1_list = ints(v, "N1_list"); }},
      {"sigma_target", [](RunConfig& c, const Value& v) { c.sigma_target = to_double(single(v, "sigma_target"), v.line, "sigma_target"); }},
      {"C0", [](RunConfig& c, const Value& v) { c.C0 = to_double(single(v, "C0"), v.line, "C0"); }},
      {"T0", [](RunConfig& c, const Value& v) { c.T0 = to_double(single(v, "T0"), v.line, "T0"); }},
      {"alpha", [](RunConfig& c, const Value& v) { c.alpha = to_double(single(v, "alpha"), v.line, "alpha"); }},
      {"beta", [](RunConfig& c, const Value& v) { c.beta = to_double(single(v, "beta"), v.line, "beta"); }},
      {"gamma", [](RunConfig& c, const Value& v) { c.gamma = to_double(single(v, "gamma"), v.line, "gamma"); }},
      {"rho", [](RunConfig& c, const Value& v) { c.rho = to_double(single(v, "rho"), v.line, "rho"); }},
      {"delta", [](RunConfig& c, const Value& v) { c.delta = to_double(single(v, "delta"), v.line, "delta"); }},
      {"dt_overrides",
       [](RunConfig& c, const Value& v) {
         if (v.is_array)
           c.dt_overrides = doubles(v, "dt_overrides");
         else
           c.dt_overrides = {to_double(single(v, "dt_overrides"), v.line, "dt_overrides")};
       }},
      {"scheme",
       [](RunConfig& c, const Value& v) {
         const std::string s = single(v, "scheme").text;
         if (s == "auto") {
           c.scheme.reset();
           return;
         }
         try {
           c.scheme = scheme_from_string(s);
         } catch (const Error& e) {
           throw ValidationError(e.what(), v.line);
         }
       }},
      {"output_dir", [](RunConfig& c, const Value& v) { c.output_dir = single(v, "output_dir").text; }},
      {"seed",
       [](RunConfig& c, const Value& v) {
         const long long s = to_int(single(v, "seed"), v.line, "seed");
         if (s < 0) throw ValidationError("seed must be nonnegative", v.line);
         c.seed = static_cast<std::uint64_t>(s);
       }},
      {"snapshot_times", [](RunConfig& c, const Value& v) { c.snapshot_times = doubles(v, "snapshot_times"); }},
      {"samples", [](RunConfig& c, const Value& v) { c.samples = to_int32(single(v, "samples"), v.line, "samples"); }},
      {"pde_n1", [](RunConfig& c, const Value& v) { c.pde_n1 = to_int32(single(v, "pde_n1"), v.line, "pde_n1"); }},
      {"pde_n2", [](RunConfig& c, const Value& v) { c.pde_n2 = to_int32(single(v, "pde_n2"), v.line, "pde_n2"); }},
      {"pde_steps_per_unit",
       [](RunConfig& c, const Value& v) {
         c.pde_steps_per_unit = to_int32(single(v, "pde_steps_per_unit"), v.line, "pde_steps_per_unit");
       }},
      {"budget_seconds",
       [](RunConfig& c, const Value& v) {
         c.budget_seconds = to_double(single(v, "budget_seconds"), v.line, "budget_seconds");
       }},
      {"k0", [](RunConfig& c, const Value& v) { c.k0 = ints(v, "k0"); }},
      {"harmonics", [](RunConfig& c, const Value& v) { c.harmonics = to_int32(single(v, "harmonics"), v.line, "harmonics"); }},
      {"harmonic_decay",
       [](RunConfig& c, const Value& v) {
         c.harmonic_decay = to_double(single(v, "harmonic_decay"), v.line, "harmonic_decay");
       }},
      {"nls_dispersion",
       [](RunConfig& c, const Value& v) {
         const std::string s = single(v, "nls_dispersion").text;
         if (s == "lattice")
           c.stated_nls_dispersion = false;
         else if (s == "stated")
           c.stated_nls_dispersion = true;
         else
           throw ValidationError("nls_dispersion: expected lattice or stated", v.line);
       }},
  };
  return table;
}

int line_of(const std::map<std::string, int>& lines, const std::string& key) {
  auto it = lines.find(key);
  return it == lines.end() ? 0 : it->second;
}

void validate_impl(const RunConfig& c, const std::map<std::string, int>& lines) {
  auto fail = [&](const std::string& key, const std::string& msg) { throw ValidationError(msg, line_of(lines, key)); };
  if (c.N1_list.empty()) fail("N1_list", "N1_list must not be empty");
  for (std::size_t i = 0; i < c.N1_list.size(); ++i) {
    if (c.N1_list[i] < 1) fail("N1_list", "N1_list entries must be positive");
    if (i > 0 && c.N1_list[i] <= c.N1_list[i - 1]) fail("N1_list", "N1_list must be strictly ascending");
  }
  if (!(c.C0 > 0.0)) fail("C0", "C0 must be positive");
  if (!(c.T0 > 0.0)) fail("T0", "T0 must be positive");
  if (!(c.rho > 0.0)) fail("rho", "rho must be positive");
  if (!(c.delta > 0.0)) fail("delta", "delta must be positive");
  if (c.samples < 2) fail("samples", "samples must be at least 2");
  if (c.pde_n1 < 4 || c.pde_n2 < 1) fail("pde_n1", "PDE grid too small");
  if (c.pde_steps_per_unit < 1) fail("pde_steps_per_unit", "pde_steps_per_unit must be positive");
  if (c.budget_seconds < 0.0) fail("budget_seconds", "budget_seconds must be nonnegative");
  if (c.harmonics < 1) fail("harmonics", "harmonics must be at least 1");
  if (!(c.harmonic_decay > 0.0)) fail("harmonic_decay", "harmonic_decay must be positive");
  if (c.k0.size() != 2 || c.k0[0] < 0 || c.k0[1] < 0 || (c.k0[0] == 0 && c.k0[1] == 0))
    fail("k0", "k0 must be two nonnegative integers, not both zero");
  for (double f : c.snapshot_times)
    if (!(f >= 0.0 && f <= 1.0)) fail("snapshot_times", "snapshot_times are horizon fractions in [0, 1]");
  if (!c.dt_overrides.empty() && c.dt_overrides.size() != 1 && c.dt_overrides.size() != c.N1_list.size())
    fail("dt_overrides", "dt_overrides needs one value or one per N1");
  for (double d : c.dt_overrides)
    if (!(d > 0.0)) fail("dt_overrides", "dt_overrides must be positive");
  if (c.output_dir.empty()) fail("output_dir", "output_dir must not be empty");

  const Regime r = c.regime;
  if (r == Regime::kp || r == Regime::kdv) {
    if (c.alpha == 0.0) fail("alpha", to_string(r) + " needs alpha != 0");
  }
  if (r == Regime::mkdv && c.beta == 0.0) fail("beta", "mKdV needs beta != 0");
  if (lattice_model(r) == LatticeModel::kg && !(c.beta > 0.0)) fail("beta", to_string(r) + " needs beta > 0");

  if (auto v = regime_window_violation(r, c.sigma_target, c.gamma)) {
    const std::string key = v->find("gamma") != std::string::npos && v->find("sigma") == std::string::npos
                                ? "gamma"
                                : "sigma_target";
    fail(key, to_string(r) + " window: " + *v);
  }
  for (int N1 : c.N1_list) {
    const int N2 = LatticeParams::n2_for_sigma(N1, c.sigma_target);
    const auto p = LatticeParams::make(lattice_model(r), N1, N2, lattice_model(r) == LatticeModel::kg ? 0.0 : c.alpha,
                                       c.beta, true);
    if (auto v = regime_window_violation(r, p.sigma(), c.gamma))
      fail("N1_list", "N1=" + std::to_string(N1) + " realizes sigma=" + fmt17(p.sigma()) + ": " + *v);
    if (c.k0[0] > N1 || c.k0[1] > N2) fail("k0", "k0 outside the lattice for N1=" + std::to_string(N1));
  }
}

std::string quote_if_needed(const std::string& s) {
  for (char ch : s)
    if (std::isspace(static_cast<unsigned char>(ch)) || ch == '#' || ch == ',' || ch == '[' || ch == ']' || ch == '"')
      return "\"" + s + "\"";
  return s.empty() ? "\"\"" : s;
}

template <class T, class F>
std::string array_text(const std::vector<T>& v, F f) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + f(v[i]);
  return s + "]";
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::map<std::string, int> lines;
  bool gamma_set = false;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    const std::string s = trim(strip_comment(raw));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ValidationError("expected 'key = value'", line);
    const std::string key = trim(s.substr(0, eq));
    if (key.empty() || !(std::isalpha(static_cast<unsigned char>(key[0])) || key[0] == '_'))
      throw ValidationError("malformed key '" + key + "'", line);
    for (char ch : key)
      if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_'))
        throw ValidationError("malformed key '" + key + "'", line);
    const auto& table = setters();
    auto it = table.find(key);
    if (it == table.end()) throw ValidationError("unknown key '" + key + "'", line);
    if (lines.count(key)) throw ValidationError("duplicate key '" + key + "'", line);
    lines[key] = line;
    it->second(cfg, parse_value(s.substr(eq + 1), line));
    if (key == "gamma") gamma_set = true;
  }
  for (const char* req : {"regime", "N1_list", "sigma_target"})
    if (!lines.count(req)) throw ValidationError(std::string("missing required key '") + req + "'");
  if (!gamma_set) cfg.gamma = default_gamma(cfg.regime);
  if (lattice_model(cfg.regime) == LatticeModel::kg && !lines.count("alpha")) cfg.alpha = 0.0;
  if (cfg.regime == Regime::mkdv && !lines.count("alpha")) cfg.alpha = 0.0;
  validate_impl(cfg, lines);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

void validate_config(const RunConfig& cfg) { validate_impl(cfg, {}); }

std::string serialize_config(const RunConfig& c) {
  std::ostringstream o;
  auto d = [](double v) { return fmt17(v); };
  auto i = [](int v) { return std::to_string(v); };
  o << "regime = " << to_string(c.regime) << "\n";
  o << "N1_list = " << array_text(c.N1_list, i) << "\n";
  o << "sigma_target = " << d(c.sigma_target) << "\n";
  o << "C0 = " << d(c.C0) << "\n";
  o << "T0 = " << d(c.T0) << "\n";
  o << "alpha = " << d(c.alpha) << "\n";
  o << "beta = " << d(c.beta) << "\n";
  o << "gamma = " << d(c.gamma) << "\n";
  o << "rho = " << d(c.rho) << "\n";
  o << "delta = " << d(c.delta) << "\n";
  o << "dt_overrides = " << array_text(c.dt_overrides, d) << "\n";
  o << "scheme = " << (c.scheme ? to_string(*c.scheme) : std::string("auto")) << "\n";
  o << "output_dir = " << quote_if_needed(c.output_dir) << "\n";
  o << "seed = " << c.seed << "\n";
  o << "snapshot_times = " << array_text(c.snapshot_times, d) << "\n";
  o << "samples = " << c.samples << "\n";
  o << "pde_n1 = " << c.pde_n1 << "\n";
  o << "pde_n2 = " << c.pde_n2 << "\n";
  o << "pde_steps_per_unit = " << c.pde_steps_per_unit << "\n";
  o << "budget_seconds = " << d(c.budget_seconds) << "\n";
  o << "k0 = " << array_text(c.k0, i) << "\n";
  o << "harmonics = " << c.harmonics << "\n";
  o << "harmonic_decay = " << d(c.harmonic_decay) << "\n";
  o << "nls_dispersion = " << (c.stated_nls_dispersion ? "stated" : "lattice") << "\n";
  return o.str();
}

LatticeParams lattice_params_for(const RunConfig& cfg, int N1) {
  const LatticeModel m = lattice_model(cfg.regime);
  const int N2 = LatticeParams::n2_for_sigma(N1, cfg.sigma_target);
  return LatticeParams::make(m, N1, N2, m == LatticeModel::kg ? 0.0 : cfg.alpha, cfg.beta);
}

ComparisonOptions comparison_options_for(const RunConfig& cfg, std::size_t run_index) {
  ComparisonOptions o;
  o.C0 = cfg.C0;
  o.T0 = cfg.T0;
  o.samples = cfg.samples;
  o.snapshot_fractions = cfg.snapshot_times;
  o.pde_grid = {cfg.pde_n1, cfg.pde_n2};
  o.pde_steps_per_unit = cfg.pde_steps_per_unit;
  if (cfg.dt_overrides.size() == 1) o.dt = cfg.dt_overrides.front();
  if (cfg.dt_overrides.size() > 1) o.dt = cfg.dt_overrides.at(run_index);
  o.scheme = cfg.scheme;
  o.budget_seconds = cfg.budget_seconds;
  o.k0 = {cfg.k0.at(0), cfg.k0.at(1)};
  o.harmonics = cfg.harmonics;
  o.harmonic_decay = cfg.harmonic_decay;
  o.stated_nls_dispersion = cfg.stated_nls_dispersion;
  return o;
}

// ---- checks ----

std::vector<CheckResult> report_checks(const ErrorReport& r) {
  std::vector<CheckResult> out;
  out.push_back({"energy_drift", r.energy_drift, 1e-8, r.energy_drift <= 1e-8});
  out.push_back({"rho_positive", r.rho_fit, 0.0, r.rho_fit > 0.0});
  out.push_back({"fit_residual", r.fit_residual, 0.10, r.rho_fit > 0.0 && r.fit_residual < 0.10});
  double worst = 0.0;
  for (double f : r.high_mode_fraction) worst = std::max(worst, f);
  out.push_back({"high_mode_fraction", worst, 0.05, !r.high_mode_fraction.empty() && worst < 0.05});
  return out;
}

std::vector<CheckResult> scan_checks(const std::vector<ErrorReport>& scan, double gamma_target) {
  std::vector<CheckResult> out;
  if (scan.size() < 2) return out;
  const LineFit f = fit_gamma(scan);
  out.push_back({"gamma_fit", f.slope, gamma_target - 0.15, f.slope >= gamma_target - 0.15});
  return out;
}

// ---- JSON ----

std::string report_to_json(const ErrorReport& r, const std::vector<CheckResult>& checks) {
  json j;
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  j["regime"] = r.regime;
  j["status"] = r.status;
  j["N1"] = r.N1;
  j["N2"] = r.N2;
  j["mu"] = num(r.mu);
  j["sigma"] = num(r.sigma);
  j["p"] = r.p;
  j["alpha"] = num(r.alpha);
  j["beta"] = num(r.beta);
  j["C0"] = num(r.C0);
  j["T0"] = num(r.T0);
  j["dt"] = num(r.dt);
  j["scheme"] = r.scheme;
  j["gamma_target"] = num(r.gamma_target);
  j["gamma_fit"] = num(r.gamma_fit);
  j["rho_fit"] = num(r.rho_fit);
  j["c1_fit"] = num(r.c1_fit);
  j["c2_fit"] = num(r.c2_fit);
  j["fit_residual"] = num(r.fit_residual);
  j["bound_ratio"] = num(r.bound_ratio);
  j["energy_drift"] = num(r.energy_drift);
  j["high_mode_scaled"] = num(r.high_mode_scaled);
  j["times"] = r.times;
  j["sup_error"] = r.sup_error;
  j["max_mode_gap"] = r.max_mode_gap;
  j["high_mode_fraction"] = r.high_mode_fraction;
  json spectra = json::array();
  const double s1 = r.N1 + 0.5, s2 = r.N2 + 0.5;
  for (const auto& s : r.spectra) {
    json k1 = json::array(), k2 = json::array(), E = json::array();
    for (int a = 0; a <= r.N1; ++a)
      for (int b = 0; b <= r.N2; ++b) {
        k1.push_back(a / s1);
        k2.push_back(b / s2);
        E.push_back(s.folded.at(static_cast<std::size_t>(a) * (r.N2 + 1) + b));
      }
    spectra.push_back({{"t", s.t}, {"kappa1", k1}, {"kappa2", k2}, {"E", E}});
  }
  j["spectra"] = spectra;
  json gaps = json::array();
  for (const auto& g : r.per_mode_gap) gaps.push_back({{"k1", g.k1}, {"k2", g.k2}, {"gap", g.gap}});
  j["per_mode_gap"] = gaps;
  json cj = json::array();
  for (const auto& c : checks)
    cj.push_back({{"name", c.name}, {"value", num(c.value)}, {"threshold", c.threshold}, {"pass", c.pass}});
  j["checks"] = cj;
  return j.dump(1) + "\n";
}

ErrorReport report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("report is not valid JSON: ") + e.what());
  }
  auto num = [&](const char* k) {
    const auto& v = j.at(k);
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  ErrorReport r;
  try {
    r.regime = j.at("regime").get<std::string>();
    r.status = j.value("status", std::string("complete"));
    r.N1 = j.at("N1").get<int>();
    r.N2 = j.at("N2").get<int>();
    r.mu = num("mu");
    r.sigma = num("sigma");
    r.p = j.at("p").get<int>();
    r.alpha = num("alpha");
    r.beta = num("beta");
    r.C0 = num("C0");
    r.T0 = num("T0");
    r.dt = num("dt");
    r.scheme = j.at("scheme").get<std::string>();
    r.gamma_target = num("gamma_target");
    r.gamma_fit = num("gamma_fit");
    r.rho_fit = num("rho_fit");
    r.c1_fit = num("c1_fit");
    r.c2_fit = num("c2_fit");
    r.fit_residual = num("fit_residual");
    r.bound_ratio = num("bound_ratio");
    r.energy_drift = num("energy_drift");
    r.high_mode_scaled = num("high_mode_scaled");
    r.times = j.at("times").get<std::vector<double>>();
    r.sup_error = j.at("sup_error").get<std::vector<double>>();
    r.max_mode_gap = j.at("max_mode_gap").get<std::vector<double>>();
    r.high_mode_fraction = j.at("high_mode_fraction").get<std::vector<double>>();
    const std::size_t n = static_cast<std::size_t>(r.N1 + 1) * (r.N2 + 1);
    for (const auto& s : j.at("spectra")) {
      SpectrumSnapshot snap;
      snap.t = s.at("t").get<double>();
      snap.folded = s.at("E").get<std::vector<double>>();
      if (snap.folded.size() != n) throw IoError("spectrum size does not match N1, N2");
      r.spectra.push_back(std::move(snap));
    }
    for (const auto& g : j.at("per_mode_gap"))
      r.per_mode_gap.push_back({g.at("k1").get<int>(), g.at("k2").get<int>(), g.at("gap").get<double>()});
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed report: ") + e.what());
  }
  return r;
}

ErrorReport load_report(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read report " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return report_from_json(ss.str());
}

std::string aggregate_csv(const std::vector<ErrorReport>& scan, bool with_runtime) {
  std::ostringstream o;
  o << "mu,sigma,gamma_fit,rho_fit,max_sup_error" << (with_runtime ? ",runtime_s" : "") << "\n";
  for (const auto& r : scan) {
    o << fmt17(r.mu) << ',' << fmt17(r.sigma) << ',' << fmt17(r.gamma_fit) << ',' << fmt17(r.rho_fit) << ','
      << fmt17(r.max_sup_error());
    if (with_runtime) o << ',' << fmt17(r.runtime_s);
    o << "\n";
  }
  return o.str();
}

std::string emit_spectrum_table(const ErrorReport& r, double t) {
  const SpectrumSnapshot* s = r.snapshot_at(t);
  if (!s) throw ConfigurationError("no spectrum snapshot at t=" + fmt17(t));
  LocalizationFit f;
  f.rho = r.rho_fit;
  f.c1 = r.c1_fit;
  f.c2 = r.c2_fit;
  const double gamma = std::isfinite(r.gamma_target) ? r.gamma_target : 0.0;
  std::ostringstream o;
  o << "kappa1,kappa2,E_kappa,bound_value\n";
  const double s1 = r.N1 + 0.5, s2 = r.N2 + 0.5;
  for (int a = 0; a <= r.N1; ++a)
    for (int b = 0; b <= r.N2; ++b) {
      const double E = s->folded.at(static_cast<std::size_t>(a) * (r.N2 + 1) + b);
      const double bound = localization_bound(f, std::hypot(a, b), r.mu, r.p, gamma);
      o << fmt17(a / s1) << ',' << fmt17(b / s2) << ',' << fmt17(E) << ',' << fmt17(bound) << "\n";
    }
  return o.str();
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw IoError("SHA-256 computation failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

int worker_count() {
  if (const char* env = std::getenv("METASTAB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(std::min(v, 1024L));
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + p.string());
  f << content;
  if (!f) throw IoError("write failed for " + p.string());
}

struct RunSlot {
  ErrorReport report;
  int code = exit_ok;
  std::string diagnostic;
};

}  // namespace

ExperimentOutcome run_experiment(const RunConfig& cfg, int workers) {
  validate_config(cfg);
  namespace fs = std::filesystem;
  const fs::path dir(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("output_dir is not writable: " + cfg.output_dir);

  const std::size_t n = cfg.N1_list.size();
  std::vector<RunSlot> slots(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      RunSlot& s = slots[i];
      const int N1 = cfg.N1_list[i];
      try {
        const auto params = lattice_params_for(cfg, N1);
        RegimeSpec spec{cfg.regime, cfg.gamma, cfg.rho, cfg.delta};
        s.report = run_comparison(spec, params, comparison_options_for(cfg, i));
        if (s.report.status == "aborted") {
          s.code = exit_budget;
          s.diagnostic = "N1=" + std::to_string(N1) + ": projected wall time exceeds budget_seconds";
        }
      } catch (const Error& e) {
        const ErrorKind k = e.kind();
        s.code = (k == ErrorKind::numerical || k == ErrorKind::stability) ? exit_numerical
                 : k == ErrorKind::budget                                  ? exit_budget
                                                                           : exit_validation;
        s.diagnostic = "N1=" + std::to_string(N1) + ": " + e.what();
        s.report.regime = to_string(cfg.regime);
        s.report.status = "failed";
        s.report.N1 = N1;
      }
    }
  };
  const int w = std::max(1, std::min<int>(workers > 0 ? workers : worker_count(), static_cast<int>(n)));
  std::vector<std::thread> pool;
  for (int t = 1; t < w; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  ExperimentOutcome out;
  for (auto& s : slots) {
    out.reports.push_back(s.report);
    if (!s.diagnostic.empty()) out.diagnostics.push_back(s.diagnostic);
  }
  int worst = exit_ok;
  for (const auto& s : slots) worst = std::max(worst, s.code);

  // gamma fit over the completed runs.
  std::vector<ErrorReport> complete;
  for (const auto& r : out.reports)
    if (r.status == "complete") complete.push_back(r);
  const auto sc = scan_checks(complete, cfg.gamma);
  double gamma_fit = std::numeric_limits<double>::quiet_NaN();
  if (complete.size() >= 2) gamma_fit = fit_gamma(complete).slope;
  for (auto& r : out.reports) r.gamma_fit = gamma_fit;

  bool checks_ok = true;
  std::vector<std::pair<std::string, std::string>> files;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = out.reports[i];
    std::vector<CheckResult> checks;
    if (r.status == "complete") checks = report_checks(r);
    for (const auto& c : checks)
      if (!c.pass) {
        checks_ok = false;
        out.diagnostics.push_back("N1=" + std::to_string(r.N1) + ": check " + c.name + " failed (" + fmt17(c.value) +
                                  " vs " + fmt17(c.threshold) + ")");
      }
    const std::string name = "report_N1_" + std::to_string(cfg.N1_list[i]) + ".json";
    const std::string body = report_to_json(r, checks);
    write_file(dir / name, body);
    files.push_back({name, sha256_hex(body)});
  }
  for (const auto& c : sc)
    if (!c.pass) {
      checks_ok = false;
      out.diagnostics.push_back("check " + c.name + " failed (" + fmt17(c.value) + " vs " + fmt17(c.threshold) + ")");
    }

  write_file(dir / "aggregate.csv", aggregate_csv(out.reports, true));
  const std::string agg_stable = aggregate_csv(out.reports, false);

  json summary;
  summary["regime"] = to_string(cfg.regime);
  summary["gamma_target"] = cfg.gamma;
  summary["gamma_fit"] = std::isfinite(gamma_fit) ? json(gamma_fit) : json(nullptr);
  json sj = json::array();
  for (const auto& c : sc) sj.push_back({{"name", c.name}, {"value", c.value}, {"threshold", c.threshold}, {"pass", c.pass}});
  summary["checks"] = sj;
  summary["diagnostics"] = out.diagnostics;
  const std::string summary_text = summary.dump(1) + "\n";
  write_file(dir / "summary.json", summary_text);
  files.push_back({"summary.json", sha256_hex(summary_text)});

  if (worst == exit_ok && !checks_ok) worst = exit_validation;
  out.exit_code = worst;

  const std::string cfg_text = serialize_config(cfg);
  std::ostringstream m;
  m << "metastab " << kVersion << "\n";
  m << "config_sha256 " << sha256_hex(cfg_text) << "\n";
  m << "seed " << cfg.seed << "\n";
  m << "exit_code " << out.exit_code << "\n";
  for (const auto& [name, digest] : files) m << "file " << name << " sha256 " << digest << "\n";
  m << "file aggregate.csv sha256 " << sha256_hex(agg_stable) << " excluding runtime_s\n";
  std::string manifest = m.str();
  manifest += "manifest_sha256 " + sha256_hex(manifest) + "\n";
  write_file(dir / "MANIFEST", manifest);
  out.manifest = manifest;
  return out;
}

}  // namespace metastab
