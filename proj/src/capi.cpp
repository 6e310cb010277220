#include "metastab/metastab.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "metastab/error.hpp"
#include "metastab/experiment.hpp"

using namespace metastab;

struct metastab_config {
  RunConfig cfg;
};
struct metastab_report {
  ErrorReport report;
};
struct metastab_lattice {
  LatticeParams params;
  LatticeState state;
};

namespace {

thread_local std::string g_last_error;

int fail(int code, const std::string& msg) {
  g_last_error = msg;
  return code;
}

int status_of(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::validation: return METASTAB_ERR_VALIDATION;
    case ErrorKind::numerical:
    case ErrorKind::stability: return METASTAB_ERR_NUMERICAL;
    case ErrorKind::budget: return METASTAB_ERR_BUDGET;
    case ErrorKind::io: return METASTAB_ERR_IO;
    case ErrorKind::constraint: return METASTAB_ERR_CONSTRAINT;
    case ErrorKind::configuration: return METASTAB_ERR_ARGUMENT;
  }
  return METASTAB_ERR_INTERNAL;
}

template <class F>
int guarded(F&& f) {
  try {
    g_last_error.clear();
    return f();
  } catch (const Error& e) {
    return fail(status_of(e), e.what());
  } catch (const std::bad_alloc&) {
    return fail(METASTAB_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(METASTAB_ERR_INTERNAL, e.what());
  }
}

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

}  // namespace

extern "C" {

const char* metastab_version(void) { return kVersion; }
const char* metastab_last_error(void) { return g_last_error.c_str(); }
void metastab_string_free(char* s) { std::free(s); }

int metastab_config_parse(const char* text, metastab_config** out) {
  if (!text || !out) return fail(METASTAB_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    *out = new metastab_config{parse_config(text)};
    return METASTAB_OK;
  });
}

int metastab_config_load(const char* path, metastab_config** out) {
  if (!path || !out) return fail(METASTAB_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    *out = new metastab_config{load_config(path)};
    return METASTAB_OK;
  });
}

int metastab_config_serialize(const metastab_config* cfg, char** out) {
  if (!cfg || !out) return fail(METASTAB_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    *out = dup(serialize_config(cfg->cfg));
    return METASTAB_OK;
  });
}

int metastab_config_set_output_dir(metastab_config* cfg, const char* dir) {
  if (!cfg || !dir || !*dir) return fail(METASTAB_ERR_ARGUMENT, "null or empty argument");
  return guarded([&] {
    cfg->cfg.output_dir = dir;
    return METASTAB_OK;
  });
}

void metastab_config_free(metastab_config* cfg) { delete cfg; }

int metastab_run(const metastab_config* cfg, int workers, int* exit_code, char** diagnostics) {
  if (!cfg || !exit_code) return fail(METASTAB_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    const auto outcome = run_experiment(cfg->cfg, workers);
    *exit_code = outcome.exit_code;
    if (diagnostics) {
      std::string d;
      for (const auto& s : outcome.diagnostics) d += s + "\n";
      *diagnostics = dup(d);
    }
    return METASTAB_OK;
  });
}

int metastab_report_load(const char* path, metastab_report** out) {
  if (!path || !out) return fail(METASTAB_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    *out = new metastab_report{load_report(path)};
    return METASTAB_OK;
  });
}

void metastab_report_free(metastab_report* r) { delete r; }

int metastab_report_scalar(const metastab_report* r, const char* name, double* out) {
  if (!r || !name || !out) return fail(METASTAB_ERR_ARGUMENT, "null argument");
  const ErrorReport& e = r->report;
  const std::string n = name;
  if (n == "mu") *out = e.mu;
  else if (n == "sigma") *out = e.sigma;
  else if (n == "gamma_fit") *out = e.gamma_fit;
  else if (n == "rho_fit") *out = e.rho_fit;
  else if (n == "c1_fit") *out = e.c1_fit;
  else if (n == "c2_fit") *out = e.c2_fit;
  else if (n == "fit_residual") *out = e.fit_residual;
  else if (n == "energy_drift") *out = e.energy_drift;
  else if (n == "max_sup_error") *out = e.max_sup_error();
  else if (n == "N1") *out = e.N1;
  else if (n == "N2") *out = e.N2;
  else return fail(METASTAB_ERR_ARGUMENT, "unknown report field '" + n + "'");
  return METASTAB_OK;
}

int metastab_spectrum_table(const metastab_report* r, double t, char** csv) {
  if (!r || !csv) return fail(METASTAB_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    *csv = dup(emit_spectrum_table(r->report, t));
    return METASTAB_OK;
  });
}

int metastab_lattice_create(metastab_model model, int N1, int N2, double alpha, double beta, metastab_lattice** out) {
  if (!out) return fail(METASTAB_ERR_ARGUMENT, "null argument");
  if (model != METASTAB_ETL && model != METASTAB_KG) return fail(METASTAB_ERR_ARGUMENT, "unknown model");
  return guarded([&] {
    const auto p = LatticeParams::make(model == METASTAB_ETL ? LatticeModel::etl : LatticeModel::kg, N1, N2, alpha,
                                       beta, true);
    *out = new metastab_lattice{p, LatticeState::zero(p)};
    return METASTAB_OK;
  });
}

void metastab_lattice_free(metastab_lattice* lat) { delete lat; }

int metastab_lattice_single_mode(metastab_lattice* lat, int k1, int k2, double C0, double phase) {
  if (!lat) return fail(METASTAB_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    lat->state = single_mode_data(lat->params, {k1, k2}, C0, phase);
    return METASTAB_OK;
  });
}

int metastab_lattice_advance(metastab_lattice* lat, double dt, long long steps, const char* scheme) {
  if (!lat) return fail(METASTAB_ERR_ARGUMENT, "null argument");
  if (steps < 0) return fail(METASTAB_ERR_ARGUMENT, "negative step count");
  return guarded([&] {
    const Scheme s = scheme ? scheme_from_string(scheme) : default_scheme(lat->params);
    LatticeIntegrator integ(lat->params, s);
    integ.advance(lat->state, dt, steps);
    check_finite(lat->state);
    return METASTAB_OK;
  });
}

int metastab_lattice_energy(const metastab_lattice* lat, double* out) {
  if (!lat || !out) return fail(METASTAB_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    *out = total_energy(lat->state, lat->params);
    return METASTAB_OK;
  });
}

int metastab_lattice_time(const metastab_lattice* lat, double* out) {
  if (!lat || !out) return fail(METASTAB_ERR_ARGUMENT, "null argument");
  *out = lat->state.t;
  return METASTAB_OK;
}

int metastab_lattice_mode_energy(const metastab_lattice* lat, int k1, int k2, double* out) {
  if (!lat || !out) return fail(METASTAB_ERR_ARGUMENT, "null argument");
  if (k1 < 0 || k2 < 0 || k1 > lat->params.N1 || k2 > lat->params.N2)
    return fail(METASTAB_ERR_ARGUMENT, "mode index out of range");
  return guarded([&] {
    *out = mode_energies(lat->state, lat->params).folded(k1, k2);
    return METASTAB_OK;
  });
}

int metastab_lattice_get(const metastab_lattice* lat, double* Q, double* P, size_t count) {
  if (!lat || !Q || !P) return fail(METASTAB_ERR_ARGUMENT, "null argument");
  if (count != lat->params.sites()) return fail(METASTAB_ERR_ARGUMENT, "count does not match the site count");
  std::memcpy(Q, lat->state.Q.data(), count * sizeof(double));
  std::memcpy(P, lat->state.P.data(), count * sizeof(double));
  return METASTAB_OK;
}

}  // extern "C"
