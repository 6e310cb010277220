/* C interface to the metastab library. All functions return a status code;
 * on failure metastab_last_error() describes the problem (per thread).
 * Strings returned through char** are owned by the caller and released with
 * metastab_string_free. */
#ifndef METASTAB_H
#define METASTAB_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(METASTAB_BUILDING)
#define METASTAB_API __attribute__((visibility("default")))
#else
#define METASTAB_API
#endif

typedef enum metastab_status {
  METASTAB_OK = 0,
  METASTAB_ERR_VALIDATION = 1, /* config rejected, or a result check failed */
  METASTAB_ERR_NUMERICAL = 2,
  METASTAB_ERR_BUDGET = 3,
  METASTAB_ERR_IO = 4,
  METASTAB_ERR_ARGUMENT = 5,
  METASTAB_ERR_CONSTRAINT = 6,
  METASTAB_ERR_INTERNAL = 7
} metastab_status;

typedef struct metastab_config metastab_config;
typedef struct metastab_report metastab_report;
typedef struct metastab_lattice metastab_lattice;

typedef enum metastab_model { METASTAB_ETL = 0, METASTAB_KG = 1 } metastab_model;

METASTAB_API const char* metastab_version(void);
METASTAB_API const char* metastab_last_error(void);
METASTAB_API void metastab_string_free(char* s);

/* ---- run configurations ---- */
METASTAB_API int metastab_config_parse(const char* text, metastab_config** out);
METASTAB_API int metastab_config_load(const char* path, metastab_config** out);
METASTAB_API int metastab_config_serialize(const metastab_config* cfg, char** out);
METASTAB_API int metastab_config_set_output_dir(metastab_config* cfg, const char* dir);
METASTAB_API void metastab_config_free(metastab_config* cfg);

/* Runs the scan and writes its artifacts. *exit_code receives 0, 1, 2 or 3;
 * the return value reports failures that prevented the run from finishing
 * (unwritable output, invalid config). workers <= 0 uses METASTAB_THREADS or
 * the hardware concurrency. */
METASTAB_API int metastab_run(const metastab_config* cfg, int workers, int* exit_code, char** diagnostics);

/* ---- reports ---- */
METASTAB_API int metastab_report_load(const char* path, metastab_report** out);
METASTAB_API void metastab_report_free(metastab_report* r);
METASTAB_API int metastab_report_scalar(const metastab_report* r, const char* name, double* out);
/* CSV kappa1,kappa2,E_kappa,bound_value for the snapshot at time t. */
METASTAB_API int metastab_spectrum_table(const metastab_report* r, double t, char** csv);

/* ---- lattices ---- */
METASTAB_API int metastab_lattice_create(metastab_model model, int N1, int N2, double alpha, double beta,
                                         metastab_lattice** out);
METASTAB_API void metastab_lattice_free(metastab_lattice* lat);
/* Single-mode data on the orbit of (k1, k2) with folded specific energy C0 mu^4 (ETL) or C0 mu^2 (KG). */
METASTAB_API int metastab_lattice_single_mode(metastab_lattice* lat, int k1, int k2, double C0, double phase);
/* Advances by steps steps of size dt; scheme is "leapfrog", "suzuki4", "kahan_li6" or NULL for the default. */
METASTAB_API int metastab_lattice_advance(metastab_lattice* lat, double dt, long long steps, const char* scheme);
METASTAB_API int metastab_lattice_energy(const metastab_lattice* lat, double* out);
METASTAB_API int metastab_lattice_time(const metastab_lattice* lat, double* out);
/* Folded specific energy of mode (k1, k2), k >= 0. */
METASTAB_API int metastab_lattice_mode_energy(const metastab_lattice* lat, int k1, int k2, double* out);
/* Copies Q and P (row-major (2N1+1) x (2N2+1), site j at slot j mod (2N+1)); count must equal the site count. */
METASTAB_API int metastab_lattice_get(const metastab_lattice* lat, double* Q, double* P, size_t count);

#ifdef __cplusplus
}
#endif

#endif
