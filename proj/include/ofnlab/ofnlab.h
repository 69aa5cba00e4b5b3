/* C interface to the ofnlab library. Every function returns an ofn_status;
 * on failure ofn_last_error() describes the problem for the calling thread. */
#ifndef OFNLAB_H
#define OFNLAB_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define OFN_API __declspec(dllexport)
#else
#define OFN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ofn_status {
  OFN_OK = 0,
  OFN_ERR_INVALID_ARGUMENT = 1,
  OFN_ERR_CONFIG = 2,
  OFN_ERR_IO = 3,
  OFN_ERR_RUNTIME = 4,
  OFN_ERR_SELFTEST = 5
} ofn_status;

typedef struct ofn_config ofn_config;

typedef struct ofn_run_summary {
  uint64_t env_steps;
  uint64_t grad_steps;
  uint64_t divergence_errors;
  size_t n_records;
  int has_final_return;
  double final_return;
  int has_priming_boundary;
  uint64_t priming_env_step;
  uint64_t priming_grad_step;
} ofn_run_summary;

OFN_API const char* ofn_version(void);
OFN_API const char* ofn_last_error(void);
OFN_API const char* ofn_status_string(ofn_status status);

OFN_API ofn_status ofn_config_new(ofn_config** out);
OFN_API ofn_status ofn_config_load(const char* path, ofn_config** out);
/* key is "section.key", e.g. "experiment.seed". */
OFN_API ofn_status ofn_config_set(ofn_config* config, const char* key, const char* value);
/* Copies the value with a terminating NUL when it fits; *needed gets the
 * buffer size required. */
OFN_API ofn_status ofn_config_get(const ofn_config* config, const char* key, char* buffer,
                                  size_t capacity, size_t* needed);
OFN_API ofn_status ofn_config_save(const ofn_config* config, const char* path);
OFN_API ofn_status ofn_config_validate(const ofn_config* config);
OFN_API void ofn_config_free(ofn_config* config);

/* Runs the configured experiment (train or prime). summary may be NULL. */
OFN_API ofn_status ofn_run(const ofn_config* config, ofn_run_summary* summary);

OFN_API ofn_status ofn_aggregate(const char* const* run_dirs, size_t n_dirs, size_t n_bootstrap,
                                 uint64_t bootstrap_seed, const char* report_path,
                                 size_t* n_excluded);
OFN_API ofn_status ofn_export_plot_data(const char* const* run_dirs, size_t n_dirs,
                                        const char* csv_path, size_t* n_rows);

/* Prints one line per check to stdout; *n_failed may be NULL. */
OFN_API ofn_status ofn_selftest(int* n_failed);

#ifdef __cplusplus
}
#endif

#endif
