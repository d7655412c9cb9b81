#ifndef REPSAMPLE_H
#define REPSAMPLE_H

/* C interface to the repsample library. All functions return an rps_status;
 * on failure rps_last_error() describes the problem for the calling thread.
 * Strings returned through char** are owned by the caller and released with
 * rps_string_free. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define RPS_API __declspec(dllexport)
#else
#define RPS_API __attribute__((visibility("default")))
#endif

typedef enum rps_status {
    RPS_OK = 0,
    RPS_INVALID_ARGUMENT = 1,
    RPS_CONFIG = 2,
    RPS_IO = 3,
    RPS_DOMAIN = 4,
    RPS_NUMERIC = 5,
    RPS_DIVERGED = 6,
    RPS_INTERNAL = 7
} rps_status;

typedef struct rps_config rps_config;
typedef struct rps_sampler rps_sampler;
typedef struct rps_pdf rps_pdf;

RPS_API const char *rps_version(void);
RPS_API const char *rps_status_name(rps_status status);
/* Message of the last failure on this thread; "" if none. */
RPS_API const char *rps_last_error(void);
RPS_API void rps_string_free(char *s);

/* ------------------------------------------------------------ config */

RPS_API rps_status rps_config_load(const char *path, rps_config **out);
/* base_dir resolves relative file paths in the document; NULL means ".". */
RPS_API rps_status rps_config_parse(const char *json_text, const char *base_dir, rps_config **out);
RPS_API rps_status rps_config_set_seed(rps_config *config, uint64_t seed);
RPS_API rps_status rps_config_seed(const rps_config *config, uint64_t *seed);
/* Borrowed pointer, valid while the config lives. */
RPS_API rps_status rps_config_output_dir(const rps_config *config, const char **dir);
RPS_API void rps_config_free(rps_config *config);

/* ----------------------------------------------------------- sampler */

RPS_API rps_status rps_sampler_train(const rps_config *config, rps_sampler **out);
RPS_API rps_status rps_sampler_load(const char *path, rps_sampler **out);
RPS_API rps_status rps_sampler_save(const rps_sampler *sampler, const char *path);
RPS_API void rps_sampler_free(rps_sampler *sampler);
RPS_API rps_status rps_sampler_dim(const rps_sampler *sampler, size_t *dim);
RPS_API rps_status rps_sampler_is_conditional(const rps_sampler *sampler, int *conditional);
/* z and u hold dim values; omega_o holds 2 values or is NULL for an
 * unconditional sampler. det_j is signed. */
RPS_API rps_status rps_sampler_transform(const rps_sampler *sampler, const double *z, const double *omega_o,
                                         double *u, double *det_j);

/* --------------------------------------------------------------- pdf */

RPS_API rps_status rps_pdf_train(const rps_config *config, const rps_sampler *sampler, rps_pdf **out);
RPS_API rps_status rps_pdf_load(const char *path, rps_pdf **out);
RPS_API rps_status rps_pdf_save(const rps_pdf *pdf, const char *path);
RPS_API void rps_pdf_free(rps_pdf *pdf);
RPS_API rps_status rps_pdf_eval(const rps_pdf *pdf, const double *u, const double *omega_o, double *value);

/* ---------------------------------------------------------- commands */
/* Each command writes its artifacts into out_dir (NULL: the config's output
 * directory) and returns a JSON report through report (may be NULL). */

RPS_API rps_status rps_cmd_train_sampler(const rps_config *config, const char *out_dir, char **report);
RPS_API rps_status rps_cmd_train_pdf(const rps_config *config, const char *sampler_path, const char *out_dir,
                                     char **report);
/* omega_o may be NULL for unconditional samplers; out_dir NULL means ".". */
RPS_API rps_status rps_cmd_sample(const char *sampler_path, const double *omega_o, uint64_t n, uint64_t seed,
                                  const char *out_dir, char **report);
/* pdf_path may be NULL. */
RPS_API rps_status rps_cmd_evaluate(const rps_config *config, const char *sampler_path, const char *pdf_path,
                                    const char *out_dir, char **report);
RPS_API rps_status rps_cmd_converge(const rps_config *config, const char *sampler_path, const char *pdf_path,
                                    const char *out_dir, char **report);

#ifdef __cplusplus
}
#endif

#endif
