/* Exercises the shared library through its C header only. */

#include "repsample/repsample.h"

#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

static int failures = 0;

#define EXPECT(cond)                                                        \
    do {                                                                    \
        if (!(cond)) {                                                      \
            fprintf(stderr, "%s:%d: expected %s (%s)\n", __FILE__, __LINE__, \
                    #cond, rps_last_error());                               \
            ++failures;                                                     \
        }                                                                   \
    } while (0)

static const char *kConfig =
    "{\"seed\": 2, \"target\": {\"kind\": \"ggx\", \"roughness\": 0.3},"
    " \"sampler\": {\"steps\": 5, \"batch_conditions\": 2, \"batch_z\": 32},"
    " \"pdf\": {\"steps\": 5, \"batch_z\": 32}}";

int main(int argc, char **argv) {
    const char *dir = argc > 1 ? argv[1] : "capi_out";
    char path[1024];

    EXPECT(strlen(rps_version()) > 0);
    EXPECT(strcmp(rps_status_name(RPS_CONFIG), "config error") == 0);

    rps_config *cfg = NULL;
    EXPECT(rps_config_parse("{\"target\": {\"kind\": \"ggx\"}, \"bogus\": 1}", NULL, &cfg) == RPS_CONFIG);
    EXPECT(cfg == NULL);
    EXPECT(strstr(rps_last_error(), "bogus") != NULL);
    EXPECT(rps_config_load("/nonexistent.json", &cfg) == RPS_IO);
    EXPECT(rps_config_parse(NULL, NULL, &cfg) == RPS_INVALID_ARGUMENT);

    EXPECT(rps_config_parse(kConfig, NULL, &cfg) == RPS_OK);
    uint64_t seed = 0;
    EXPECT(rps_config_seed(cfg, &seed) == RPS_OK && seed == 2);
    EXPECT(rps_config_set_seed(cfg, 9) == RPS_OK);
    EXPECT(rps_config_seed(cfg, &seed) == RPS_OK && seed == 9);

    rps_sampler *s = NULL;
    EXPECT(rps_sampler_train(cfg, &s) == RPS_OK);
    size_t dim = 0;
    int cond = 0;
    EXPECT(rps_sampler_dim(s, &dim) == RPS_OK && dim == 2);
    EXPECT(rps_sampler_is_conditional(s, &cond) == RPS_OK && cond == 1);

    const double z[2] = {0.3, -0.4}, omega[2] = {0.2, 0.1};
    double u[2], det = 0.0;
    EXPECT(rps_sampler_transform(s, z, omega, u, &det) == RPS_OK);
    EXPECT(u[0] * u[0] + u[1] * u[1] < 1.0);
    EXPECT(isfinite(det));
    EXPECT(rps_sampler_transform(s, z, NULL, u, &det) == RPS_INVALID_ARGUMENT);

    snprintf(path, sizeof path, "%s_sampler.json", dir);
    EXPECT(rps_sampler_save(s, path) == RPS_OK);
    rps_sampler *s2 = NULL;
    EXPECT(rps_sampler_load(path, &s2) == RPS_OK);
    double u2[2], det2 = 0.0;
    EXPECT(rps_sampler_transform(s2, z, omega, u2, &det2) == RPS_OK);
    EXPECT(u2[0] == u[0] && u2[1] == u[1] && det2 == det);

    rps_pdf *p = NULL;
    double value = 0.0;
    EXPECT(rps_pdf_train(cfg, s, &p) == RPS_OK);
    EXPECT(rps_pdf_eval(p, u, omega, &value) == RPS_OK && value > 0.0);
    const double outside[2] = {0.9, 0.9};
    EXPECT(rps_pdf_eval(p, outside, omega, &value) == RPS_DOMAIN);

    char *report = NULL;
    EXPECT(rps_cmd_sample(path, omega, 5, 3, dir, &report) == RPS_OK);
    EXPECT(report != NULL && strstr(report, "\"samples\": 5") != NULL);
    rps_string_free(report);
    EXPECT(rps_cmd_sample("/nonexistent/sampler.json", omega, 5, 3, dir, NULL) == RPS_IO);
    EXPECT(rps_sampler_load(NULL, &s2) == RPS_INVALID_ARGUMENT);

    rps_pdf_free(p);
    rps_sampler_free(s2);
    rps_sampler_free(s);
    rps_config_free(cfg);
    rps_sampler_free(NULL);

    if (failures) {
        fprintf(stderr, "%d failure(s)\n", failures);
        return 1;
    }
    printf("capi: ok\n");
    return 0;
}
