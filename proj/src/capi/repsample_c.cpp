#include "repsample/repsample.h"

#include "config.hpp"
#include "error.hpp"
#include "model_io.hpp"
#include "pipeline.hpp"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>

using namespace repsample;

struct rps_config {
    ExperimentConfig cfg;
};
struct rps_sampler {
    SamplerFile file;
};
struct rps_pdf {
    PdfFile file;
};

namespace {

thread_local std::string g_last_error;

rps_status fail(rps_status s, const char *msg) {
    g_last_error = msg;
    return s;
}

template <class F> rps_status guard(F &&f) {
    try {
        g_last_error.clear();
        f();
        return RPS_OK;
    } catch (const Error &e) {
        return fail(static_cast<rps_status>(e.status()), e.what());
    } catch (const std::bad_alloc &) {
        return fail(RPS_INTERNAL, "out of memory");
    } catch (const std::exception &e) {
        return fail(RPS_INTERNAL, e.what());
    } catch (...) {
        return fail(RPS_INTERNAL, "unknown error");
    }
}

void need(const void *p, const char *what) {
    if (!p) throw InvalidArgument(std::string(what) + " must not be NULL");
}

char *dup_string(const std::string &s) {
    char *p = static_cast<char *>(std::malloc(s.size() + 1));
    if (!p) throw std::bad_alloc();
    std::memcpy(p, s.c_str(), s.size() + 1);
    return p;
}

void give(char **report, const std::string &s) {
    if (report) *report = dup_string(s);
}

Condition condition(const double *omega_o) {
    return omega_o ? Condition::at(omega_o[0], omega_o[1]) : Condition::none();
}

std::string out_or(const char *out_dir, const rps_config *config) {
    if (out_dir) return out_dir;
    return config ? config->cfg.output_dir : std::string(".");
}

} // namespace

extern "C" {

const char *rps_version(void) { return "1.0.0"; }

const char *rps_status_name(rps_status status) {
    switch (status) {
    case RPS_OK: return "ok";
    case RPS_INVALID_ARGUMENT: return "invalid argument";
    case RPS_CONFIG: return "config error";
    case RPS_IO: return "io error";
    case RPS_DOMAIN: return "domain error";
    case RPS_NUMERIC: return "numeric error";
    case RPS_DIVERGED: return "training diverged";
    case RPS_INTERNAL: return "internal error";
    }
    return "unknown status";
}

const char *rps_last_error(void) { return g_last_error.c_str(); }

void rps_string_free(char *s) { std::free(s); }

rps_status rps_config_load(const char *path, rps_config **out) {
    return guard([&] {
        need(path, "path");
        need(out, "out");
        *out = new rps_config{load_config(path)};
    });
}

rps_status rps_config_parse(const char *json_text, const char *base_dir, rps_config **out) {
    return guard([&] {
        need(json_text, "json_text");
        need(out, "out");
        *out = new rps_config{parse_config(json_text, base_dir ? base_dir : ".")};
    });
}

rps_status rps_config_set_seed(rps_config *config, uint64_t seed) {
    return guard([&] {
        need(config, "config");
        config->cfg.set_seed(seed);
    });
}

rps_status rps_config_seed(const rps_config *config, uint64_t *seed) {
    return guard([&] {
        need(config, "config");
        need(seed, "seed");
        *seed = config->cfg.seed;
    });
}

rps_status rps_config_output_dir(const rps_config *config, const char **dir) {
    return guard([&] {
        need(config, "config");
        need(dir, "dir");
        *dir = config->cfg.output_dir.c_str();
    });
}

void rps_config_free(rps_config *config) { delete config; }

rps_status rps_sampler_train(const rps_config *config, rps_sampler **out) {
    return guard([&] {
        need(config, "config");
        need(out, "out");
        const ExperimentConfig &c = config->cfg;
        TrainedSampler t = train_sampler(c.target, c.prior, c.sampler, c.sampler_train);
        *out = new rps_sampler{SamplerFile{std::move(t.model), c.prior, {c.sampler_train.steps, c.seed, t.log.final_loss}}};
    });
}

rps_status rps_sampler_load(const char *path, rps_sampler **out) {
    return guard([&] {
        need(path, "path");
        need(out, "out");
        *out = new rps_sampler{load_sampler(path)};
    });
}

rps_status rps_sampler_save(const rps_sampler *sampler, const char *path) {
    return guard([&] {
        need(sampler, "sampler");
        need(path, "path");
        save_sampler(sampler->file, path);
    });
}

void rps_sampler_free(rps_sampler *sampler) { delete sampler; }

rps_status rps_sampler_dim(const rps_sampler *sampler, size_t *dim) {
    return guard([&] {
        need(sampler, "sampler");
        need(dim, "dim");
        *dim = sampler->file.model.dim();
    });
}

rps_status rps_sampler_is_conditional(const rps_sampler *sampler, int *conditional) {
    return guard([&] {
        need(sampler, "sampler");
        need(conditional, "conditional");
        *conditional = sampler->file.model.conditional() ? 1 : 0;
    });
}

rps_status rps_sampler_transform(const rps_sampler *sampler, const double *z, const double *omega_o, double *u,
                                 double *det_j) {
    return guard([&] {
        need(sampler, "sampler");
        need(z, "z");
        need(u, "u");
        need(det_j, "det_j");
        const SamplerModel &m = sampler->file.model;
        const TransformResult r = transform(m, {z, m.dim()}, condition(omega_o));
        for (std::size_t j = 0; j < m.dim(); ++j) u[j] = r.u[j];
        *det_j = r.det_j;
    });
}

rps_status rps_pdf_train(const rps_config *config, const rps_sampler *sampler, rps_pdf **out) {
    return guard([&] {
        need(config, "config");
        need(sampler, "sampler");
        need(out, "out");
        const ExperimentConfig &c = config->cfg;
        Prior prior = sampler->file.prior;
        prior.dim = sampler->file.model.dim();
        TrainedPdf t = train_pdf(sampler->file.model, prior, c.pdf, c.pdf_train);
        *out = new rps_pdf{PdfFile{std::move(t.model), {c.pdf_train.steps, c.seed, t.log.final_loss}}};
    });
}

rps_status rps_pdf_load(const char *path, rps_pdf **out) {
    return guard([&] {
        need(path, "path");
        need(out, "out");
        *out = new rps_pdf{load_pdf(path)};
    });
}

rps_status rps_pdf_save(const rps_pdf *pdf, const char *path) {
    return guard([&] {
        need(pdf, "pdf");
        need(path, "path");
        save_pdf(pdf->file, path);
    });
}

void rps_pdf_free(rps_pdf *pdf) { delete pdf; }

rps_status rps_pdf_eval(const rps_pdf *pdf, const double *u, const double *omega_o, double *value) {
    return guard([&] {
        need(pdf, "pdf");
        need(u, "u");
        need(value, "value");
        *value = pdf_eval(pdf->file.model, {u, pdf->file.model.dim()}, condition(omega_o));
    });
}

rps_status rps_cmd_train_sampler(const rps_config *config, const char *out_dir, char **report) {
    return guard([&] {
        need(config, "config");
        give(report, cmd_train_sampler(config->cfg, out_or(out_dir, config)));
    });
}

rps_status rps_cmd_train_pdf(const rps_config *config, const char *sampler_path, const char *out_dir,
                             char **report) {
    return guard([&] {
        need(config, "config");
        need(sampler_path, "sampler_path");
        give(report, cmd_train_pdf(config->cfg, sampler_path, out_or(out_dir, config)));
    });
}

rps_status rps_cmd_sample(const char *sampler_path, const double *omega_o, uint64_t n, uint64_t seed,
                          const char *out_dir, char **report) {
    return guard([&] {
        need(sampler_path, "sampler_path");
        give(report, cmd_sample(sampler_path, condition(omega_o), static_cast<std::size_t>(n), seed,
                                out_or(out_dir, nullptr)));
    });
}

rps_status rps_cmd_evaluate(const rps_config *config, const char *sampler_path, const char *pdf_path,
                            const char *out_dir, char **report) {
    return guard([&] {
        need(config, "config");
        need(sampler_path, "sampler_path");
        give(report, cmd_evaluate(config->cfg, sampler_path, pdf_path ? pdf_path : "", out_or(out_dir, config)));
    });
}

rps_status rps_cmd_converge(const rps_config *config, const char *sampler_path, const char *pdf_path,
                            const char *out_dir, char **report) {
    return guard([&] {
        need(config, "config");
        need(sampler_path, "sampler_path");
        give(report, cmd_converge(config->cfg, sampler_path, pdf_path ? pdf_path : "", out_or(out_dir, config)));
    });
}

} // extern "C"
