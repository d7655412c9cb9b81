#include "repsample/repsample.h"

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitFailure = 3;

int exit_code(rps_status s) {
    switch (s) {
    case RPS_OK: return 0;
    case RPS_INVALID_ARGUMENT:
    case RPS_CONFIG:
    case RPS_IO:
    case RPS_DOMAIN: return kExitUsage;
    default: return kExitFailure;
    }
}

int report_failure(rps_status s) {
    std::fprintf(stderr, "error (%s): %s\n", rps_status_name(s), rps_last_error());
    return exit_code(s);
}

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void add_common(CLI::App *cmd, Common &c, bool config_required) {
    auto *opt = cmd->add_option("--config", c.config, "experiment config (JSON)");
    if (config_required) opt->required();
    cmd->add_option("--seed", c.seed, "override the config seed");
    cmd->add_option("--out", c.out, "output directory (default: config output.dir)");
}

// Owns a loaded config and applies the common overrides.
struct Config {
    rps_config *ptr = nullptr;
    ~Config() { rps_config_free(ptr); }
    rps_status load(const Common &c) {
        rps_status s = rps_config_load(c.config.c_str(), &ptr);
        if (s == RPS_OK && c.seed) s = rps_config_set_seed(ptr, *c.seed);
        return s;
    }
};

const char *out_dir(const Common &c) { return c.out.empty() ? nullptr : c.out.c_str(); }

int finish(rps_status s, char *report) {
    if (s != RPS_OK) return report_failure(s);
    if (!report) return 0;
    std::fputs(report, stdout);
    rps_string_free(report);
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Train and evaluate reparameterization samplers."};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(rps_version()));

    Common ts, tp, sm, ev, cv;
    std::string sampler_path, pdf_path;
    std::vector<double> cond;
    std::uint64_t n = 1000;

    auto *train_sampler = app.add_subcommand("train-sampler", "train T; writes sampler.json and sampler_loss.csv");
    add_common(train_sampler, ts, true);

    auto *train_pdf = app.add_subcommand("train-pdf", "train the pdf network; writes pdf.json and pdf_loss.csv");
    add_common(train_pdf, tp, true);
    train_pdf->add_option("--sampler", sampler_path, "trained sampler model")->required();

    auto *sample = app.add_subcommand("sample", "draw samples; writes samples.csv");
    add_common(sample, sm, false);
    sample->add_option("--model", sampler_path, "sampler model")->required();
    sample->add_option("--cond", cond, "omega_o as x,y for conditional samplers")->delimiter(',')->expected(2);
    sample->add_option("--n", n, "number of samples")->check(CLI::PositiveNumber);

    auto *evaluate = app.add_subcommand("evaluate", "KL, coverage, injectivity and estimator report");
    add_common(evaluate, ev, true);
    evaluate->add_option("--model", sampler_path, "sampler model")->required();
    evaluate->add_option("--pdf", pdf_path, "pdf model");

    auto *converge = app.add_subcommand("converge", "MSE against spp; writes convergence_<mode>.csv");
    add_common(converge, cv, true);
    converge->add_option("--model", sampler_path, "sampler model")->required();
    converge->add_option("--pdf", pdf_path, "pdf model");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return kExitUsage;
    }

    char *report = nullptr;
    const char *pdf = pdf_path.empty() ? nullptr : pdf_path.c_str();

    if (train_sampler->parsed()) {
        Config c;
        if (rps_status s = c.load(ts); s != RPS_OK) return report_failure(s);
        const rps_status st = rps_cmd_train_sampler(c.ptr, out_dir(ts), &report);
        return finish(st, report);
    }
    if (train_pdf->parsed()) {
        Config c;
        if (rps_status s = c.load(tp); s != RPS_OK) return report_failure(s);
        const rps_status st = rps_cmd_train_pdf(c.ptr, sampler_path.c_str(), out_dir(tp), &report);
        return finish(st, report);
    }
    if (sample->parsed()) {
        std::uint64_t seed = 0;
        std::string dir = sm.out;
        if (!sm.config.empty()) {
            Config c;
            if (rps_status s = c.load(sm); s != RPS_OK) return report_failure(s);
            rps_config_seed(c.ptr, &seed);
            if (dir.empty()) {
                const char *d = nullptr;
                rps_config_output_dir(c.ptr, &d);
                dir = d;
            }
        }
        if (sm.seed) seed = *sm.seed;
        const double *omega = cond.size() == 2 ? cond.data() : nullptr;
        const rps_status st = rps_cmd_sample(sampler_path.c_str(), omega, n, seed, dir.empty() ? nullptr : dir.c_str(), &report);
        return finish(st, report);
    }
    if (evaluate->parsed()) {
        Config c;
        if (rps_status s = c.load(ev); s != RPS_OK) return report_failure(s);
        const rps_status st = rps_cmd_evaluate(c.ptr, sampler_path.c_str(), pdf, out_dir(ev), &report);
        return finish(st, report);
    }
    if (converge->parsed()) {
        Config c;
        if (rps_status s = c.load(cv); s != RPS_OK) return report_failure(s);
        const rps_status st = rps_cmd_converge(c.ptr, sampler_path.c_str(), pdf, out_dir(cv), &report);
        return finish(st, report);
    }
    return kExitUsage;
}
