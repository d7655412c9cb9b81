#include "pipeline.hpp"

#include "diagnostics.hpp"
#include "error.hpp"
#include "rng.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>

namespace repsample {

namespace {

using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json cond_json(const Condition &c) {
    if (!c.omega_o) return nullptr;
    return json::array({(*c.omega_o)[0], (*c.omega_o)[1]});
}

std::string dump(const json &j) { return j.dump(1) + "\n"; }

std::string join(const std::string &dir, const char *name) { return (std::filesystem::path(dir) / name).string(); }

void ensure_dir(const std::string &dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create output directory '" + dir + "'");
}

void check_compatible(const ExperimentConfig &cfg, const SamplerModel &m) {
    if (m.dim() != cfg.target.dim()) throw ConfigError("target: dimension does not match the sampler model");
    if (m.kind == SamplerKind::Network && m.conditional() != cfg.target.conditional())
        throw ConfigError("target: conditioning does not match the sampler model");
}

void check_compatible(const SamplerModel &s, const PdfModel &p) {
    if (s.domain != p.domain || s.cond_freqs != p.cond_freqs)
        throw InvalidArgument("pdf model does not match the sampler's domain and condition encoding");
}

DensityHistogram histogram_for(const ExperimentConfig &cfg, const SamplerFile &sf, const Condition &c,
                               std::size_t index, DrawBatch *keep = nullptr) {
    DrawBatch d = draw_samples(sf.model, sf.prior, c, cfg.evaluation.samples, derive_seed(cfg.seed, stream::Draw, index));
    DensityHistogram h = histogram_samples(d.u, cfg.histogram_spec());
    if (keep) *keep = std::move(d);
    return h;
}

Prior prior_for(const SamplerFile &sf) {
    Prior p = sf.prior;
    p.dim = sf.model.dim();
    return p;
}

} // namespace

std::string loss_log_csv(const TrainLog &log) {
    std::string out = "step,loss,floored\n";
    char buf[96];
    for (const auto &r : log.rows) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%zu\n", r.step, r.loss, r.floored);
        out += buf;
    }
    return out;
}

SamplerRun run_train_sampler(const ExperimentConfig &cfg) {
    const auto t0 = Clock::now();
    TrainedSampler trained = train_sampler(cfg.target, cfg.prior, cfg.sampler, cfg.sampler_train);
    const double train_seconds = seconds_since(t0);
    SamplerRun run;
    run.file.model = std::move(trained.model);
    run.file.prior = cfg.prior;
    run.file.training = {cfg.sampler_train.steps, cfg.seed, trained.log.final_loss};
    run.log = std::move(trained.log);

    json r;
    r["command"] = "train-sampler";
    r["steps"] = cfg.sampler_train.steps;
    r["seed"] = cfg.seed;
    r["final_loss"] = num(run.log.final_loss);
    r["floored_terms"] = run.log.total_floored;
    json kls = json::array();
    const auto conds = cfg.evaluation_conditions();
    for (std::size_t i = 0; i < conds.size(); ++i) {
        const DensityHistogram h = histogram_for(cfg, run.file, conds[i], i);
        json e;
        e["omega_o"] = cond_json(conds[i]);
        e["kl_target"] = num(kl_to_target(h, cfg.target, conds[i]));
        kls.push_back(std::move(e));
    }
    r["evaluation"] = std::move(kls);
    if (cfg.evaluation.timing) r["train_seconds"] = train_seconds;
    run.report = dump(r);
    return run;
}

PdfRun run_train_pdf(const ExperimentConfig &cfg, const SamplerFile &sampler) {
    check_compatible(cfg, sampler.model);
    const auto t0 = Clock::now();
    TrainedPdf trained = train_pdf(sampler.model, prior_for(sampler), cfg.pdf, cfg.pdf_train);
    const double train_seconds = seconds_since(t0);
    PdfRun run;
    run.file.model = std::move(trained.model);
    run.file.training = {cfg.pdf_train.steps, cfg.seed, trained.log.final_loss};
    run.log = std::move(trained.log);

    json r;
    r["command"] = "train-pdf";
    r["steps"] = cfg.pdf_train.steps;
    r["seed"] = cfg.seed;
    r["final_loss"] = num(run.log.final_loss);
    json kls = json::array();
    const auto conds = cfg.evaluation_conditions();
    for (std::size_t i = 0; i < conds.size(); ++i) {
        const DensityHistogram h = histogram_for(cfg, sampler, conds[i], i);
        json e;
        e["omega_o"] = cond_json(conds[i]);
        e["kl_pdf"] = num(kl_to_pdf(h, run.file.model, conds[i]));
        kls.push_back(std::move(e));
    }
    r["evaluation"] = std::move(kls);
    if (cfg.evaluation.timing) r["train_seconds"] = train_seconds;
    run.report = dump(r);
    return run;
}

std::string sample_csv(const SamplerFile &sampler, const Condition &cond, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw InvalidArgument("sample count must be >= 1");
    const SamplerModel &m = sampler.model;
    if (m.conditional() && !cond.omega_o) throw InvalidArgument("the sampler is conditional; pass a condition");
    if (!m.conditional() && cond.omega_o) throw InvalidArgument("the sampler is not conditional");
    const PriorBatch z = prior_sample(prior_for(sampler), n, derive_seed(seed, stream::Draw));
    const TransformBatch t = transform_batch(m, z, std::span(&cond, 1));
    const std::size_t d = m.dim();
    std::string out = d == 1 ? "z0,u0,det_j\n" : "z0,z1,u0,u1,det_j\n";
    char buf[64];
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g,", z.z[i * d + j]);
            out += buf;
        }
        for (std::size_t j = 0; j < d; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g,", t.u[i * d + j]);
            out += buf;
        }
        std::snprintf(buf, sizeof buf, "%.17g\n", t.det_j[i]);
        out += buf;
    }
    return out;
}

std::string run_evaluate(const ExperimentConfig &cfg, const SamplerFile &sampler, const PdfFile *pdf,
                         const std::string &out_dir) {
    check_compatible(cfg, sampler.model);
    if (pdf) check_compatible(sampler.model, pdf->model);
    const ToyScene scene = cfg.scene_for_estimators();
    const auto conds = cfg.evaluation_conditions();
    const HistogramSpec hs = cfg.histogram_spec();
    const Prior prior = prior_for(sampler);

    json r;
    r["command"] = "evaluate";
    r["seed"] = cfg.seed;
    json per = json::array();
    for (std::size_t i = 0; i < conds.size(); ++i) {
        const Condition &c = conds[i];
        const auto t0 = Clock::now();
        DrawBatch draws;
        const DensityHistogram h = histogram_for(cfg, sampler, c, i, &draws);
        json e;
        e["omega_o"] = cond_json(c);
        e["samples"] = draws.size();
        e["outside_histogram"] = h.outside;
        e["kl_target"] = num(kl_to_target(h, cfg.target, c));
        const CoverageResult cov = coverage_check(draws.u, cfg.target, c, hs, cfg.evaluation.coverage_threshold);
        e["coverage"] = {{"miss_fraction", num(cov.miss_fraction)},
                         {"significant_bins", cov.significant},
                         {"missed_bins", cov.missed}};
        const InjectivityResult inj = injectivity_check(sampler.model, prior, c, cfg.injectivity_resolution());
        e["injectivity"] = {{"min_det", num(inj.min_det)},
                            {"negative_fraction", num(inj.negative_fraction)},
                            {"points", inj.points}};
        e["negative_det_draws"] = draws.negative_det;
        if (pdf) e["kl_pdf"] = num(kl_to_pdf(h, pdf->model, c));

        const double ref = reference_value(scene, c, cfg.evaluation.quadrature_resolution);
        e["reference"] = num(ref);
        json est = json::array();
        for (EstimatorMode mode : cfg.evaluation.modes) {
            EstimatorSetup setup{mode, &sampler.model, pdf ? &pdf->model : nullptr, &scene, c};
            Estimate s;
            try {
                s = run_estimator(setup, cfg.evaluation.estimator_samples,
                                  derive_seed(cfg.seed, stream::Eval, 1000 + i));
            } catch (const InvalidArgument &err) {
                throw ConfigError("evaluation.modes: " + to_string(mode) + ": " + err.what());
            }
            const double se = s.std_error();
            est.push_back({{"mode", to_string(mode)},
                           {"mean", num(s.mean)},
                           {"std_error", num(se)},
                           {"z_score", num(se > 0.0 ? (s.mean - ref) / se : (s.mean == ref ? 0.0 : NAN))},
                           {"n", s.n},
                           {"weight_sum_violations", s.weight_sum_violations}});
        }
        e["estimators"] = std::move(est);
        if (cfg.evaluation.timing) e["seconds"] = seconds_since(t0);
        if (!out_dir.empty()) {
            const std::string name = "histogram_" + std::to_string(i) + ".csv";
            write_text_file(join(out_dir, name.c_str()), histogram_csv(h));
        }
        per.push_back(std::move(e));
    }
    r["conditions"] = std::move(per);
    return dump(r);
}

std::string run_converge(const ExperimentConfig &cfg, const SamplerFile &sampler, const PdfFile *pdf,
                         const std::string &out_dir) {
    check_compatible(cfg, sampler.model);
    if (pdf) check_compatible(sampler.model, pdf->model);
    const EvaluationSpec &ev = cfg.evaluation;
    if (ev.spp.empty()) throw ConfigError("evaluation.spp: must not be empty");
    const ToyScene scene = cfg.scene_for_estimators();
    const Condition cond = cfg.evaluation_conditions().front();
    const double ref = reference_value(scene, cond, ev.quadrature_resolution);

    json r;
    r["command"] = "converge";
    r["seed"] = cfg.seed;
    r["omega_o"] = cond_json(cond);
    r["reference"] = num(ref);
    r["trials"] = ev.trials;
    json modes = json::array();
    for (std::size_t k = 0; k < ev.modes.size(); ++k) {
        const EstimatorMode mode = ev.modes[k];
        EstimatorSetup setup{mode, &sampler.model, pdf ? &pdf->model : nullptr, &scene, cond};
        ConvergenceRecord rec;
        Estimate s;
        try {
            rec = convergence_curve(setup, ev.spp, ev.trials, derive_seed(cfg.seed, stream::Trial, k), ref, ev.timing);
            s = run_estimator(setup, ev.estimator_samples, derive_seed(cfg.seed, stream::Eval, 2000 + k));
        } catch (const InvalidArgument &err) {
            throw ConfigError("evaluation.modes: " + to_string(mode) + ": " + err.what());
        }
        const std::string csv = "convergence_" + to_string(mode) + ".csv";
        if (!out_dir.empty()) write_text_file(join(out_dir, csv.c_str()), convergence_csv(rec));
        const double se = s.std_error();
        modes.push_back({{"mode", to_string(mode)},
                         {"slope", num(rec.slope)},
                         {"csv", csv},
                         {"mean", num(s.mean)},
                         {"std_error", num(se)},
                         {"z_score", num(se > 0.0 ? (s.mean - ref) / se : (s.mean == ref ? 0.0 : NAN))}});
    }
    r["modes"] = std::move(modes);
    return dump(r);
}

std::string cmd_train_sampler(const ExperimentConfig &cfg, const std::string &out_dir) {
    ensure_dir(out_dir);
    const SamplerRun run = run_train_sampler(cfg);
    save_sampler(run.file, join(out_dir, kSamplerFile));
    write_text_file(join(out_dir, kSamplerLog), loss_log_csv(run.log));
    return run.report;
}

std::string cmd_train_pdf(const ExperimentConfig &cfg, const std::string &sampler_path, const std::string &out_dir) {
    const SamplerFile sampler = load_sampler(sampler_path);
    ensure_dir(out_dir);
    const PdfRun run = run_train_pdf(cfg, sampler);
    save_pdf(run.file, join(out_dir, kPdfFile));
    write_text_file(join(out_dir, kPdfLog), loss_log_csv(run.log));
    return run.report;
}

std::string cmd_sample(const std::string &sampler_path, const Condition &cond, std::size_t n, std::uint64_t seed,
                       const std::string &out_dir) {
    const SamplerFile sampler = load_sampler(sampler_path);
    const std::string csv = sample_csv(sampler, cond, n, seed);
    ensure_dir(out_dir);
    write_text_file(join(out_dir, kSamplesFile), csv);
    json r;
    r["command"] = "sample";
    r["samples"] = n;
    r["seed"] = seed;
    r["omega_o"] = cond_json(cond);
    r["csv"] = kSamplesFile;
    return dump(r);
}

std::string cmd_evaluate(const ExperimentConfig &cfg, const std::string &sampler_path, const std::string &pdf_path,
                         const std::string &out_dir) {
    const SamplerFile sampler = load_sampler(sampler_path);
    std::optional<PdfFile> pdf;
    if (!pdf_path.empty()) pdf = load_pdf(pdf_path);
    ensure_dir(out_dir);
    const std::string report = run_evaluate(cfg, sampler, pdf ? &*pdf : nullptr, out_dir);
    write_text_file(join(out_dir, kEvaluateReport), report);
    return report;
}

std::string cmd_converge(const ExperimentConfig &cfg, const std::string &sampler_path, const std::string &pdf_path,
                         const std::string &out_dir) {
    const SamplerFile sampler = load_sampler(sampler_path);
    std::optional<PdfFile> pdf;
    if (!pdf_path.empty()) pdf = load_pdf(pdf_path);
    ensure_dir(out_dir);
    const std::string report = run_converge(cfg, sampler, pdf ? &*pdf : nullptr, out_dir);
    write_text_file(join(out_dir, kConvergeReport), report);
    return report;
}

} // namespace repsample
