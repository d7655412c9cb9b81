// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include "config.hpp"
#include "diagnostics.hpp"
#include "error.hpp"
#include "estimator.hpp"
#include "pdfnet.hpp"
#include "reparam.hpp"
#include "rng.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace repsample;
namespace fs = std::filesystem;

namespace {

using clk = std::chrono::steady_clock;

double seconds_since(clk::time_point t0) { return std::chrono::duration<double>(clk::now() - t0).count(); }

std::string fmt(const char *f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

int failures = 0;

void report(int id, const std::string &name, bool ok, const std::string &detail) {
    std::printf("[%s] %2d %-28s %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

void run(int id, const std::string &name, const std::function<std::pair<bool, std::string>()> &body) {
    try {
        const auto [ok, detail] = body();
        report(id, name, ok, detail);
    } catch (const std::exception &e) {
        report(id, name, false, std::string("exception: ") + e.what());
    }
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

// ||a - b|| / max(||a||, ||b||)
double norm_rel_err(const std::vector<double> &a, const std::vector<double> &b) {
    double d = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(d) / std::max({std::sqrt(na), std::sqrt(nb), 1e-300});
}

double central(const std::function<double(const std::vector<double> &)> &f, std::vector<double> x, std::size_t i,
               double h) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    return (fp - fm) / (2.0 * h);
}

// fourth-order stencil
double central4(const std::function<double(const std::vector<double> &)> &f, std::vector<double> x, std::size_t i,
                double h) {
    return (4.0 * central(f, x, i, h) - central(f, x, i, 2.0 * h)) / 3.0;
}

SamplerModel random_sampler(Rng &rng, bool disk, bool conditional, std::uint64_t seed, double max_scale = 1.5) {
    SamplerOptions o;
    o.domain = disk ? Domain::Disk2D : Domain::Line1D;
    o.conditional = conditional;
    o.hidden_layers = 1 + seed % 3;
    o.hidden_features = 8 + 8 * (seed % 2);
    SamplerModel m = make_sampler(o, seed);
    const double scale = rng.uniform(0.2, max_scale);
    for (double &v : m.net.values) v = rng.uniform(-scale, scale);
    return m;
}

Prior prior_for(std::size_t dim) {
    Prior p;
    p.dim = dim;
    return p;
}

// Fixtures trained once and shared by several criteria.
struct Fig3 {
    ExperimentConfig cfg;
    TrainedSampler sampler;
    DensityHistogram hist;
    double train_seconds = 0.0, total_seconds = 0.0;
};

struct Ggx {
    ExperimentConfig cfg;
    TrainedSampler sampler;
    TrainedPdf pdf;
    std::vector<Condition> conds;
};

Fig3 make_fig3(const std::string &configs) {
    Fig3 f;
    f.cfg = load_config(configs + "/fig3.json");
    const auto t0 = clk::now();
    f.sampler = train_sampler(f.cfg.target, f.cfg.prior, f.cfg.sampler, f.cfg.sampler_train);
    f.train_seconds = seconds_since(t0);
    const DrawBatch d = draw_samples(f.sampler.model, f.cfg.prior, Condition::none(), f.cfg.evaluation.samples,
                                     derive_seed(f.cfg.seed, stream::Eval));
    f.hist = histogram_samples(d.u, f.cfg.histogram_spec());
    f.total_seconds = seconds_since(t0);
    return f;
}

Ggx make_ggx(const std::string &configs) {
    Ggx g;
    g.cfg = load_config(configs + "/ggx.json");
    g.sampler = train_sampler(g.cfg.target, g.cfg.prior, g.cfg.sampler, g.cfg.sampler_train);
    g.pdf = train_pdf(g.sampler.model, g.cfg.prior, g.cfg.pdf, g.cfg.pdf_train);
    g.conds = g.cfg.evaluation_conditions();
    return g;
}

int run_cli(const std::string &cli, const std::string &args) {
    const std::string cmd = "\"" + cli + "\" " + args + " > /dev/null";
    return std::system(cmd.c_str());
}

bool same_bytes(const fs::path &a, const fs::path &b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    if (!fa || !fb) return false;
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    return sa.str() == sb.str();
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"acceptance checks"};
    std::string out = "acceptance_out", configs = REPSAMPLE_CONFIG_DIR, cli = REPSAMPLE_CLI;
    std::vector<int> only;
    app.add_option("--out", out, "scratch directory");
    app.add_option("--configs", configs, "config directory");
    app.add_option("--cli", cli, "repsample executable");
    app.add_option("--only", only, "run only these criteria");
    CLI11_PARSE(app, argc, argv);
    auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
    fs::remove_all(out);
    fs::create_directories(out);

    std::optional<Fig3> fig3;
    std::optional<Ggx> ggx;
    auto need_fig3 = [&]() -> Fig3 & {
        if (!fig3) fig3 = make_fig3(configs);
        return *fig3;
    };
    auto need_ggx = [&]() -> Ggx & {
        if (!ggx) ggx = make_ggx(configs);
        return *ggx;
    };

    if (wanted(1))
        run(1, "fig3 histogram KL", [&] {
            Fig3 &f = need_fig3();
            const double kl = kl_to_target(f.hist, f.cfg.target, Condition::none());
            const bool ok = kl < 5e-3 && f.total_seconds < 300.0;
            return std::pair{ok, "KL=" + fmt("%.3g", kl) + " (<5e-3) train=" + fmt("%.1fs", f.train_seconds) +
                                     " total=" + fmt("%.1fs", f.total_seconds) + " (<300s)"};
        });

    if (wanted(2))
        run(2, "unbiasedness slope", [&] {
            Ggx &g = need_ggx();
            const ToyScene scene = g.cfg.scene_for_estimators();
            const Condition cond = g.conds.front();
            const double ref = reference_value(scene, cond, 2048);
            std::string detail;
            bool ok = true;
            for (EstimatorMode m : {EstimatorMode::Brdf, EstimatorMode::Mis, EstimatorMode::BiasedNoDet}) {
                const EstimatorSetup setup{m, &g.sampler.model, &g.pdf.model, &scene, cond};
                const auto rec = convergence_curve(setup, g.cfg.evaluation.spp, g.cfg.evaluation.trials,
                                                   derive_seed(g.cfg.seed, stream::Trial), ref, false);
                const bool in = rec.slope >= -1.1 && rec.slope <= -0.9;
                ok = ok && (m == EstimatorMode::BiasedNoDet ? !in : in);
                detail += to_string(m) + "=" + fmt("%.3f", rec.slope) + " ";
            }
            return std::pair{ok, detail + "(control must fall outside [-1.1,-0.9])"};
        });

    if (wanted(3))
        run(3, "upper bound L'_rep >= L_rep", [&] {
            Rng rng(3);
            std::size_t terms = 0, violations = 0;
            const auto mix = TargetDensity::gauss_mix({{0.3, 0.4, 0.3}, {-1.5, 0.0, 1.8}, {0.5, 0.35, 0.6}});
            const auto ggxt = TargetDensity::ggx({0.2, 0.04, std::nullopt});
            for (int k = 0; k < 200; ++k) {
                const bool disk = k % 2 == 1;
                SamplerModel m = random_sampler(rng, disk, disk, 1000 + k);
                m.alpha = k % 4 < 2 ? 0.0 : rng.uniform(0.0, 0.5);
                const TargetDensity &t = disk ? ggxt : mix;
                const TrainBatch b = make_train_batch(t, prior_for(m.dim()), 4, 64, 5000 + k);
                const auto lp = evaluate_loss(m, t, b, LossForm::RepPrime, false);
                const auto lr = evaluate_loss(m, t, b, LossForm::Rep, false);
                for (std::size_t i = 0; i < lp.terms.size(); ++i) {
                    ++terms;
                    violations += !(lp.terms[i] >= lr.terms[i]);
                }
            }
            return std::pair{violations == 0, std::to_string(violations) + " violations in " + std::to_string(terms) +
                                                  " terms over 200 pairs"};
        });

    if (wanted(4))
        run(4, "jacobians vs finite diff", [&] {
            Rng rng(4);
            double worst_j = 0.0, worst_g = 0.0;
            for (int k = 0; k < 100; ++k) {
                // input jacobian of the network and det J_T of the full map
                const bool disk = k % 2 == 1;
                const SamplerModel m = random_sampler(rng, disk, disk && k % 4 == 1, 2000 + k, 0.8);
                const Condition c = m.conditional() ? sample_condition(rng) : Condition::none();
                std::vector<double> z(m.dim());
                for (double &v : z) v = rng.normal();
                const auto x = sampler_input(m, z, c);
                std::vector<std::size_t> wrt(m.dim());
                for (std::size_t i = 0; i < wrt.size(); ++i) wrt[i] = i;
                const auto fj = forward_with_input_jacobian(m.net, x, wrt);
                const std::size_t outs = fj.output.size();
                std::vector<double> fd(outs * wrt.size());
                for (std::size_t o = 0; o < outs; ++o)
                    for (std::size_t j = 0; j < wrt.size(); ++j)
                        fd[o * wrt.size() + j] =
                            central([&](const std::vector<double> &v) { return forward(m.net, v)[o]; }, x, j, 1e-5);
                worst_j = std::max(worst_j, norm_rel_err(fj.jacobian, fd));
                const double det = transform(m, z, c).det_j;
                double fdet;
                auto comp = [&](std::size_t i) {
                    return [&, i](const std::vector<double> &v) { return transform(m, v, c).u[i]; };
                };
                if (m.dim() == 1) {
                    fdet = central(comp(0), z, 0, 1e-5);
                } else {
                    fdet = central(comp(0), z, 0, 1e-5) * central(comp(1), z, 1, 1e-5) -
                           central(comp(0), z, 1, 1e-5) * central(comp(1), z, 0, 1e-5);
                }
                worst_j = std::max(worst_j, rel_err(det, fdet));
            }
            for (int k = 0; k < 100; ++k) {
                // parameter gradients of the sampler losses and the pdf loss
                const bool disk = k % 2 == 1;
                const SamplerModel m = random_sampler(rng, disk, disk, 3000 + k, 0.8);
                const Prior p = prior_for(m.dim());
                const TrainBatch b = disk ? make_train_batch(true, p, 2, 8, 7000 + k) : make_train_batch(false, p, 1, 16, 7000 + k);
                std::vector<double> grad, theta;
                std::function<double(const std::vector<double> &)> loss;
                if (k % 5 == 4) {
                    PdfModel pm = make_pdf_model(m, PdfOptions{1, 16}, 8000 + k);
                    for (double &v : pm.net.values) v = rng.uniform(-0.5, 0.5);
                    grad = loss_pdf(pm, m, b).grad;
                    theta = pm.net.values;
                    loss = [&, pm](const std::vector<double> &th) mutable {
                        pm.net.values = th;
                        return loss_pdf(pm, m, b, false).loss;
                    };
                } else {
                    const auto mix = TargetDensity::gauss_mix({{0.5, 0.5}, {-1.0, 1.0}, {0.6, 0.4}});
                    const auto ggxt = TargetDensity::ggx({0.3, 0.04, std::nullopt});
                    const TargetDensity t = disk ? ggxt : mix;
                    const LossForm form = k % 5 == 2 ? LossForm::Nll : LossForm::RepPrime;
                    grad = evaluate_loss(m, t, b, form, true).grad;
                    theta = m.net.values;
                    loss = [&, t, form, q = m](const std::vector<double> &th) mutable {
                        q.net.values = th;
                        return evaluate_loss(q, t, b, form, false).loss;
                    };
                }
                std::vector<double> fd(theta.size());
                for (std::size_t i = 0; i < theta.size(); ++i) fd[i] = central4(loss, theta, i, 1e-5);
                worst_g = std::max(worst_g, norm_rel_err(grad, fd));
            }
            const bool ok = worst_j < 1e-4 && worst_g < 1e-4;
            return std::pair{ok, "max rel err jacobian=" + fmt("%.2g", worst_j) + " gradient=" + fmt("%.2g", worst_g) +
                                     " (<1e-4, 100 configs each)"};
        });

    if (wanted(5))
        run(5, "MIS with constant pdf", [&] {
            Ggx &g = need_ggx();
            const ToyScene scene = g.cfg.scene_for_estimators();
            const Condition cond = g.conds.front();
            const double ref = reference_value(scene, cond, 2048);
            bool ok = true;
            std::string detail;
            for (double p : {0.1, 1.0, 10.0}) {
                const Estimate e = estimate_mis_constant(g.sampler.model, p, scene, cond, 1000000,
                                                         derive_seed(g.cfg.seed, stream::Trial, 5));
                const double z = (e.mean - ref) / e.std_error();
                ok = ok && std::abs(z) < 3.0 && e.weight_sum_violations == 0;
                detail += "p=" + fmt("%g", p) + " z=" + fmt("%.2f", z) + " w+we!=1:" +
                          std::to_string(e.weight_sum_violations) + " ";
            }
            return std::pair{ok, detail + "(|z|<3, 0 violations)"};
        });

    if (wanted(6))
        run(6, "prior support ablation", [&] {
            ExperimentConfig cfg = load_config(configs + "/coverage.json");
            const HistogramSpec spec = cfg.histogram_spec();
            const Condition c = Condition::none();
            auto miss = [&](const Prior &p) {
                const auto r = train_sampler(cfg.target, p, cfg.sampler, cfg.sampler_train);
                const auto d = draw_samples(r.model, p, c, cfg.evaluation.samples, derive_seed(cfg.seed, stream::Eval));
                return coverage_check(d.u, cfg.target, c, spec, cfg.evaluation.coverage_threshold);
            };
            Prior uni = cfg.prior;
            uni.kind = PriorKind::Uniform;
            const auto n = miss(cfg.prior), u = miss(uni);
            const bool ok = n.miss_fraction == 0.0 && u.miss_fraction > 0.0;
            return std::pair{ok, "std_normal miss=" + fmt("%.4g", n.miss_fraction) + " uniform miss=" +
                                     fmt("%.4g", u.miss_fraction) + " (" + std::to_string(u.missed) + "/" +
                                     std::to_string(u.significant) + " bins)"};
        });

    if (wanted(7))
        run(7, "mode seeking", [&] {
            // Standard = plain network (no identity skip), no clipping; five seeds each.
            ExperimentConfig cfg = load_config(configs + "/bimodal.json");
            const HistogramSpec spec = cfg.histogram_spec();
            const Condition c = Condition::none();
            const double th = cfg.evaluation.coverage_threshold;
            const RegionFn left = [](std::span<const double> u) { return u[0] < 0.0; };
            const RegionFn right = [](std::span<const double> u) { return u[0] > 0.0; };
            SamplerOptions std_opts = cfg.sampler;
            std_opts.init = InitKind::Standard;
            std_opts.skip_identity = false;
            int collapsed = 0, covered = 0;
            double worst_clip = 0.0;
            std::string per;
            for (std::uint64_t s = 0; s < 5; ++s) {
                TrainConfig t = cfg.sampler_train;
                t.seed = cfg.seed + s;
                const std::uint64_t draw_seed = derive_seed(cfg.seed + s, stream::Eval);
                TrainConfig ts = t;
                ts.max_grad_norm.reset();
                const auto a = draw_samples(train_sampler(cfg.target, cfg.prior, std_opts, ts).model, cfg.prior, c,
                                            cfg.evaluation.samples, draw_seed).u;
                const double mode_miss = std::max(coverage_check(a, cfg.target, c, spec, th, left).miss_fraction,
                                                  coverage_check(a, cfg.target, c, spec, th, right).miss_fraction);
                collapsed += mode_miss > 0.2;
                const auto b = draw_samples(train_sampler(cfg.target, cfg.prior, cfg.sampler, t).model, cfg.prior, c,
                                            cfg.evaluation.samples, draw_seed).u;
                const double miss = coverage_check(b, cfg.target, c, spec, th).miss_fraction;
                covered += miss < 0.01;
                worst_clip = std::max(worst_clip, miss);
                per += fmt("%.2f", mode_miss) + (s < 4 ? "," : "");
            }
            const bool ok = collapsed >= 1 && covered == 5;
            return std::pair{ok, "standard: " + std::to_string(collapsed) + "/5 seeds miss >0.2 of a mode [" + per +
                                     "]; identity+clip: " + std::to_string(covered) + "/5 cover (max miss " +
                                     fmt("%.4f", worst_clip) + ")"};
        });

    if (wanted(8))
        run(8, "pdf fidelity", [&] {
            Fig3 &f = need_fig3();
            const TrainedPdf fp = train_pdf(f.sampler.model, f.cfg.prior, f.cfg.pdf, f.cfg.pdf_train);
            const double kf = kl_to_pdf(f.hist, fp.model, Condition::none());
            Ggx &g = need_ggx();
            double worst = 0.0;
            std::string per;
            for (std::size_t i = 0; i < g.conds.size(); ++i) {
                const DrawBatch d = draw_samples(g.sampler.model, g.cfg.prior, g.conds[i], g.cfg.evaluation.samples,
                                                 derive_seed(g.cfg.seed, stream::Eval, i));
                const double k = kl_to_pdf(histogram_samples(d.u, g.cfg.histogram_spec()), g.pdf.model, g.conds[i]);
                worst = std::max(worst, k);
                per += fmt("%.3f", k) + (i + 1 < g.conds.size() ? "," : "");
            }
            const bool ok = kf < 0.05 && worst < 0.05 && g.conds.size() == 5;
            return std::pair{ok, "fig3=" + fmt("%.4f", kf) + " ggx=[" + per + "] (<0.05)"};
        });

    if (wanted(9))
        run(9, "defensive map pushforward", [&] {
            std::string detail;
            bool ok = true;
            for (Domain dom : {Domain::Line1D, Domain::Disk2D}) {
                const std::size_t d = domain_dim(dom);
                const DrawBatch draws =
                    draw_samples(SamplerModel::defensive(dom), prior_for(d), Condition::none(), 1000000, 9);
                // q(I^-1(u)) |det J_{I^-1}(u)|, I^-1(u) = u / sqrt(1 - |u|^2)
                const BatchFn analytic = [d](std::span<const double> u) {
                    std::vector<double> r(u.size() / d);
                    for (std::size_t i = 0; i < r.size(); ++i) {
                        double s = 0.0;
                        for (std::size_t k = 0; k < d; ++k) s += u[i * d + k] * u[i * d + k];
                        if (s >= 1.0) continue;
                        const double zz = s / (1.0 - s);
                        const double q = std::exp(-0.5 * zz) / std::pow(2 * M_PI, 0.5 * static_cast<double>(d));
                        r[i] = q * std::pow(1.0 - s, -(0.5 * static_cast<double>(d) + 1.0));
                    }
                    return r;
                };
                HistogramSpec spec{dom, dom == Domain::Line1D ? std::size_t{200} : std::size_t{32}, -1.0, 1.0};
                const double kl = kl_divergence(histogram_samples(draws.u, spec), analytic);
                ok = ok && kl < 1e-3;
                detail += (dom == Domain::Line1D ? "1D KL=" : "2D KL=") + fmt("%.2g", kl) + " ";
            }
            return std::pair{ok, detail + "(<1e-3)"};
        });

    if (wanted(10))
        run(10, "CLI determinism", [&] {
            const fs::path root = fs::absolute(out) / "cli";
            const fs::path disk_cfg = root / "disk.json";
            fs::create_directories(root);
            std::ofstream(disk_cfg)
                << R"({"seed": 4, "target": {"kind": "ggx", "roughness": 0.2},
 "sampler": {"steps": 50, "batch_conditions": 4, "batch_z": 64},
 "pdf": {"steps": 50, "batch_conditions": 2, "batch_z": 64},
 "scene": {"field": 0.5, "emitter": {"kind": "spot", "radiance": 3, "center": [0.2, 0.1], "sigma": 0.2}},
 "evaluation": {"samples": 20000, "num_conditions": 2, "estimator_samples": 2000, "spp": [4, 16, 64],
                "trials": 8, "injectivity_grid": 21, "modes": ["brdf", "mis", "uniform", "biased_no_det"]}})";
            std::size_t files = 0, differing = 0;
            int bad_exit = 0;
            for (const auto &[name, cfg] : {std::pair{std::string("quick"), fs::path(configs) / "quick.json"},
                                            std::pair{std::string("disk"), disk_cfg}}) {
                for (const char *run : {"a", "b"}) {
                    const fs::path d = root / name / run;
                    const std::string c = " --config \"" + cfg.string() + "\" --out \"" + d.string() + "\"";
                    const std::string model = " --model \"" + (d / "sampler.json").string() + "\"";
                    const std::string pdf = " --pdf \"" + (d / "pdf.json").string() + "\"";
                    bad_exit += run_cli(cli, "train-sampler" + c) != 0;
                    bad_exit += run_cli(cli, "train-pdf" + c + " --sampler \"" + (d / "sampler.json").string() + "\"") != 0;
                    bad_exit += run_cli(cli, "sample" + c + model + " --n 1000" + (name == "disk" ? " --cond 0.3,-0.2" : "")) != 0;
                    bad_exit += run_cli(cli, "evaluate" + c + model + pdf) != 0;
                    bad_exit += run_cli(cli, "converge" + c + model + pdf) != 0;
                }
                for (const auto &e : fs::directory_iterator(root / name / "a")) {
                    ++files;
                    differing += !same_bytes(e.path(), root / name / "b" / e.path().filename());
                }
            }
            const bool ok = bad_exit == 0 && differing == 0 && files >= 18;
            return std::pair{ok, std::to_string(files) + " files compared, " + std::to_string(differing) +
                                     " differ, " + std::to_string(bad_exit) + " failed commands"};
        });

    std::printf("%s\n", failures == 0 ? "all criteria passed" : (std::to_string(failures) + " criteria failed").c_str());
    return failures == 0 ? 0 : 1;
}
