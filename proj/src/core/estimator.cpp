#include "estimator.hpp"

#include "error.hpp"
#include "rng.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace repsample {

// ---------------------------------------------------------------- emitter

Emitter Emitter::none() { return Emitter{}; }

Emitter Emitter::uniform_disk(double radiance) {
    if (!(radiance >= 0.0) || !std::isfinite(radiance)) throw InvalidArgument("emitter radiance must be >= 0");
    Emitter e;
    e.kind_ = EmitterKind::UniformDisk;
    e.radiance_ = radiance;
    e.norm_ = std::numbers::pi;
    return e;
}

Emitter Emitter::spot(std::array<double, 2> center, double sigma, double radiance) {
    if (!(radiance >= 0.0) || !std::isfinite(radiance)) throw InvalidArgument("emitter radiance must be >= 0");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidArgument("spot sigma must be > 0");
    if (!(center[0] * center[0] + center[1] * center[1] < 1.0))
        throw InvalidArgument("spot center must lie inside the unit disk");
    Emitter e;
    e.kind_ = EmitterKind::Spot;
    e.center_ = center;
    e.sigma_ = sigma;
    e.radiance_ = radiance;
    e.norm_ = integrate_disk([&e](std::span<const double> u) { return e.profile(u); }, 1024);
    if (!(e.norm_ > 0.0)) throw NumericError("spot emitter has no mass on the disk");
    return e;
}

double Emitter::profile(std::span<const double> u) const {
    if (!(u[0] * u[0] + u[1] * u[1] < 1.0)) return 0.0;
    if (kind_ == EmitterKind::UniformDisk) return 1.0;
    if (kind_ == EmitterKind::Spot) {
        const double dx = u[0] - center_[0], dy = u[1] - center_[1];
        return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma_ * sigma_));
    }
    return 0.0;
}

double Emitter::pdf(std::span<const double> u) const {
    if (kind_ == EmitterKind::None) return 0.0;
    return profile(u) / norm_;
}

double Emitter::emitted(std::span<const double> u) const {
    if (kind_ == EmitterKind::None) return 0.0;
    return radiance_ * profile(u);
}

std::array<double, 2> Emitter::sample(Rng &rng) const {
    if (kind_ == EmitterKind::UniformDisk) {
        const double r = std::sqrt(rng.uniform());
        const double phi = 2.0 * std::numbers::pi * rng.uniform();
        return {r * std::cos(phi), r * std::sin(phi)};
    }
    if (kind_ == EmitterKind::Spot) {
        for (int i = 0; i < 1000000; ++i) {
            const double x = center_[0] + sigma_ * rng.normal();
            const double y = center_[1] + sigma_ * rng.normal();
            if (x * x + y * y < 1.0) return {x, y};
        }
        throw NumericError("spot emitter rejection sampling failed");
    }
    throw InvalidArgument("scene has no emitter to sample");
}

double RadianceField::value(std::span<const double> u) const {
    if (grid) return grid->value(u[0], u.size() > 1 ? u[1] : 0.0);
    return constant;
}

double ToyScene::incident(std::span<const double> u) const { return field.value(u) + emitter.emitted(u); }

// -------------------------------------------------------------- estimates

Estimate summarize(std::span<const double> values) {
    Estimate e;
    e.n = values.size();
    if (e.n == 0) return e;
    double sum = 0.0;
    for (double v : values) sum += v;
    e.mean = sum / static_cast<double>(e.n);
    if (e.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - e.mean) * (v - e.mean);
        e.sample_variance = ss / static_cast<double>(e.n - 1);
    }
    return e;
}

namespace {

void check_scene(const SamplerModel *model, const ToyScene &scene) {
    if (scene.prior.dim != scene.target.dim()) throw InvalidArgument("scene prior and target dimensions differ");
    if (model && model->dim() != scene.target.dim()) throw InvalidArgument("sampler and scene dimensions differ");
    if (scene.target.dim() == 1 && (scene.emitter.kind() != EmitterKind::None || scene.field.grid))
        throw InvalidArgument("1D scenes support only a constant radiance field");
}

Estimate reparam_impl(const SamplerModel &model, const ToyScene &scene, const Condition &cond, std::size_t n,
                      std::uint64_t seed, bool use_det) {
    if (n == 0) throw InvalidArgument("sample count must be >= 1");
    check_scene(&model, scene);
    const DrawBatch draw = draw_samples(model, scene.prior, cond, n, seed);
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto u = draw.point(i);
        if (!(draw.q[i] > 0.0)) throw NumericError("estimator: prior density is zero at a draw");
        const double det = use_det ? draw.det_j[i] : 1.0;
        const double li = scene.incident(u);
        values[i] = li == 0.0 ? 0.0 : li * scene.target.value(u, cond) * det / draw.q[i];
    }
    Estimate e = summarize(values);
    e.negative_det = draw.negative_det;
    return e;
}

template <typename PdfFn>
Estimate mis_impl(const SamplerModel &model, PdfFn &&phat, const ToyScene &scene, const Condition &cond,
                  std::size_t n, std::uint64_t seed) {
    if (n == 0) throw InvalidArgument("sample count must be >= 1");
    check_scene(&model, scene);
    const std::size_t d = model.dim();
    const bool has_emitter = scene.emitter.kind() != EmitterKind::None;
    const DrawBatch draw = draw_samples(model, scene.prior, cond, n, seed);
    const std::vector<double> p_brdf = phat(std::span<const double>(draw.u));

    std::vector<double> ue;
    if (has_emitter) {
        Rng rng(derive_seed(seed, stream::Emitter));
        ue.resize(n * d);
        for (std::size_t i = 0; i < n; ++i) {
            const auto s = scene.emitter.sample(rng);
            ue[2 * i] = s[0];
            ue[2 * i + 1] = s[1];
        }
    }
    const std::vector<double> p_emit = has_emitter ? phat(std::span<const double>(ue)) : std::vector<double>{};

    std::vector<double> values(n);
    std::size_t violations = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(draw.q[i] > 0.0)) throw NumericError("estimator: prior density is zero at a draw");
        const auto u = draw.point(i);
        const double pe = scene.emitter.pdf(u);
        const Weights wb = power_heuristic(p_brdf[i], pe);
        if (wb.w + wb.w_e != 1.0) ++violations;
        const double li = scene.field.value(u) + wb.w * scene.emitter.emitted(u);
        double v = li == 0.0 ? 0.0 : li * scene.target.value(u, cond) * draw.det_j[i] / draw.q[i];
        if (has_emitter) {
            const std::span<const double> ui(ue.data() + i * d, d);
            const double pe2 = scene.emitter.pdf(ui);
            const Weights we = power_heuristic(p_emit[i], pe2);
            if (we.w + we.w_e != 1.0) ++violations;
            const double le = scene.emitter.emitted(ui);
            if (le != 0.0) v += we.w_e * le * scene.target.value(ui, cond) / pe2;
        }
        values[i] = v;
    }
    Estimate e = summarize(values);
    e.negative_det = draw.negative_det;
    e.weight_sum_violations = violations;
    return e;
}

} // namespace

Estimate estimate_reparam(const SamplerModel &model, const ToyScene &scene, const Condition &cond, std::size_t n,
                          std::uint64_t seed) {
    return reparam_impl(model, scene, cond, n, seed, true);
}

Estimate estimate_reparam_no_det(const SamplerModel &model, const ToyScene &scene, const Condition &cond,
                                 std::size_t n, std::uint64_t seed) {
    return reparam_impl(model, scene, cond, n, seed, false);
}

Weights power_heuristic(double p, double p_e) {
    if (!(p >= 0.0) || !(p_e >= 0.0) || !std::isfinite(p) || !std::isfinite(p_e))
        throw InvalidArgument("power heuristic needs finite nonnegative densities");
    if (p == 0.0 && p_e == 0.0) throw InvalidArgument("power heuristic: both densities are zero");
    Weights r;
    if (p >= p_e) {
        const double t = p_e / p;
        r.w_e = t * t / (1.0 + t * t);
        r.w = 1.0 - r.w_e;
    } else {
        const double t = p / p_e;
        r.w = t * t / (1.0 + t * t);
        r.w_e = 1.0 - r.w;
    }
    return r;
}

Estimate estimate_mis(const SamplerModel &model, const PdfModel &pmodel, const ToyScene &scene,
                      const Condition &cond, std::size_t n, std::uint64_t seed) {
    if (pmodel.domain != model.domain) throw InvalidArgument("pdf model and sampler domains differ");
    return mis_impl(
        model, [&](std::span<const double> u) { return pdf_eval_batch(pmodel, u, cond); }, scene, cond, n, seed);
}

Estimate estimate_mis_constant(const SamplerModel &model, double p_const, const ToyScene &scene,
                               const Condition &cond, std::size_t n, std::uint64_t seed) {
    if (!(p_const > 0.0) || !std::isfinite(p_const)) throw InvalidArgument("constant pdf must be > 0");
    const std::size_t d = model.dim();
    return mis_impl(
        model, [&](std::span<const double> u) { return std::vector<double>(u.size() / d, p_const); }, scene, cond,
        n, seed);
}

Estimate estimate_emitter(const ToyScene &scene, const Condition &cond, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw InvalidArgument("sample count must be >= 1");
    check_scene(nullptr, scene);
    if (scene.emitter.kind() == EmitterKind::None) throw InvalidArgument("emitter sampling needs an emitter");
    if (!scene.field.zero()) throw InvalidArgument("emitter sampling cannot estimate a radiance field");
    Rng rng(derive_seed(seed, stream::Emitter));
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto u = scene.emitter.sample(rng);
        const double le = scene.emitter.emitted(u);
        values[i] = le == 0.0 ? 0.0 : le * scene.target.value(u, cond) / scene.emitter.pdf(u);
    }
    return summarize(values);
}

DrawBatch baseline_uniform_sample(const Condition &, std::size_t n, std::uint64_t seed) {
    Rng rng(derive_seed(seed, stream::Draw));
    DrawBatch b;
    b.dim = 2;
    b.z.resize(2 * n);
    b.u.resize(2 * n);
    b.det_j.assign(n, 1.0);
    b.q.assign(n, 1.0 / std::numbers::pi);
    for (std::size_t i = 0; i < n; ++i) {
        const double r = std::sqrt(rng.uniform());
        const double phi = 2.0 * std::numbers::pi * rng.uniform();
        b.u[2 * i] = b.z[2 * i] = r * std::cos(phi);
        b.u[2 * i + 1] = b.z[2 * i + 1] = r * std::sin(phi);
    }
    return b;
}

Estimate estimate_uniform(const ToyScene &scene, const Condition &cond, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw InvalidArgument("sample count must be >= 1");
    check_scene(nullptr, scene);
    if (scene.target.dim() != 2) throw InvalidArgument("uniform baseline needs a disk target");
    const DrawBatch b = baseline_uniform_sample(cond, n, seed);
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto u = b.point(i);
        const double li = scene.incident(u);
        values[i] = li == 0.0 ? 0.0 : li * scene.target.value(u, cond) / b.q[i];
    }
    return summarize(values);
}

double reference_value(const ToyScene &scene, const Condition &cond, std::size_t resolution) {
    check_scene(nullptr, scene);
    return quadrature_integral(scene.target, cond, [&](std::span<const double> u) { return scene.incident(u); },
                               resolution);
}

std::string to_string(EstimatorMode m) {
    switch (m) {
    case EstimatorMode::Brdf: return "brdf";
    case EstimatorMode::Mis: return "mis";
    case EstimatorMode::Emitter: return "emitter";
    case EstimatorMode::Uniform: return "uniform";
    case EstimatorMode::BiasedNoDet: return "biased_no_det";
    }
    return "brdf";
}

EstimatorMode estimator_mode_from_string(const std::string &s) {
    for (auto m : {EstimatorMode::Brdf, EstimatorMode::Mis, EstimatorMode::Emitter, EstimatorMode::Uniform,
                   EstimatorMode::BiasedNoDet})
        if (to_string(m) == s) return m;
    throw InvalidArgument("unknown estimator mode '" + s + "'");
}

Estimate run_estimator(const EstimatorSetup &s, std::size_t n, std::uint64_t seed) {
    if (!s.scene) throw InvalidArgument("estimator setup has no scene");
    const bool needs_model = s.mode == EstimatorMode::Brdf || s.mode == EstimatorMode::Mis ||
                             s.mode == EstimatorMode::BiasedNoDet;
    if (needs_model && !s.model) throw InvalidArgument("estimator mode needs a sampler");
    switch (s.mode) {
    case EstimatorMode::Brdf: return estimate_reparam(*s.model, *s.scene, s.cond, n, seed);
    case EstimatorMode::BiasedNoDet: return estimate_reparam_no_det(*s.model, *s.scene, s.cond, n, seed);
    case EstimatorMode::Mis:
        if (!s.pmodel) throw InvalidArgument("mis mode needs a pdf model");
        return estimate_mis(*s.model, *s.pmodel, *s.scene, s.cond, n, seed);
    case EstimatorMode::Emitter: return estimate_emitter(*s.scene, s.cond, n, seed);
    case EstimatorMode::Uniform: return estimate_uniform(*s.scene, s.cond, n, seed);
    }
    throw InvalidArgument("unknown estimator mode");
}

double loglog_slope(std::span<const ConvergenceRow> rows) {
    if (rows.size() < 2) throw InvalidArgument("slope needs at least two rows");
    double sx = 0.0, sy = 0.0;
    for (const auto &r : rows) {
        if (!(r.mse > 0.0)) throw NumericError("slope: mse must be positive");
        sx += std::log(static_cast<double>(r.spp));
        sy += std::log(r.mse);
    }
    const double k = static_cast<double>(rows.size());
    const double mx = sx / k, my = sy / k;
    double num = 0.0, den = 0.0;
    for (const auto &r : rows) {
        const double dx = std::log(static_cast<double>(r.spp)) - mx;
        num += dx * (std::log(r.mse) - my);
        den += dx * dx;
    }
    return num / den;
}

ConvergenceRecord convergence_curve(const EstimatorSetup &setup, std::span<const std::size_t> spps,
                                    std::size_t trials, std::uint64_t seed, double reference, bool record_time) {
    if (spps.empty()) throw InvalidArgument("spp list is empty");
    if (trials == 0) throw InvalidArgument("trials must be >= 1");
    for (std::size_t i = 0; i < spps.size(); ++i) {
        if (spps[i] == 0) throw InvalidArgument("spp values must be >= 1");
        if (i > 0 && spps[i] <= spps[i - 1]) throw InvalidArgument("spp list must be strictly increasing");
    }
    ConvergenceRecord rec;
    rec.reference = reference;
    for (std::size_t spp : spps) {
        const auto t0 = std::chrono::steady_clock::now();
        double se = 0.0;
        for (std::size_t t = 0; t < trials; ++t) {
            const Estimate e = run_estimator(setup, spp, derive_seed(seed, stream::Trial, spp * 65536 + t));
            se += (e.mean - reference) * (e.mean - reference);
        }
        const double secs =
            record_time ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() : 0.0;
        rec.rows.push_back({spp, se / static_cast<double>(trials), secs});
    }
    bool positive = rec.rows.size() >= 2;
    for (const auto &r : rec.rows) positive = positive && r.mse > 0.0;
    rec.slope = positive ? loglog_slope(rec.rows) : std::nan("");
    return rec;
}

std::string convergence_csv(const ConvergenceRecord &rec) {
    std::string out = "spp,mse,seconds\n";
    char buf[128];
    for (const auto &r : rec.rows) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", r.spp, r.mse, r.seconds);
        out += buf;
    }
    return out;
}

} // namespace repsample
