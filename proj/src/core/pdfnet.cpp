#include "pdfnet.hpp"

#include "error.hpp"
#include "parallel.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>

namespace repsample {

namespace {

constexpr std::size_t kChunk = 256;

void check_domain(const PdfModel &pm, const double *u) {
    const std::size_t d = pm.dim();
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        if (!std::isfinite(u[j])) throw DomainError("pdf: point is not finite");
        sq += u[j] * u[j];
    }
    if (pm.domain == Domain::Disk2D && !(sq < 1.0)) throw DomainError("pdf: point outside the unit disk");
}

std::vector<double> encode(const PdfModel &pm, const Condition &cond) {
    if (!pm.cond_freqs) return {};
    if (!cond.omega_o) throw InvalidArgument("conditional pdf model requires omega_o");
    return positional_encode(*cond.omega_o, *pm.cond_freqs);
}

void fill(const PdfModel &pm, const double *u, std::size_t count, const std::vector<double> &enc, Block &in) {
    const std::size_t d = pm.dim();
    in.resize(pm.input_dim(), count);
    for (std::size_t b = 0; b < count; ++b) {
        for (std::size_t j = 0; j < d; ++j) in(j, b) = u[b * d + j];
        for (std::size_t j = 0; j < enc.size(); ++j) in(d + j, b) = enc[j];
    }
}

} // namespace

PdfModel make_pdf_model(const SamplerModel &sampler, const PdfOptions &options, std::uint64_t seed) {
    if (options.hidden_layers < 1 || options.hidden_features < 1)
        throw InvalidArgument("pdf model needs at least one hidden layer of width >= 1");
    PdfModel pm;
    pm.domain = sampler.domain;
    pm.cond_freqs = sampler.cond_freqs;
    MlpSpec spec;
    spec.layer_sizes.push_back(pm.input_dim());
    for (std::size_t i = 0; i < options.hidden_layers; ++i) spec.layer_sizes.push_back(options.hidden_features);
    spec.layer_sizes.push_back(1);
    spec.hidden = Activation::ReLU;
    spec.output = OutputActivation::Exp;
    // Zero final layer: p starts as the constant 1.
    spec.init = InitKind::Identity;
    pm.net = init_params(spec, seed);
    return pm;
}

double pdf_eval(const PdfModel &pm, std::span<const double> u, const Condition &cond) {
    if (u.size() != pm.dim()) throw InvalidArgument("pdf_eval: point has wrong dimension");
    check_domain(pm, u.data());
    std::vector<double> in(u.begin(), u.end());
    const auto e = encode(pm, cond);
    in.insert(in.end(), e.begin(), e.end());
    const double p = forward(pm.net, in)[0];
    if (!(p > 0.0) || !std::isfinite(p)) throw NumericError("pdf_eval: non-positive or non-finite output");
    return p;
}

std::vector<double> pdf_eval_batch(const PdfModel &pm, std::span<const double> u, const Condition &cond) {
    const std::size_t d = pm.dim();
    if (u.size() % d != 0) throw InvalidArgument("pdf_eval_batch: coordinate count is not a multiple of dim");
    const std::size_t n = u.size() / d;
    for (std::size_t i = 0; i < n; ++i) check_domain(pm, u.data() + i * d);
    const auto enc = encode(pm, cond);
    std::vector<double> out(n);
    parallel_for((n + kChunk - 1) / kChunk, [&](std::size_t c) {
        thread_local MlpTape tape;
        thread_local Block in;
        const std::size_t begin = c * kChunk, end = std::min(n, begin + kChunk);
        fill(pm, u.data() + begin * d, end - begin, enc, in);
        tape.forward(pm.net, in);
        for (std::size_t i = begin; i < end; ++i) out[i] = tape.output()(0, i - begin);
    });
    for (double p : out)
        if (!(p > 0.0) || !std::isfinite(p)) throw NumericError("pdf_eval: non-positive or non-finite output");
    return out;
}

PdfLossResult loss_pdf(const PdfModel &pm, const SamplerModel &sampler, const TrainBatch &batch, bool want_grad) {
    if (pm.domain != sampler.domain || pm.cond_freqs != sampler.cond_freqs)
        throw InvalidArgument("loss_pdf: pdf model does not mirror the sampler");
    const TransformBatch t = transform_batch(sampler, batch.z, batch.conditions);
    const std::size_t n = t.size(), d = sampler.dim();
    const std::size_t per_cond = batch.per_condition();
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    const double scale = 1.0 / static_cast<double>(n);

    struct Part {
        double sum = 0.0;
        std::vector<double> grad;
    };
    std::vector<Part> parts(chunks);
    parallel_for(chunks, [&](std::size_t c) {
        thread_local MlpTape tape;
        thread_local Block in, adj;
        const std::size_t begin = c * kChunk, end = std::min(n, begin + kChunk);
        const std::size_t count = end - begin;
        // A chunk may straddle condition blocks; fill column by column.
        in.resize(pm.input_dim(), count);
        std::size_t last = static_cast<std::size_t>(-1);
        std::vector<double> enc;
        for (std::size_t i = begin; i < end; ++i) {
            const std::size_t ci = i / per_cond;
            if (ci != last) {
                enc = encode(pm, batch.conditions[ci]);
                last = ci;
            }
            for (std::size_t j = 0; j < d; ++j) in(j, i - begin) = t.u[i * d + j];
            for (std::size_t j = 0; j < enc.size(); ++j) in(d + j, i - begin) = enc[j];
        }
        tape.forward(pm.net, in);
        Part &part = parts[c];
        adj.resize(1, count);
        for (std::size_t i = begin; i < end; ++i) {
            const double det = std::abs(t.det_j[i]);
            const double r = tape.output()(0, i - begin) * det - batch.z.q[i];
            part.sum += r * r;
            adj(0, i - begin) = 2.0 * r * det * scale;
        }
        if (want_grad) {
            part.grad.assign(pm.net.values.size(), 0.0);
            tape.backward(pm.net, adj, {}, part.grad);
        }
    });
    PdfLossResult r;
    double sum = 0.0;
    if (want_grad) r.grad.assign(pm.net.values.size(), 0.0);
    for (const auto &p : parts) {
        sum += p.sum;
        for (std::size_t j = 0; j < r.grad.size(); ++j) r.grad[j] += p.grad[j];
    }
    r.loss = sum * scale;
    if (!std::isfinite(r.loss)) throw NumericError("loss_pdf: non-finite loss");
    return r;
}

void PdfTrainConfig::validate() const {
    if (steps == 0) throw InvalidArgument("steps must be positive");
    if (batch_conditions == 0) throw InvalidArgument("batch_conditions must be positive");
    if (batch_z == 0) throw InvalidArgument("batch_z must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidArgument("learning_rate must be > 0");
    if (max_grad_norm && !(*max_grad_norm > 0.0)) throw InvalidArgument("max_grad_norm must be > 0");
}

TrainedPdf train_pdf(const SamplerModel &sampler, const Prior &prior, const PdfOptions &options,
                     const PdfTrainConfig &config) {
    config.validate();
    prior.validate();
    if (prior.dim != sampler.dim()) throw InvalidArgument("train_pdf: prior and sampler dimensions must agree");
    TrainedPdf out;
    out.model = make_pdf_model(sampler, options, derive_seed(config.seed, stream::PdfTrain));
    PdfModel &pm = out.model;
    AdamState adam(pm.net.values.size(), config.learning_rate, config.max_grad_norm);
    for (std::size_t step = 0; step < config.steps; ++step) {
        const TrainBatch batch = make_train_batch(sampler.conditional(), prior, config.batch_conditions,
                                                  config.batch_z, derive_seed(config.seed, stream::PdfTrain, step + 1));
        PdfLossResult lr;
        try {
            lr = loss_pdf(pm, sampler, batch, true);
            adam_step(adam, pm.net.values, lr.grad);
        } catch (const TrainingDiverged &) {
            throw TrainingDiverged(step, "non-finite gradient");
        } catch (const NumericError &e) {
            throw TrainingDiverged(step, e.what());
        }
        out.log.final_loss = lr.loss;
        if (step % 10 == 0 || step + 1 == config.steps) out.log.rows.push_back({step, lr.loss, 0});
    }
    return out;
}

} // namespace repsample
