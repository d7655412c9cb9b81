#include "reparam.hpp"

#include "dual.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace repsample {

namespace {

constexpr std::size_t kChunk = 256;

// Disk2D output map: v = y + skip * (z, 0) (y_z already softplus-positive),
// u = (v / |v|)_xy, J[i][k] = d u_i / d z_k propagated from the network tangents.
template <typename T>
void disk_output_map(const T y[3], const T yd[2][3], double z0, double z1, bool skip, T u[2], T J[2][2]) {
    using std::sqrt;
    const double s = skip ? 1.0 : 0.0;
    const T v0 = y[0] + s * z0, v1 = y[1] + s * z1, v2 = y[2];
    const T inv = 1.0 / sqrt(v0 * v0 + v1 * v1 + v2 * v2);
    const T n0 = v0 * inv, n1 = v1 * inv, n2 = v2 * inv;
    u[0] = n0;
    u[1] = n1;
    for (int k = 0; k < 2; ++k) {
        const T d0 = yd[k][0] + (k == 0 ? s : 0.0);
        const T d1 = yd[k][1] + (k == 1 ? s : 0.0);
        const T d2 = yd[k][2];
        const T proj = n0 * d0 + n1 * d1 + n2 * d2;
        J[0][k] = (d0 - n0 * proj) * inv;
        J[1][k] = (d1 - n1 * proj) * inv;
    }
}

std::vector<std::vector<double>> encode_conditions(const SamplerModel &model, std::span<const Condition> conds) {
    std::vector<std::vector<double>> enc(conds.size());
    if (!model.cond_freqs) return enc;
    for (std::size_t c = 0; c < conds.size(); ++c) {
        if (!conds[c].omega_o) throw InvalidArgument("conditional sampler requires omega_o");
        const auto &o = *conds[c].omega_o;
        enc[c] = positional_encode(o, *model.cond_freqs);
    }
    return enc;
}

void fill_input(const SamplerModel &model, const double *z, std::size_t count,
                const std::vector<std::vector<double>> &enc, std::size_t first, std::size_t per_cond, Block &input) {
    const std::size_t d = model.dim();
    input.resize(model.input_dim(), count);
    for (std::size_t b = 0; b < count; ++b) {
        const auto col = static_cast<std::size_t>(b);
        for (std::size_t j = 0; j < d; ++j) input(static_cast<std::size_t>(j), col) = z[b * d + j];
        if (model.cond_freqs) {
            const auto &e = enc[(first + b) / per_cond];
            for (std::size_t j = 0; j < e.size(); ++j) input(static_cast<std::size_t>(d + j), col) = e[j];
        }
    }
}

// Output map for one sample from the tape. Returns false if the Disk2D point rounds onto the circle.
bool output_map(const SamplerModel &model, const MlpTape &tape, std::size_t b, const double *z,
                TransformResult &r) {
    const Block &y = tape.output();
    const double s = model.skip_identity ? 1.0 : 0.0;
    if (model.domain == Domain::Line1D) {
        r.u[0] = y(0, b) + s * z[0];
        r.det_j = tape.output_tangent(0)(0, b) + s;
        return true;
    }
    const double yy[3] = {y(0, b), y(1, b), y(2, b)};
    double yd[2][3];
    for (int k = 0; k < 2; ++k)
        for (int j = 0; j < 3; ++j) yd[k][j] = tape.output_tangent(static_cast<std::size_t>(k))(j, b);
    double u[2], J[2][2];
    disk_output_map(yy, yd, z[0], z[1], model.skip_identity, u, J);
    r.u = {u[0], u[1]};
    r.det_j = J[0][0] * J[1][1] - J[0][1] * J[1][0];
    return u[0] * u[0] + u[1] * u[1] < 1.0;
}

const std::array<std::size_t, 2> kWrt{0, 1};

} // namespace

SamplerModel SamplerModel::defensive(Domain domain) {
    SamplerModel m;
    m.kind = SamplerKind::DefensiveMap;
    m.domain = domain;
    m.skip_identity = false;
    return m;
}

SamplerModel make_sampler(const SamplerOptions &options, std::uint64_t seed) {
    if (options.hidden_layers < 1 || options.hidden_features < 1)
        throw InvalidArgument("sampler needs at least one hidden layer of width >= 1");
    SamplerModel m;
    m.domain = options.domain;
    m.alpha = options.alpha.value_or(options.domain == Domain::Disk2D ? 1e-3 : 0.0);
    if (!(m.alpha >= 0.0 && m.alpha < 1.0)) throw InvalidArgument("alpha must lie in [0, 1)");
    m.skip_identity = options.skip_identity.value_or(options.domain == Domain::Line1D);
    if (options.conditional) {
        if (options.cond_freqs < 0) throw InvalidArgument("cond_freqs must be >= 0");
        m.cond_freqs = options.cond_freqs;
    }
    MlpSpec spec;
    spec.layer_sizes.push_back(m.input_dim());
    for (std::size_t i = 0; i < options.hidden_layers; ++i) spec.layer_sizes.push_back(options.hidden_features);
    spec.layer_sizes.push_back(options.domain == Domain::Line1D ? 1 : 3);
    spec.hidden = Activation::SiLU;
    spec.output = options.domain == Domain::Line1D ? OutputActivation::None : OutputActivation::SoftplusLast;
    spec.init = options.init;
    m.net = init_params(spec, seed);
    return m;
}

TransformResult defensive_map(std::span<const double> z) {
    TransformResult r;
    double sq = 0.0;
    for (double v : z) sq += v * v;
    const double inv = 1.0 / std::sqrt(sq + 1.0);
    for (std::size_t j = 0; j < z.size() && j < 2; ++j) r.u[j] = z[j] * inv;
    r.det_j = z.size() == 1 ? inv * inv * inv : 1.0 / ((sq + 1.0) * (sq + 1.0));
    return r;
}

std::vector<double> sampler_input(const SamplerModel &model, std::span<const double> z, const Condition &cond) {
    if (z.size() != model.dim()) throw InvalidArgument("sampler input: z has wrong dimension");
    std::vector<double> in(z.begin(), z.end());
    if (model.cond_freqs) {
        if (!cond.omega_o) throw InvalidArgument("conditional sampler requires omega_o");
        const auto e = positional_encode(*cond.omega_o, *model.cond_freqs);
        in.insert(in.end(), e.begin(), e.end());
    }
    return in;
}

TransformResult transform(const SamplerModel &model, std::span<const double> z, const Condition &cond) {
    if (z.size() != model.dim()) throw InvalidArgument("transform: z has wrong dimension");
    for (double v : z)
        if (!std::isfinite(v)) throw InvalidArgument("transform: z must be finite");
    if (model.kind == SamplerKind::DefensiveMap) return defensive_map(z);
    const auto in = sampler_input(model, z, cond);
    MlpTape tape;
    Block x(in.size(), 1);
    for (std::size_t i = 0; i < in.size(); ++i) x(i, 0) = in[i];
    tape.forward(model.net, x, std::span(kWrt.data(), model.dim()));
    TransformResult r;
    const bool inside = output_map(model, tape, 0, z.data(), r);
    if (!std::isfinite(r.u[0]) || !std::isfinite(r.u[1]) || !std::isfinite(r.det_j))
        throw NumericError("transform: non-finite network output");
    if (!inside) throw NumericError("transform: output rounds onto the unit circle");
    return r;
}

TransformBatch transform_batch(const SamplerModel &model, const PriorBatch &z, std::span<const Condition> conds) {
    if (z.dim != model.dim()) throw InvalidArgument("transform_batch: prior dimension mismatch");
    if (conds.empty() || z.size() % conds.size() != 0)
        throw InvalidArgument("transform_batch: sample count must be a multiple of the condition count");
    const std::size_t n = z.size(), d = model.dim();
    TransformBatch out;
    out.dim = d;
    out.u.resize(n * d);
    out.det_j.resize(n);
    const std::size_t per_cond = n / conds.size();
    if (model.kind == SamplerKind::DefensiveMap) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto r = defensive_map(z.point(i));
            for (std::size_t j = 0; j < d; ++j) out.u[i * d + j] = r.u[j];
            out.det_j[i] = r.det_j;
        }
        return out;
    }
    const auto enc = encode_conditions(model, conds);
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    parallel_for(chunks, [&](std::size_t c) {
        thread_local MlpTape tape;
        thread_local Block input;
        const std::size_t begin = c * kChunk, end = std::min(n, begin + kChunk);
        fill_input(model, z.z.data() + begin * d, end - begin, enc, begin, per_cond, input);
        tape.forward(model.net, input, std::span(kWrt.data(), d));
        for (std::size_t i = begin; i < end; ++i) {
            TransformResult r;
            const bool inside = output_map(model, tape, static_cast<std::size_t>(i - begin), z.z.data() + i * d, r);
            if (!std::isfinite(r.u[0]) || !std::isfinite(r.u[1]) || !std::isfinite(r.det_j))
                throw NumericError("transform: non-finite network output");
            if (!inside) throw NumericError("transform: output rounds onto the unit circle");
            for (std::size_t j = 0; j < d; ++j) out.u[i * d + j] = r.u[j];
            out.det_j[i] = r.det_j;
        }
    });
    return out;
}

// ------------------------------------------------------------------ losses

TrainBatch make_train_batch(const TargetDensity &target, const Prior &prior, std::size_t n_cond, std::size_t n_z,
                            std::uint64_t seed) {
    return make_train_batch(target.conditional(), prior, n_cond, n_z, seed);
}

TrainBatch make_train_batch(bool conditional, const Prior &prior, std::size_t n_cond, std::size_t n_z,
                            std::uint64_t seed) {
    if (n_cond == 0 || n_z == 0) throw InvalidArgument("batch sizes must be positive");
    Rng rng(seed);
    TrainBatch batch;
    std::size_t total = n_cond * n_z;
    if (conditional) {
        batch.conditions.reserve(n_cond);
        for (std::size_t c = 0; c < n_cond; ++c) batch.conditions.push_back(sample_condition(rng));
    } else {
        batch.conditions.push_back(Condition::none());
    }
    batch.z.dim = prior.dim;
    batch.z.z.resize(total * prior.dim);
    batch.z.q.resize(total);
    for (std::size_t i = 0; i < total; ++i) {
        std::span<double> zi(batch.z.z.data() + i * prior.dim, prior.dim);
        prior.sample(rng, zi);
        batch.z.q[i] = prior.pdf(zi);
    }
    return batch;
}

namespace {

struct ChunkLoss {
    double sum = 0.0;
    std::vector<double> grad;
    std::size_t floored = 0;
    std::size_t negative = 0;
};

// Adjoint of the per-sample loss with respect to (u, J); returns the term.
struct SampleLoss {
    double term = 0.0;
    bool floored = false;
    double u_adj[2] = {0.0, 0.0};
    double j_adj[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
};

SampleLoss sample_loss(const TargetDensity &target, const Condition &cond, const TransformResult &t,
                       const double J[2][2], bool inside, std::span<const double> z, double alpha, LossForm form,
                       double scale) {
    SampleLoss s;
    const std::size_t d = z.size();
    const double a_eff = form == LossForm::Nll ? 0.0 : alpha;
    double defensive = 0.0;
    if (a_eff > 0.0) {
        const TransformResult di = defensive_map(z);
        defensive = target.value(std::span(di.u.data(), d), cond) * di.det_j;
    }
    DensityEval fe;
    double D = 0.0, dD = 0.0;
    if (inside) {
        fe = target.eval(std::span(t.u.data(), d), cond);
        if (form == LossForm::RepPrime) {
            D = std::max(t.det_j, 0.0);
            dD = t.det_j > 0.0 ? 1.0 : 0.0;
        } else {
            D = std::abs(t.det_j);
            dD = t.det_j > 0.0 ? 1.0 : (t.det_j < 0.0 ? -1.0 : 0.0);
        }
    }
    double arg = (1.0 - a_eff) * fe.value * D + a_eff * defensive;
    if (!(arg >= kLogFloor)) {
        if (std::isnan(arg)) throw NumericError("loss: NaN log argument");
        s.term = -std::log(kLogFloor);
        s.floored = true;
        return s;
    }
    s.term = -std::log(arg);
    const double g = -scale / arg * (1.0 - a_eff);
    for (std::size_t i = 0; i < d; ++i) s.u_adj[i] = g * D * fe.grad[i];
    const double jd = g * fe.value * dD; // d loss / d det
    if (d == 1) {
        s.j_adj[0][0] = jd;
    } else {
        s.j_adj[0][0] = jd * J[1][1];
        s.j_adj[0][1] = -jd * J[1][0];
        s.j_adj[1][0] = -jd * J[0][1];
        s.j_adj[1][1] = jd * J[0][0];
    }
    return s;
}

void loss_chunk(const SamplerModel &model, const TargetDensity &target, const TrainBatch &batch,
                const std::vector<std::vector<double>> &enc, std::size_t begin, std::size_t end, LossForm form,
                bool want_grad, double scale, ChunkLoss &out, std::vector<double> &terms) {
    thread_local MlpTape tape;
    thread_local Block input, y_adj;
    thread_local std::vector<Block> yd_adj;
    const std::size_t d = model.dim();
    const std::size_t per_cond = batch.per_condition();
    const std::size_t count = end - begin;
    const bool net = model.kind == SamplerKind::Network;

    if (net) {
        fill_input(model, batch.z.z.data() + begin * d, count, enc, begin, per_cond, input);
        tape.forward(model.net, input, std::span(kWrt.data(), d));
        if (want_grad) {
            const auto out_dim = static_cast<std::size_t>(model.net.spec.output_dim());
            y_adj.set_zero(out_dim, count);
            yd_adj.resize(d);
            for (auto &m : yd_adj) m.set_zero(out_dim, count);
        }
    }

    for (std::size_t i = begin; i < end; ++i) {
        const auto b = static_cast<std::size_t>(i - begin);
        const double *z = batch.z.z.data() + i * d;
        const Condition &cond = batch.conditions[i / per_cond];
        TransformResult t;
        double J[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
        bool inside = true;
        if (net) {
            inside = output_map(model, tape, b, z, t);
            if (d == 1) {
                J[0][0] = t.det_j;
            } else {
                const Block &y = tape.output();
                const double yy[3] = {y(0, b), y(1, b), y(2, b)};
                double yd[2][3];
                for (int k = 0; k < 2; ++k)
                    for (int j = 0; j < 3; ++j) yd[k][j] = tape.output_tangent(static_cast<std::size_t>(k))(j, b);
                double u[2];
                disk_output_map(yy, yd, z[0], z[1], model.skip_identity, u, J);
            }
        } else {
            t = defensive_map(std::span(z, d));
            if (d == 1) J[0][0] = t.det_j;
        }
        if (!std::isfinite(t.u[0]) || !std::isfinite(t.u[1]) || !std::isfinite(t.det_j))
            throw NumericError("loss: non-finite sampler output");
        if (t.det_j < 0.0) ++out.negative;

        const SampleLoss s =
            sample_loss(target, cond, t, J, inside, std::span(z, d), model.alpha, form, scale);
        out.sum += s.term;
        terms[i] = s.term;
        if (s.floored) {
            ++out.floored;
            continue;
        }
        if (!want_grad || !net) continue;

        if (d == 1) {
            y_adj(0, b) = s.u_adj[0];
            yd_adj[0](0, b) = s.j_adj[0][0];
            continue;
        }
        // Pull (u, J) adjoints back to (y, dy/dz) with 9-way forward-mode duals.
        using D9 = Dual<9>;
        const Block &y = tape.output();
        D9 yy[3], yd[2][3], u[2], Jd[2][2];
        for (int j = 0; j < 3; ++j) yy[j] = D9::variable(y(j, b), static_cast<std::size_t>(j));
        for (int k = 0; k < 2; ++k)
            for (int j = 0; j < 3; ++j)
                yd[k][j] = D9::variable(tape.output_tangent(static_cast<std::size_t>(k))(j, b),
                                        static_cast<std::size_t>(3 + 3 * k + j));
        disk_output_map(yy, yd, z[0], z[1], model.skip_identity, u, Jd);
        for (std::size_t v = 0; v < 9; ++v) {
            double acc = s.u_adj[0] * u[0].d[v] + s.u_adj[1] * u[1].d[v];
            for (int r = 0; r < 2; ++r)
                for (int k = 0; k < 2; ++k) acc += s.j_adj[r][k] * Jd[r][k].d[v];
            if (v < 3) {
                y_adj(static_cast<std::size_t>(v), b) = acc;
            } else {
                const std::size_t k = (v - 3) / 3;
                yd_adj[k](static_cast<std::size_t>((v - 3) % 3), b) = acc;
            }
        }
    }

    if (want_grad && net) {
        out.grad.assign(model.net.values.size(), 0.0);
        tape.backward(model.net, y_adj, yd_adj, out.grad);
    }
}

} // namespace

LossResult evaluate_loss(const SamplerModel &model, const TargetDensity &target, const TrainBatch &batch,
                         LossForm form, bool want_grad) {
    if (batch.z.dim != model.dim() || target.dim() != model.dim())
        throw InvalidArgument("loss: sampler, prior and target dimensions must agree");
    if (batch.conditions.empty() || batch.z.size() == 0 || batch.z.size() % batch.conditions.size() != 0)
        throw InvalidArgument("loss: malformed batch");
    if (!(model.alpha >= 0.0 && model.alpha < 1.0)) throw InvalidArgument("loss: alpha must lie in [0, 1)");
    const std::size_t n = batch.z.size();
    const auto enc = encode_conditions(model, batch.conditions);
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    std::vector<ChunkLoss> parts(chunks);
    LossResult r;
    r.terms.resize(n);
    const double scale = 1.0 / static_cast<double>(n);
    parallel_for(chunks, [&](std::size_t c) {
        const std::size_t begin = c * kChunk, end = std::min(n, begin + kChunk);
        loss_chunk(model, target, batch, enc, begin, end, form, want_grad, scale, parts[c], r.terms);
    });
    double sum = 0.0;
    if (want_grad && model.kind == SamplerKind::Network) r.grad.assign(model.net.values.size(), 0.0);
    for (const auto &p : parts) {
        sum += p.sum;
        r.floored += p.floored;
        r.negative_det += p.negative;
        if (!r.grad.empty())
            for (std::size_t j = 0; j < r.grad.size(); ++j) r.grad[j] += p.grad[j];
    }
    r.loss = sum * scale;
    return r;
}

LossResult loss_rep_prime(const SamplerModel &model, const TargetDensity &target, const TrainBatch &batch) {
    return evaluate_loss(model, target, batch, LossForm::RepPrime, true);
}

LossResult loss_nll(const SamplerModel &model, const TargetDensity &target, const TrainBatch &batch) {
    return evaluate_loss(model, target, batch, LossForm::Nll, true);
}

// ---------------------------------------------------------------- training

void TrainConfig::validate() const {
    if (steps == 0) throw InvalidArgument("steps must be positive");
    if (batch_conditions == 0) throw InvalidArgument("batch_conditions must be positive");
    if (batch_z == 0) throw InvalidArgument("batch_z must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidArgument("learning_rate must be > 0");
    if (max_grad_norm && !(*max_grad_norm > 0.0)) throw InvalidArgument("max_grad_norm must be > 0");
}

TrainedSampler train_sampler(const TargetDensity &target, const Prior &prior, SamplerModel model,
                             const TrainConfig &config) {
    config.validate();
    prior.validate();
    if (model.kind != SamplerKind::Network) throw InvalidArgument("train_sampler: model has no parameters");
    if (prior.dim != model.dim() || target.dim() != model.dim())
        throw InvalidArgument("train_sampler: sampler, prior and target dimensions must agree");
    if (target.conditional() != model.conditional())
        throw InvalidArgument("train_sampler: conditional target needs a conditional sampler and vice versa");

    AdamState adam(model.net.values.size(), config.learning_rate, config.max_grad_norm);
    TrainedSampler out;
    for (std::size_t step = 0; step < config.steps; ++step) {
        const TrainBatch batch = make_train_batch(target, prior, config.batch_conditions, config.batch_z,
                                                  derive_seed(config.seed, stream::TrainStep, step));
        LossResult lr;
        try {
            lr = evaluate_loss(model, target, batch, config.loss, true);
            if (!std::isfinite(lr.loss)) throw NumericError("non-finite loss");
            adam_step(adam, model.net.values, lr.grad);
        } catch (const TrainingDiverged &e) {
            throw TrainingDiverged(step, "non-finite gradient");
        } catch (const NumericError &e) {
            throw TrainingDiverged(step, e.what());
        }
        out.log.total_floored += lr.floored;
        out.log.final_loss = lr.loss;
        if (step % 10 == 0 || step + 1 == config.steps) out.log.rows.push_back({step, lr.loss, lr.floored});
    }
    out.model = std::move(model);
    return out;
}

TrainedSampler train_sampler(const TargetDensity &target, const Prior &prior, const SamplerOptions &options,
                             const TrainConfig &config) {
    return train_sampler(target, prior, make_sampler(options, config.seed), config);
}

// --------------------------------------------------------------- inference

DrawBatch draw_samples(const SamplerModel &model, const Prior &prior, const Condition &cond, std::size_t n,
                       std::uint64_t seed) {
    if (prior.dim != model.dim()) throw InvalidArgument("draw_samples: prior dimension mismatch");
    PriorBatch z = prior_sample(prior, n, derive_seed(seed, stream::Draw));
    const TransformBatch t = transform_batch(model, z, std::span(&cond, 1));
    DrawBatch out;
    out.dim = model.dim();
    out.z = std::move(z.z);
    out.q = std::move(z.q);
    out.u = t.u;
    out.det_j.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (t.det_j[i] < 0.0) ++out.negative_det;
        out.det_j[i] = std::abs(t.det_j[i]);
    }
    return out;
}

} // namespace repsample
