#include "nnet.hpp"

#include "error.hpp"
#include "rng.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <numbers>
#include <string>

namespace repsample {

namespace {

enum class Unit { Identity, SiLU, ReLU, Exp, Softplus };

Unit unit_kind(const MlpSpec &spec, std::size_t layer, std::size_t row) {
    if (layer + 1 < spec.num_layers()) return spec.hidden == Activation::SiLU ? Unit::SiLU : Unit::ReLU;
    switch (spec.output) {
    case OutputActivation::None: return Unit::Identity;
    case OutputActivation::Exp: return Unit::Exp;
    case OutputActivation::SoftplusLast: return row + 1 == spec.output_dim() ? Unit::Softplus : Unit::Identity;
    }
    return Unit::Identity;
}

using v4d = double __attribute__((vector_size(32)));
using v4i = std::int64_t __attribute__((vector_size(32)));
constexpr std::size_t W4 = 4;

inline v4d load4(const double *p) {
    v4d v;
    __builtin_memcpy(&v, p, sizeof v);
    return v;
}
inline void store4(double *p, v4d v) { __builtin_memcpy(p, &v, sizeof v); }
inline v4d splat4(double x) { return v4d{x, x, x, x}; }

// Branch-free exp, scalar or 4-wide. Accurate to a few ulp on [-700, 700];
// arguments are clamped to that range.
template <typename V, typename I> inline V fast_exp_t(V x) {
    constexpr double log2e = 1.4426950408889634;
    constexpr double ln2_hi = 6.93147180369123816490e-01;
    constexpr double ln2_lo = 1.90821492927058770002e-10;
    constexpr double shifter = 0x1.8p52;
    const V lo = V{} - 700.0, hi = V{} + 700.0;
    x = x < lo ? lo : x;
    x = x > hi ? hi : x;
    V kd = x * log2e + shifter;
    const I kbits = std::bit_cast<I>(kd);
    kd = kd - shifter;
    const V r = (x - kd * ln2_hi) - kd * ln2_lo;
    V p = r * (1.0 / 6227020800.0) + 1.0 / 479001600.0;
    p = p * r + 1.0 / 39916800.0;
    p = p * r + 1.0 / 3628800.0;
    p = p * r + 1.0 / 362880.0;
    p = p * r + 1.0 / 40320.0;
    p = p * r + 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    const I k = kbits - std::bit_cast<std::int64_t>(shifter);
    return p * std::bit_cast<V>((k + 1023) << 52);
}

inline double fast_exp(double x) { return fast_exp_t<double, std::int64_t>(x); }
inline v4d fast_exp(v4d x) { return fast_exp_t<v4d, v4i>(x); }

inline double sigmoid(double x) { return 1.0 / (1.0 + fast_exp(-x)); }

struct UnitEval {
    double value, d1, d2;
};

inline UnitEval eval_unit(Unit kind, double x) {
    switch (kind) {
    case Unit::Identity: return {x, 1.0, 0.0};
    case Unit::SiLU: {
        const double s = sigmoid(x);
        return {x * s, s * (1.0 + x * (1.0 - s)), s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s))};
    }
    case Unit::ReLU: return x > 0.0 ? UnitEval{x, 1.0, 0.0} : UnitEval{0.0, 0.0, 0.0};
    case Unit::Exp: {
        const double e = fast_exp(x);
        return {e, e, e};
    }
    case Unit::Softplus: {
        const double s = sigmoid(x);
        return {std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))), s, s * (1.0 - s)};
    }
    }
    return {x, 1.0, 0.0};
}

} // namespace

void MlpSpec::validate() const {
    if (layer_sizes.size() < 3)
        throw InvalidArgument("MlpSpec needs at least one hidden layer (got " + std::to_string(layer_sizes.size()) +
                              " layer sizes)");
    for (std::size_t s : layer_sizes)
        if (s == 0) throw InvalidArgument("MlpSpec layer sizes must be >= 1");
}

std::size_t MlpSpec::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) n += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
    return n;
}

std::size_t MlpSpec::weight_offset(std::size_t layer) const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layer; ++l) n += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
    return n;
}

std::size_t MlpSpec::bias_offset(std::size_t layer) const {
    return weight_offset(layer) + layer_sizes[layer] * layer_sizes[layer + 1];
}

namespace {

// a[o] = bias[o] + sum_i W[o * so + i * si] h[i], 16 batch columns at a time.
void lincomb(const double *W, std::size_t so, std::size_t si, const double *bias, std::size_t out, std::size_t in,
             const Block &h, Block &a) {
    const std::size_t n = h.cols();
    a.resize(out, n);
    std::size_t c0 = 0;
    for (; c0 + 4 * W4 <= n; c0 += 4 * W4) {
        std::size_t o = 0;
        for (; o + 2 <= out; o += 2) {
            const v4d b0 = splat4(bias ? bias[o] : 0.0), b1 = splat4(bias ? bias[o + 1] : 0.0);
            v4d a0 = b0, a1 = b0, a2 = b0, a3 = b0;
            v4d e0 = b1, e1 = b1, e2 = b1, e3 = b1;
            const double *w0 = W + o * so, *w1 = W + (o + 1) * so;
            for (std::size_t i = 0; i < in; ++i) {
                const v4d u = splat4(w0[i * si]), v = splat4(w1[i * si]);
                const double *hr = h.row(i) + c0;
                const v4d h0 = load4(hr), h1 = load4(hr + 4), h2 = load4(hr + 8), h3 = load4(hr + 12);
                a0 += u * h0;
                a1 += u * h1;
                a2 += u * h2;
                a3 += u * h3;
                e0 += v * h0;
                e1 += v * h1;
                e2 += v * h2;
                e3 += v * h3;
            }
            double *ar = a.row(o) + c0, *er = a.row(o + 1) + c0;
            store4(ar, a0);
            store4(ar + 4, a1);
            store4(ar + 8, a2);
            store4(ar + 12, a3);
            store4(er, e0);
            store4(er + 4, e1);
            store4(er + 8, e2);
            store4(er + 12, e3);
        }
        for (; o < out; ++o) {
            const v4d b0 = splat4(bias ? bias[o] : 0.0);
            v4d a0 = b0, a1 = b0, a2 = b0, a3 = b0;
            for (std::size_t i = 0; i < in; ++i) {
                const v4d w = splat4(W[o * so + i * si]);
                const double *hr = h.row(i) + c0;
                a0 += w * load4(hr);
                a1 += w * load4(hr + 4);
                a2 += w * load4(hr + 8);
                a3 += w * load4(hr + 12);
            }
            double *ar = a.row(o) + c0;
            store4(ar, a0);
            store4(ar + 4, a1);
            store4(ar + 8, a2);
            store4(ar + 12, a3);
        }
    }
    for (std::size_t o = 0; o < out; ++o)
        for (std::size_t c = c0; c < n; ++c) {
            double acc = bias ? bias[o] : 0.0;
            for (std::size_t i = 0; i < in; ++i) acc += W[o * so + i * si] * h(i, c);
            a(o, c) = acc;
        }
}

// a = W h + b, W row-major out x in.
void affine(const double *W, const double *bias, std::size_t out, std::size_t in, const Block &h, Block &a) {
    lincomb(W, in, 1, bias, out, in, h, a);
}

// g = W^T a.
void affine_transpose(const double *W, std::size_t out, std::size_t in, const Block &a, Block &g) {
    lincomb(W, 1, in, nullptr, in, out, a, g);
}

inline double hsum(v4d a, v4d b) { return ((a[0] + b[0]) + (a[1] + b[1])) + ((a[2] + b[2]) + (a[3] + b[3])); }

// Fixed-order reductions over the batch: two 4-lane accumulators, then the tail.
inline double batch_dot(const double *x, const double *y, std::size_t n) {
    v4d s0 = {}, s1 = {};
    std::size_t c = 0;
    for (; c + 2 * W4 <= n; c += 2 * W4) {
        s0 += load4(x + c) * load4(y + c);
        s1 += load4(x + c + 4) * load4(y + c + 4);
    }
    double tail = 0.0;
    for (; c < n; ++c) tail += x[c] * y[c];
    return hsum(s0, s1) + tail;
}

inline double batch_sum(const double *x, std::size_t n) {
    v4d s0 = {}, s1 = {};
    std::size_t c = 0;
    for (; c + 2 * W4 <= n; c += 2 * W4) {
        s0 += load4(x + c);
        s1 += load4(x + c + 4);
    }
    double tail = 0.0;
    for (; c < n; ++c) tail += x[c];
    return hsum(s0, s1) + tail;
}

// gW += a h^T, two rows of a per pass; each entry matches batch_dot exactly.
void outer_accumulate(const Block &a, const Block &h, double *gW) {
    const std::size_t out = a.rows(), in = h.rows(), n = a.cols();
    std::size_t o = 0;
    for (; o + 2 <= out; o += 2) {
        const double *x0 = a.row(o), *x1 = a.row(o + 1);
        for (std::size_t i = 0; i < in; ++i) {
            const double *hr = h.row(i);
            v4d s00 = {}, s01 = {}, s10 = {}, s11 = {};
            std::size_t c = 0;
            for (; c + 2 * W4 <= n; c += 2 * W4) {
                const v4d h0 = load4(hr + c), h1 = load4(hr + c + 4);
                s00 += load4(x0 + c) * h0;
                s01 += load4(x0 + c + 4) * h1;
                s10 += load4(x1 + c) * h0;
                s11 += load4(x1 + c + 4) * h1;
            }
            double t0 = 0.0, t1 = 0.0;
            for (; c < n; ++c) {
                t0 += x0[c] * hr[c];
                t1 += x1[c] * hr[c];
            }
            gW[o * in + i] += hsum(s00, s01) + t0;
            gW[(o + 1) * in + i] += hsum(s10, s11) + t1;
        }
    }
    for (; o < out; ++o)
        for (std::size_t i = 0; i < in; ++i) gW[o * in + i] += batch_dot(a.row(o), h.row(i), n);
}

void activate_row(Unit kind, const double *a, double *y, double *d1, double *d2, std::size_t n) {
    switch (kind) {
    case Unit::Identity:
        std::copy(a, a + n, y);
        std::fill(d1, d1 + n, 1.0);
        if (d2) std::fill(d2, d2 + n, 0.0);
        return;
    case Unit::SiLU: {
        std::size_t c = 0;
        for (; c + W4 <= n; c += W4) {
            const v4d x = load4(a + c);
            const v4d s = 1.0 / (1.0 + fast_exp(-x));
            store4(y + c, x * s);
            store4(d1 + c, s * (1.0 + x * (1.0 - s)));
            if (d2) store4(d2 + c, s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s)));
        }
        for (; c < n; ++c) {
            const UnitEval e = eval_unit(kind, a[c]);
            y[c] = e.value;
            d1[c] = e.d1;
            if (d2) d2[c] = e.d2;
        }
        return;
    }
    default:
        for (std::size_t c = 0; c < n; ++c) {
            const UnitEval e = eval_unit(kind, a[c]);
            y[c] = e.value;
            d1[c] = e.d1;
            if (d2) d2[c] = e.d2;
        }
        return;
    }
}

} // namespace

void MlpTape::forward(const MlpParams &params, const Block &inputs, std::span<const std::size_t> wrt) {
    const MlpSpec &spec = params.spec;
    const std::size_t layers = spec.num_layers();
    if (inputs.rows() != spec.input_dim())
        throw InvalidArgument("MLP input has " + std::to_string(inputs.rows()) + " rows, expected " +
                              std::to_string(spec.input_dim()));
    if (params.values.size() != spec.param_count()) throw InvalidArgument("MLP parameter vector has wrong length");
    for (std::size_t idx : wrt)
        if (idx >= spec.input_dim()) throw InvalidArgument("Jacobian index out of range");

    const std::size_t n = inputs.cols();
    input_ = inputs;
    wrt_.assign(wrt.begin(), wrt.end());
    const std::size_t nt = wrt_.size();
    pre_.resize(layers);
    post_.resize(layers);
    deriv1_.resize(layers);
    deriv2_.resize(layers);
    pre_tan_.resize(nt);
    post_tan_.resize(nt);
    for (std::size_t k = 0; k < nt; ++k) {
        pre_tan_[k].resize(layers);
        post_tan_[k].resize(layers);
    }

    const double *p = params.values.data();
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t in = spec.layer_sizes[l];
        const std::size_t out = spec.layer_sizes[l + 1];
        const double *W = p + spec.weight_offset(l);
        const Block &h = l == 0 ? input_ : post_[l - 1];
        affine(W, p + spec.bias_offset(l), out, in, h, pre_[l]);

        post_[l].resize(out, n);
        deriv1_[l].resize(out, n);
        if (nt > 0) deriv2_[l].resize(out, n);
        for (std::size_t r = 0; r < out; ++r)
            activate_row(unit_kind(spec, l, r), pre_[l].row(r), post_[l].row(r), deriv1_[l].row(r),
                         nt > 0 ? deriv2_[l].row(r) : nullptr, n);

        for (std::size_t k = 0; k < nt; ++k) {
            Block &at = pre_tan_[k][l];
            if (l == 0) {
                at.resize(out, n);
                for (std::size_t r = 0; r < out; ++r) std::fill(at.row(r), at.row(r) + n, W[r * in + wrt_[k]]);
            } else {
                affine(W, nullptr, out, in, post_tan_[k][l - 1], at);
            }
            Block &ht = post_tan_[k][l];
            ht.resize(out, n);
            for (std::size_t r = 0; r < out; ++r) {
                const double *d1 = deriv1_[l].row(r);
                const double *ar = at.row(r);
                double *hr = ht.row(r);
                for (std::size_t c = 0; c < n; ++c) hr[c] = d1[c] * ar[c];
            }
        }
    }
}

void MlpTape::backward(const MlpParams &params, const Block &out_adj, std::span<const Block> tangent_adj,
                       std::span<double> grad) {
    const MlpSpec &spec = params.spec;
    const std::size_t layers = spec.num_layers();
    const std::size_t nt = tangent_adj.empty() ? 0 : wrt_.size();
    if (!tangent_adj.empty() && tangent_adj.size() != wrt_.size())
        throw InvalidArgument("tangent adjoint count does not match the tape");
    if (grad.size() != spec.param_count()) throw InvalidArgument("gradient buffer has wrong length");
    if (out_adj.rows() != output().rows() || out_adj.cols() != output().cols())
        throw InvalidArgument("output adjoint shape does not match the tape");
    for (const Block &t : tangent_adj)
        if (t.rows() != output().rows() || t.cols() != output().cols())
            throw InvalidArgument("tangent adjoint shape does not match the tape");

    const std::size_t n = out_adj.cols();
    adj_ = out_adj;
    tan_adj_.resize(nt);
    for (std::size_t k = 0; k < nt; ++k) tan_adj_[k] = tangent_adj[k];
    next_tan_adj_.resize(nt);

    const double *p = params.values.data();
    for (std::size_t li = layers; li-- > 0;) {
        const std::size_t in = spec.layer_sizes[li];
        const std::size_t out = spec.layer_sizes[li + 1];
        const double *W = p + spec.weight_offset(li);
        double *gW = grad.data() + spec.weight_offset(li);
        double *gb = grad.data() + spec.bias_offset(li);
        const Block &h = li == 0 ? input_ : post_[li - 1];

        // Pre-activation adjoints.
        Block &a_adj = next_adj_;
        a_adj.resize(out, n);
        for (std::size_t k = 0; k < nt; ++k) next_tan_adj_[k].resize(out, n);
        for (std::size_t r = 0; r < out; ++r) {
            const double *d1 = deriv1_[li].row(r);
            const double *ha = adj_.row(r);
            double *aa = a_adj.row(r);
            for (std::size_t c = 0; c < n; ++c) aa[c] = d1[c] * ha[c];
            for (std::size_t k = 0; k < nt; ++k) {
                const double *d2 = deriv2_[li].row(r);
                const double *at = pre_tan_[k][li].row(r);
                const double *ta = tan_adj_[k].row(r);
                double *nta = next_tan_adj_[k].row(r);
                for (std::size_t c = 0; c < n; ++c) {
                    aa[c] += d2[c] * at[c] * ta[c];
                    nta[c] = d1[c] * ta[c];
                }
            }
        }

        outer_accumulate(a_adj, h, gW);
        for (std::size_t r = 0; r < out; ++r) gb[r] += batch_sum(a_adj.row(r), n);
        for (std::size_t k = 0; k < nt; ++k) {
            if (li == 0) {
                for (std::size_t r = 0; r < out; ++r) gW[r * in + wrt_[k]] += batch_sum(next_tan_adj_[k].row(r), n);
            } else {
                outer_accumulate(next_tan_adj_[k], post_tan_[k][li - 1], gW);
            }
        }

        if (li > 0) {
            affine_transpose(W, out, in, a_adj, adj_);
            for (std::size_t k = 0; k < nt; ++k) affine_transpose(W, out, in, next_tan_adj_[k], tan_adj_[k]);
        }
    }
}

namespace {
Block column(std::span<const double> v) {
    Block b(v.size(), 1);
    for (std::size_t i = 0; i < v.size(); ++i) b(i, 0) = v[i];
    return b;
}
} // namespace

std::vector<double> forward(const MlpParams &params, std::span<const double> input) {
    if (input.size() != params.spec.input_dim())
        throw InvalidArgument("forward: input length " + std::to_string(input.size()) + " != " +
                              std::to_string(params.spec.input_dim()));
    MlpTape tape;
    tape.forward(params, column(input));
    const Block &y = tape.output();
    std::vector<double> out(y.rows());
    for (std::size_t i = 0; i < y.rows(); ++i) out[i] = y(i, 0);
    return out;
}

ForwardJacobian forward_with_input_jacobian(const MlpParams &params, std::span<const double> input,
                                            std::span<const std::size_t> wrt) {
    if (input.size() != params.spec.input_dim())
        throw InvalidArgument("forward_with_input_jacobian: input length mismatch");
    MlpTape tape;
    tape.forward(params, column(input), wrt);
    ForwardJacobian r;
    const Block &y = tape.output();
    const std::size_t out = params.spec.output_dim();
    r.output.resize(out);
    r.jacobian.resize(out * wrt.size());
    for (std::size_t o = 0; o < out; ++o) {
        r.output[o] = y(o, 0);
        for (std::size_t k = 0; k < wrt.size(); ++k) r.jacobian[o * wrt.size() + k] = tape.output_tangent(k)(o, 0);
    }
    return r;
}

std::vector<double> backward(const MlpParams &params, std::span<const double> input,
                             std::span<const double> upstream) {
    if (input.size() != params.spec.input_dim()) throw InvalidArgument("backward: input length mismatch");
    if (upstream.size() != params.spec.output_dim()) throw InvalidArgument("backward: upstream length mismatch");
    MlpTape tape;
    tape.forward(params, column(input));
    std::vector<double> grad(params.values.size(), 0.0);
    tape.backward(params, column(upstream), {}, grad);
    return grad;
}

std::vector<double> positional_encode(std::span<const double> v, int num_freqs) {
    if (num_freqs < 0) throw InvalidArgument("positional_encode: num_freqs must be >= 0");
    std::vector<double> out(v.begin(), v.end());
    out.reserve(encoded_size(v.size(), num_freqs));
    double freq = std::numbers::pi;
    for (int k = 0; k < num_freqs; ++k, freq *= 2.0) {
        for (double x : v) {
            out.push_back(std::sin(freq * x));
            out.push_back(std::cos(freq * x));
        }
    }
    return out;
}

MlpParams init_params(const MlpSpec &spec, std::uint64_t seed) {
    spec.validate();
    MlpParams params{spec, std::vector<double>(spec.param_count(), 0.0)};
    Rng rng(derive_seed(seed, stream::Init));
    // Uniform He-style bound gain * sqrt(3 / fan_in); biases U(+-1/sqrt(fan_in)).
    const double gain = spec.hidden == Activation::SiLU ? 1.1 : std::numbers::sqrt2;
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const std::size_t in = spec.layer_sizes[l];
        const std::size_t out = spec.layer_sizes[l + 1];
        const bool zero_layer = spec.init == InitKind::Identity && l + 1 == spec.num_layers();
        const double wb = gain * std::sqrt(3.0 / static_cast<double>(in));
        const double bb = 1.0 / std::sqrt(static_cast<double>(in));
        double *w = params.values.data() + spec.weight_offset(l);
        double *b = params.values.data() + spec.bias_offset(l);
        for (std::size_t i = 0; i < in * out; ++i) {
            const double r = rng.uniform(-wb, wb);
            w[i] = zero_layer ? 0.0 : r;
        }
        for (std::size_t i = 0; i < out; ++i) {
            const double r = rng.uniform(-bb, bb);
            b[i] = zero_layer ? 0.0 : r;
        }
    }
    return params;
}

double global_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double adam_step(AdamState &state, std::span<double> params, std::span<const double> grads) {
    if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
        throw InvalidArgument("adam_step: length mismatch");
    for (double g : grads)
        if (!std::isfinite(g)) throw TrainingDiverged(static_cast<std::size_t>(state.t), "non-finite gradient");

    double scale = 1.0;
    if (state.max_grad_norm) {
        const double norm = global_norm(grads);
        if (norm > *state.max_grad_norm) scale = *state.max_grad_norm / norm;
    }
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i] * scale;
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        params[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.eps);
    }
    return scale;
}

} // namespace repsample
