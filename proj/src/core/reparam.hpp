#pragma once

// Reparameterization sampler: an MLP T mapping prior samples z to the target
// domain, trained so that f(T(z)) |det J_T(z)| is proportional to q(z).

#include "nnet.hpp"
#include "targets.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace repsample {

enum class Domain { Line1D, Disk2D };
enum class SamplerKind { Network, DefensiveMap };

inline std::size_t domain_dim(Domain d) { return d == Domain::Line1D ? 1 : 2; }

struct SamplerModel {
    SamplerKind kind = SamplerKind::Network;
    Domain domain = Domain::Line1D;
    MlpParams net;                 // unused for DefensiveMap
    std::optional<int> cond_freqs; // positional-encoding frequencies for omega_o; empty = unconditional
    double alpha = 0.0;            // defensive weight in [0, 1)
    bool skip_identity = true;

    std::size_t dim() const { return domain_dim(domain); }
    bool conditional() const { return cond_freqs.has_value(); }
    std::size_t input_dim() const { return dim() + (cond_freqs ? encoded_size(2, *cond_freqs) : 0); }

    // The analytic map z / sqrt(z.z + 1), usable wherever a model is expected.
    static SamplerModel defensive(Domain domain);
};

struct SamplerOptions {
    Domain domain = Domain::Line1D;
    std::size_t hidden_layers = 2;
    std::size_t hidden_features = 16;
    InitKind init = InitKind::Standard;
    bool conditional = false;
    int cond_freqs = 4;
    std::optional<double> alpha;        // default 1e-3 (Disk2D) or 0 (Line1D)
    std::optional<bool> skip_identity;  // default on for Line1D, off for Disk2D
};

SamplerModel make_sampler(const SamplerOptions &options, std::uint64_t seed);

struct TransformResult {
    std::array<double, 2> u{}; // first dim() entries used
    double det_j = 0.0;        // signed
};

// Throws NumericError on non-finite intermediates or a Disk2D output that
// rounds onto the unit circle.
TransformResult transform(const SamplerModel &model, std::span<const double> z, const Condition &cond);
TransformResult defensive_map(std::span<const double> z);

// Network input for one (z, condition) pair: z followed by the encoded condition.
std::vector<double> sampler_input(const SamplerModel &model, std::span<const double> z, const Condition &cond);

// Batched transform. conds has one entry (shared) or z.size() / per_condition
// entries, each owning a contiguous block of samples.
struct TransformBatch {
    std::size_t dim = 1;
    std::vector<double> u;     // n * dim
    std::vector<double> det_j; // signed
    std::size_t size() const { return det_j.size(); }
};
TransformBatch transform_batch(const SamplerModel &model, const PriorBatch &z, std::span<const Condition> conds);

// ------------------------------------------------------------------ losses

enum class LossForm {
    RepPrime, // -log((1-a) f(T) max(det, 0) + a f(I) |det J_I|)
    Rep,      // -log((1-a) f(T) |det| + a f(I) |det J_I|)
    Nll,      // -log(f(T) |det|)
};

struct TrainBatch {
    std::vector<Condition> conditions; // one entry per block of samples
    PriorBatch z;
    std::size_t per_condition() const { return z.size() / conditions.size(); }
};

// Samples n_cond conditions (a single empty condition for unconditional
// targets, with n_cond * n_z samples) and n_z prior points per condition.
TrainBatch make_train_batch(const TargetDensity &target, const Prior &prior, std::size_t n_cond, std::size_t n_z,
                            std::uint64_t seed);
TrainBatch make_train_batch(bool conditional, const Prior &prior, std::size_t n_cond, std::size_t n_z,
                            std::uint64_t seed);

inline constexpr double kLogFloor = 1e-30;

struct LossResult {
    double loss = 0.0;
    std::vector<double> grad;  // d loss / d model.net.values (empty for DefensiveMap)
    std::vector<double> terms; // per-sample loss terms
    std::size_t floored = 0;   // samples whose log argument hit kLogFloor
    std::size_t negative_det = 0;
};

LossResult evaluate_loss(const SamplerModel &model, const TargetDensity &target, const TrainBatch &batch,
                         LossForm form, bool want_grad = true);
LossResult loss_rep_prime(const SamplerModel &model, const TargetDensity &target, const TrainBatch &batch);
LossResult loss_nll(const SamplerModel &model, const TargetDensity &target, const TrainBatch &batch);

// ---------------------------------------------------------------- training

struct TrainConfig {
    std::size_t steps = 5000;
    std::size_t batch_conditions = 256;
    std::size_t batch_z = 256;
    double learning_rate = 5e-4;
    std::uint64_t seed = 0;
    std::optional<double> max_grad_norm;
    LossForm loss = LossForm::RepPrime;

    void validate() const;
};

struct LossLogRow {
    std::size_t step;
    double loss;
    std::size_t floored;
};

struct TrainLog {
    std::vector<LossLogRow> rows; // every 10th step plus the last one
    double final_loss = 0.0;
    std::size_t total_floored = 0;
};

struct TrainedSampler {
    SamplerModel model;
    TrainLog log;
};

// Runs config.steps Adam steps on the chosen loss starting from `model`.
TrainedSampler train_sampler(const TargetDensity &target, const Prior &prior, SamplerModel model,
                             const TrainConfig &config);
TrainedSampler train_sampler(const TargetDensity &target, const Prior &prior, const SamplerOptions &options,
                             const TrainConfig &config);

// --------------------------------------------------------------- inference

struct DrawBatch {
    std::size_t dim = 1;
    std::vector<double> z, u; // n * dim
    std::vector<double> det_j; // |det J_T|
    std::vector<double> q;     // prior density at z
    std::size_t negative_det = 0;
    std::size_t size() const { return q.size(); }
    std::span<const double> point(std::size_t i) const { return {u.data() + i * dim, dim}; }
};

// z ~ prior, u = T(z); never mixes in the defensive map.
DrawBatch draw_samples(const SamplerModel &model, const Prior &prior, const Condition &cond, std::size_t n,
                       std::uint64_t seed);

} // namespace repsample
