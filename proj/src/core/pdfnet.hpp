#pragma once

// Approximate pdf p(u | cond) of a frozen sampler, used only for MIS weights.

#include "reparam.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace repsample {

struct PdfModel {
    MlpParams net;
    Domain domain = Domain::Line1D;
    std::optional<int> cond_freqs;

    std::size_t dim() const { return domain_dim(domain); }
    std::size_t input_dim() const { return dim() + (cond_freqs ? encoded_size(2, *cond_freqs) : 0); }
};

struct PdfOptions {
    std::size_t hidden_layers = 1;
    std::size_t hidden_features = 32;
};

// Mirrors domain and condition encoding from the sampler.
PdfModel make_pdf_model(const SamplerModel &sampler, const PdfOptions &options, std::uint64_t seed);

// Throws DomainError for a Disk2D point with |u| >= 1.
double pdf_eval(const PdfModel &pm, std::span<const double> u, const Condition &cond);
// u holds n * dim coordinates; one shared condition.
std::vector<double> pdf_eval_batch(const PdfModel &pm, std::span<const double> u, const Condition &cond);

struct PdfLossResult {
    double loss = 0.0;
    std::vector<double> grad;
};

// mean over the batch of (p(T(z)) |det J_T(z)| - q(z))^2; the sampler is read only.
PdfLossResult loss_pdf(const PdfModel &pm, const SamplerModel &sampler, const TrainBatch &batch,
                       bool want_grad = true);

struct PdfTrainConfig {
    std::size_t steps = 40000;
    std::size_t batch_conditions = 4;
    std::size_t batch_z = 256;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    std::optional<double> max_grad_norm;

    void validate() const;
};

struct TrainedPdf {
    PdfModel model;
    TrainLog log;
};

// conditional: draw conditions per step (required when the sampler is conditional).
TrainedPdf train_pdf(const SamplerModel &sampler, const Prior &prior, const PdfOptions &options,
                     const PdfTrainConfig &config);

} // namespace repsample
