#pragma once

// JSON model files for samplers and pdf models. Doubles are written in the
// shortest form that parses back to the same bits.

#include "pdfnet.hpp"
#include "reparam.hpp"
#include "targets.hpp"

#include <cstddef>
#include <cstdint>
#include <string>

namespace repsample {

inline constexpr int kModelFormatVersion = 1;

struct TrainingInfo {
    std::size_t steps = 0;
    std::uint64_t seed = 0;
    double final_loss = 0.0;
};

struct SamplerFile {
    SamplerModel model;
    Prior prior; // the prior the sampler was trained against
    TrainingInfo training;
};

struct PdfFile {
    PdfModel model;
    TrainingInfo training;
};

std::string sampler_to_json(const SamplerFile &f);
std::string pdf_to_json(const PdfFile &f);
SamplerFile sampler_from_json(const std::string &text);
PdfFile pdf_from_json(const std::string &text);

void save_sampler(const SamplerFile &f, const std::string &path);
void save_pdf(const PdfFile &f, const std::string &path);
SamplerFile load_sampler(const std::string &path);
PdfFile load_pdf(const std::string &path);

// Writes text to path, replacing any existing file.
void write_text_file(const std::string &path, const std::string &text);
std::string read_text_file(const std::string &path);

} // namespace repsample
