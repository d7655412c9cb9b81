#pragma once

// The five command-line workflows. Each returns a JSON report and writes its
// artifacts into an output directory with fixed file names.

#include "config.hpp"
#include "model_io.hpp"

#include <cstddef>
#include <cstdint>
#include <string>

namespace repsample {

inline constexpr const char *kSamplerFile = "sampler.json";
inline constexpr const char *kSamplerLog = "sampler_loss.csv";
inline constexpr const char *kPdfFile = "pdf.json";
inline constexpr const char *kPdfLog = "pdf_loss.csv";
inline constexpr const char *kSamplesFile = "samples.csv";
inline constexpr const char *kEvaluateReport = "evaluate_report.json";
inline constexpr const char *kConvergeReport = "converge_report.json";

// "step,loss,floored"
std::string loss_log_csv(const TrainLog &log);

struct SamplerRun {
    SamplerFile file;
    TrainLog log;
    std::string report;
};
SamplerRun run_train_sampler(const ExperimentConfig &cfg);

struct PdfRun {
    PdfFile file;
    TrainLog log;
    std::string report;
};
PdfRun run_train_pdf(const ExperimentConfig &cfg, const SamplerFile &sampler);

// Header "z0[,z1],u0[,u1],det_j" with signed det_j; one row per draw.
std::string sample_csv(const SamplerFile &sampler, const Condition &cond, std::size_t n, std::uint64_t seed);

std::string run_evaluate(const ExperimentConfig &cfg, const SamplerFile &sampler, const PdfFile *pdf,
                         const std::string &out_dir);
std::string run_converge(const ExperimentConfig &cfg, const SamplerFile &sampler, const PdfFile *pdf,
                         const std::string &out_dir);

// File-level wrappers used by the C API.
std::string cmd_train_sampler(const ExperimentConfig &cfg, const std::string &out_dir);
std::string cmd_train_pdf(const ExperimentConfig &cfg, const std::string &sampler_path, const std::string &out_dir);
std::string cmd_sample(const std::string &sampler_path, const Condition &cond, std::size_t n, std::uint64_t seed,
                       const std::string &out_dir);
std::string cmd_evaluate(const ExperimentConfig &cfg, const std::string &sampler_path, const std::string &pdf_path,
                         const std::string &out_dir);
std::string cmd_converge(const ExperimentConfig &cfg, const std::string &sampler_path, const std::string &pdf_path,
                         const std::string &out_dir);

} // namespace repsample
