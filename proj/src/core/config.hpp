#pragma once

// Experiment configuration: one JSON document, validated up front.

#include "diagnostics.hpp"
#include "estimator.hpp"
#include "pdfnet.hpp"
#include "reparam.hpp"
#include "targets.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace repsample {

struct SceneSpec {
    RadianceField field;
    Emitter emitter = Emitter::none();
};

struct EvaluationSpec {
    std::size_t samples = 1000000;
    std::size_t bins = 0; // 0: 200 (1D) or 64 per axis (2D)
    std::optional<std::array<double, 2>> range; // 1D histogram range, default [-B, B]
    std::vector<Condition> conditions;          // explicit conditions for conditional targets
    std::size_t num_conditions = 5;             // drawn from the seed when `conditions` is empty
    double coverage_threshold = 1e-4;
    std::size_t injectivity_grid = 0; // 0: 4001 (1D) or 201 (2D)
    std::size_t estimator_samples = 100000;
    std::vector<std::size_t> spp{4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048};
    std::size_t trials = 64;
    std::vector<EstimatorMode> modes{EstimatorMode::Brdf};
    std::size_t quadrature_resolution = 1024;
    bool timing = false;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    TargetDensity target = TargetDensity::gauss_mix({{1.0}, {0.0}, {1.0}});
    Prior prior;
    SamplerOptions sampler;
    TrainConfig sampler_train;
    PdfOptions pdf;
    PdfTrainConfig pdf_train;
    SceneSpec scene;
    EvaluationSpec evaluation;
    std::string output_dir = ".";

    // Sets the seed everywhere it is consumed.
    void set_seed(std::uint64_t s);
    ToyScene scene_for_estimators() const;
    std::vector<Condition> evaluation_conditions() const;
    HistogramSpec histogram_spec() const;
    std::size_t injectivity_resolution() const;
};

// Relative file paths inside the document resolve against base_dir.
ExperimentConfig parse_config(const std::string &json_text, const std::string &base_dir = ".");
ExperimentConfig load_config(const std::string &path);

} // namespace repsample
