#pragma once

// One-bounce toy scene and Monte Carlo estimators of L_o = ∫ L_i(u) f(u | cond) du.

#include "pdfnet.hpp"
#include "reparam.hpp"
#include "targets.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace repsample {

enum class EmitterKind { None, UniformDisk, Spot };

// Emitter on the unit disk. L_e = radiance * g(u) with g the (truncated)
// emission profile, and p_e = g / ∫g, so p_e > 0 wherever L_e > 0.
class Emitter {
  public:
    static Emitter none();
    static Emitter uniform_disk(double radiance);
    // Gaussian spot exp(-|u - c|^2 / (2 sigma^2)) truncated to the disk.
    static Emitter spot(std::array<double, 2> center, double sigma, double radiance);

    EmitterKind kind() const { return kind_; }
    double radiance() const { return radiance_; }
    const std::array<double, 2> &center() const { return center_; }
    double sigma() const { return sigma_; }
    double normalization() const { return norm_; }

    double pdf(std::span<const double> u) const;
    double emitted(std::span<const double> u) const;
    // Draws one point strictly inside the disk.
    std::array<double, 2> sample(Rng &rng) const;

  private:
    EmitterKind kind_ = EmitterKind::None;
    std::array<double, 2> center_{};
    double sigma_ = 0.0;
    double radiance_ = 0.0;
    double norm_ = 1.0;
    double profile(std::span<const double> u) const;
};

// Non-emitted incident radiance; constant or a bilinear grid on [-1,1]^2.
struct RadianceField {
    double constant = 0.0;
    std::optional<GridField> grid;
    double value(std::span<const double> u) const;
    bool zero() const { return !grid && constant == 0.0; }
};

struct ToyScene {
    TargetDensity target;
    Prior prior;
    RadianceField field;
    Emitter emitter = Emitter::none();

    // L_i = field + L_e.
    double incident(std::span<const double> u) const;
};

struct Estimate {
    double mean = 0.0;
    double sample_variance = 0.0;
    std::size_t n = 0;
    std::size_t negative_det = 0;
    std::size_t weight_sum_violations = 0; // samples with w + w_e != 1

    double std_error() const { return n ? std::sqrt(sample_variance / static_cast<double>(n)) : 0.0; }
};

Estimate summarize(std::span<const double> values);

Estimate estimate_reparam(const SamplerModel &model, const ToyScene &scene, const Condition &cond, std::size_t n,
                          std::uint64_t seed);
// Negative control: identical to estimate_reparam but omits |det J_T|.
Estimate estimate_reparam_no_det(const SamplerModel &model, const ToyScene &scene, const Condition &cond,
                                 std::size_t n, std::uint64_t seed);

struct Weights {
    double w = 0.0, w_e = 0.0;
};
// Power heuristic; both zero is an error.
Weights power_heuristic(double p, double p_e);

Estimate estimate_mis(const SamplerModel &model, const PdfModel &pmodel, const ToyScene &scene,
                      const Condition &cond, std::size_t n, std::uint64_t seed);
// Same estimator with p replaced by a positive constant.
Estimate estimate_mis_constant(const SamplerModel &model, double p_const, const ToyScene &scene,
                               const Condition &cond, std::size_t n, std::uint64_t seed);
// Emitter sampling only; needs a scene without a radiance field.
Estimate estimate_emitter(const ToyScene &scene, const Condition &cond, std::size_t n, std::uint64_t seed);

// Uniform area sampling of the disk, pdf 1/pi.
DrawBatch baseline_uniform_sample(const Condition &cond, std::size_t n, std::uint64_t seed);
Estimate estimate_uniform(const ToyScene &scene, const Condition &cond, std::size_t n, std::uint64_t seed);

// Quadrature value of ∫ L_i f du.
double reference_value(const ToyScene &scene, const Condition &cond, std::size_t resolution = 1024);

enum class EstimatorMode { Brdf, Mis, Emitter, Uniform, BiasedNoDet };

std::string to_string(EstimatorMode m);
EstimatorMode estimator_mode_from_string(const std::string &s);

struct EstimatorSetup {
    EstimatorMode mode = EstimatorMode::Brdf;
    const SamplerModel *model = nullptr;
    const PdfModel *pmodel = nullptr;
    const ToyScene *scene = nullptr;
    Condition cond;
};

Estimate run_estimator(const EstimatorSetup &setup, std::size_t n, std::uint64_t seed);

struct ConvergenceRow {
    std::size_t spp;
    double mse;
    double seconds;
};

struct ConvergenceRecord {
    std::vector<ConvergenceRow> rows;
    double slope = 0.0; // least-squares slope of log mse against log spp; NaN if any mse is 0
    double reference = 0.0;
};

// record_time false writes 0 seconds so repeated runs produce identical records.
ConvergenceRecord convergence_curve(const EstimatorSetup &setup, std::span<const std::size_t> spps,
                                    std::size_t trials, std::uint64_t seed, double reference,
                                    bool record_time = true);

double loglog_slope(std::span<const ConvergenceRow> rows);
std::string convergence_csv(const ConvergenceRecord &rec);

} // namespace repsample
