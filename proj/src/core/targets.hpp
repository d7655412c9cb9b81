#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace repsample {

class Rng;

// ---------------------------------------------------------------- priors

enum class PriorKind { StdNormal, Uniform };

struct Prior {
    PriorKind kind = PriorKind::StdNormal;
    std::size_t dim = 1;
    double lo = -1.0; // Uniform box bounds, same on every axis
    double hi = 1.0;

    void validate() const;
    double pdf(std::span<const double> z) const;
    void sample(Rng &rng, std::span<double> z) const;
};

struct PriorBatch {
    std::size_t dim = 1;
    std::vector<double> z; // n * dim, sample-major
    std::vector<double> q; // prior density at each sample
    std::size_t size() const { return q.size(); }
    std::span<const double> point(std::size_t i) const { return {z.data() + i * dim, dim}; }
};

PriorBatch prior_sample(const Prior &prior, std::size_t n, std::uint64_t seed);

// ------------------------------------------------------------ conditions

// Outgoing direction in projected-hemisphere (unit disk) coordinates; empty
// for unconditional targets.
struct Condition {
    std::optional<std::array<double, 2>> omega_o;

    static Condition none() { return {}; }
    static Condition at(double x, double y) { return Condition{std::array<double, 2>{x, y}}; }
    bool operator==(const Condition &) const = default;
};

// Uniform (area measure) on the closed unit disk.
Condition sample_condition(std::uint64_t seed);
Condition sample_condition(Rng &rng);

// --------------------------------------------------------------- targets

enum class TargetKind { GaussMix1D, GgxDisk2D, Grid2D, DisconnectedBimodal1D };

struct GaussMixParams {
    std::vector<double> weights, means, stds;
};

struct GgxParams {
    double roughness = 0.2;
    double f0 = 0.04;
    // When set, the target ignores the condition and always uses this direction.
    std::optional<std::array<double, 2>> fixed_omega_o;
};

// Bilinear field over [-1,1]^2: cols nodes along x, rows nodes along y, row 0 at y = -1.
struct GridField {
    std::size_t rows = 0, cols = 0;
    std::vector<double> values; // row-major

    double value(double x, double y) const;
    std::array<double, 2> gradient(double x, double y) const;
};

// Text format: "rows cols" then rows*cols nonnegative values, row-major.
GridField load_grid(const std::string &path);
GridField parse_grid(const std::string &text);

struct BimodalParams {
    double gap = 1.0;         // density is exactly 0 for |u| < gap / 2
    double mode_center = 1.5; // modes at +-mode_center
    double mode_std = 0.3;
};

struct DensityEval {
    double value = 0.0;
    std::array<double, 2> grad{}; // only the first dim() entries are meaningful
};

class TargetDensity {
  public:
    static TargetDensity gauss_mix(GaussMixParams p, double floor_eps = 1e-7);
    static TargetDensity ggx(GgxParams p, double floor_eps = 1e-7);
    static TargetDensity grid(GridField g, double floor_eps = 1e-7);
    static TargetDensity bimodal(BimodalParams p, double floor_eps = 1e-7);

    TargetKind kind() const { return kind_; }
    std::size_t dim() const { return kind_ == TargetKind::GgxDisk2D || kind_ == TargetKind::Grid2D ? 2 : 1; }
    bool conditional() const { return kind_ == TargetKind::GgxDisk2D && !ggx_.fixed_omega_o; }
    double floor_eps() const { return floor_eps_; }

    bool in_domain(std::span<const double> u) const;
    // Value (including floor_eps) and gradient wrt u. Throws DomainError outside the domain.
    DensityEval eval(std::span<const double> u, const Condition &cond) const;
    double value(std::span<const double> u, const Condition &cond) const { return eval(u, cond).value; }

    // 1D kinds: half-width B of the quadrature interval [-B, B].
    double quadrature_bound() const;

    const GaussMixParams &gauss_mix_params() const { return mix_; }
    const GgxParams &ggx_params() const { return ggx_; }
    const GridField &grid_field() const { return grid_; }
    const BimodalParams &bimodal_params() const { return bimodal_; }

  private:
    TargetKind kind_ = TargetKind::GaussMix1D;
    double floor_eps_ = 1e-7;
    GaussMixParams mix_;
    GgxParams ggx_;
    GridField grid_;
    BimodalParams bimodal_;
};

// ------------------------------------------------------------ quadrature

using PointFn = std::function<double(std::span<const double>)>;

// Midpoint rule on [lo, hi] with n cells.
double integrate_line(const PointFn &fn, double lo, double hi, std::size_t n);
// Midpoint rule on a polar grid over the unit disk: n radial x 2n angular cells.
double integrate_disk(const PointFn &fn, std::size_t n);

struct QuadratureResult {
    double value = 0.0;
    double refined = 0.0;    // same integral at twice the resolution
    double rel_change = 0.0; // |refined - value| / |refined|
};

// Integral of L(u) f(u | cond) over the target's domain; an empty weight means
// L = 1. resolution >= 64: 1D uses that many cells on [-B, B], 2D a polar grid
// with that many radial cells.
double quadrature_integral(const TargetDensity &target, const Condition &cond, const PointFn &weight,
                           std::size_t resolution);
QuadratureResult quadrature_with_estimate(const TargetDensity &target, const Condition &cond,
                                          const PointFn &weight, std::size_t resolution);

} // namespace repsample
