#pragma once

// Histograms, histogram KL, coverage and injectivity checks.

#include "pdfnet.hpp"
#include "reparam.hpp"
#include "targets.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace repsample {

struct HistogramSpec {
    Domain domain = Domain::Line1D;
    std::size_t bins = 100; // per axis
    double lo = -1.0, hi = 1.0; // 1D range; 2D always covers [-1,1]^2
};

// 2D bins are square cells of [-1,1]^2, row-major with y outer; cells are
// weighted by their exact overlap with the unit disk and masked when it is 0.
struct DensityHistogram {
    HistogramSpec spec;
    std::vector<double> counts;
    std::vector<double> area;    // in-domain area of each bin
    std::vector<double> density; // count / (n * area), 0 for masked bins
    std::size_t n = 0;           // all samples, including those outside
    std::size_t outside = 0;     // outside the range or the disk
    bool empty = true;

    std::size_t dim() const { return domain_dim(spec.domain); }
    std::size_t size() const { return counts.size(); }
    std::array<double, 2> center(std::size_t bin) const;
    // Bin cell bounds: x0, x1, y0, y1 (y unused in 1D).
    std::array<double, 4> bounds(std::size_t bin) const;
};

DensityHistogram histogram_samples(std::span<const double> samples, const HistogramSpec &spec);

// Area of the unit disk inside [x0,x1] x [y0,y1].
double disk_rect_area(double x0, double x1, double y0, double y1);

// Evaluates a function at many points (n * dim coordinates).
using BatchFn = std::function<std::vector<double>(std::span<const double>)>;

BatchFn target_batch(const TargetDensity &target, const Condition &cond);
BatchFn pdf_batch(const PdfModel &pm, const Condition &cond);

// Mean of fn over the in-domain part of each bin by sub x sub (1D: sub) midpoints.
std::vector<double> bin_averages(const HistogramSpec &spec, const BatchFn &fn, std::size_t sub = 8);

// sum over bins of area * p * log(p / q), q = bin average of ref / ref_norm
// floored at 1e-12; empty bins contribute 0.
double kl_divergence(const DensityHistogram &hist, const BatchFn &ref, double ref_norm = 1.0, std::size_t sub = 8);
// Target normalized over its domain by quadrature.
double kl_to_target(const DensityHistogram &hist, const TargetDensity &target, const Condition &cond);
// p normalized over the histogram range (1D) or the disk (2D).
double kl_to_pdf(const DensityHistogram &hist, const PdfModel &pm, const Condition &cond);

// Integral over the histogram range (1D) or the disk (2D) with a batched integrand.
double integrate_range(const HistogramSpec &spec, const BatchFn &fn, std::size_t resolution = 2048);

std::string histogram_csv(const DensityHistogram &hist);

struct CoverageResult {
    double miss_fraction = 1.0;
    std::size_t significant = 0;
    std::size_t missed = 0;
};

// Optional region filter on bin centers, for per-mode checks.
using RegionFn = std::function<bool(std::span<const double>)>;

// Fraction of bins carrying normalized target mass >= mass_threshold * (max bin mass) that got no samples.
CoverageResult coverage_check(std::span<const double> samples, const TargetDensity &target, const Condition &cond,
                              const HistogramSpec &spec, double mass_threshold = 1e-4, const RegionFn &region = {});

struct InjectivityResult {
    double min_det = 0.0;
    double negative_fraction = 0.0;
    std::size_t points = 0;
};

// Signed det J_T on a regular grid over prior space: +-4 for StdNormal, the box for Uniform.
InjectivityResult injectivity_check(const SamplerModel &model, const Prior &prior, const Condition &cond,
                                    std::size_t grid_resolution);

} // namespace repsample
