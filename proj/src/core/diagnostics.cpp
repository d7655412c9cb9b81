#include "diagnostics.hpp"

#include "error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace repsample {

namespace {

// ∫ sqrt(1 - x^2) dx
double chord_primitive(double x) {
    x = std::clamp(x, -1.0, 1.0);
    return 0.5 * (x * std::sqrt(1.0 - x * x) + std::asin(x));
}

double cell_width(const HistogramSpec &s) { return (s.domain == Domain::Line1D ? s.hi - s.lo : 2.0) / s.bins; }

double axis_lo(const HistogramSpec &s) { return s.domain == Domain::Line1D ? s.lo : -1.0; }

void validate_spec(const HistogramSpec &s) {
    if (s.bins < 2) throw InvalidArgument("histogram needs at least 2 bins");
    if (s.domain == Domain::Line1D && !(s.hi > s.lo)) throw InvalidArgument("histogram range must have hi > lo");
}

} // namespace

double disk_rect_area(double x0, double x1, double y0, double y1) {
    x0 = std::max(x0, -1.0);
    x1 = std::min(x1, 1.0);
    if (!(x1 > x0) || !(y1 > y0)) return 0.0;
    // Overlap height at x is clamp(min(y1, h) - max(y0, -h)) with h = sqrt(1 - x^2);
    // its pieces change only where h crosses |y0| or |y1|.
    std::vector<double> cuts{x0, x1};
    for (double y : {y0, y1})
        if (std::abs(y) < 1.0) {
            const double c = std::sqrt(1.0 - y * y);
            for (double x : {-c, c})
                if (x > x0 && x < x1) cuts.push_back(x);
        }
    std::sort(cuts.begin(), cuts.end());
    double area = 0.0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        const double a = cuts[k], b = cuts[k + 1];
        if (!(b > a)) continue;
        const double m = 0.5 * (a + b);
        const double h = std::sqrt(std::max(0.0, 1.0 - m * m));
        const bool top_h = h <= y1, bot_h = -h >= y0;
        if (std::min(y1, h) - std::max(y0, -h) <= 0.0) continue;
        const double H = chord_primitive(b) - chord_primitive(a);
        const double w = b - a;
        const double top = top_h ? H : y1 * w;
        const double bot = bot_h ? -H : y0 * w;
        area += top - bot;
    }
    return std::max(area, 0.0);
}

std::array<double, 4> DensityHistogram::bounds(std::size_t bin) const {
    const double w = cell_width(spec), lo = axis_lo(spec);
    if (spec.domain == Domain::Line1D) return {lo + w * bin, lo + w * (bin + 1), 0.0, 0.0};
    const std::size_t ix = bin % spec.bins, iy = bin / spec.bins;
    return {lo + w * ix, lo + w * (ix + 1), lo + w * iy, lo + w * (iy + 1)};
}

std::array<double, 2> DensityHistogram::center(std::size_t bin) const {
    const auto b = bounds(bin);
    return {0.5 * (b[0] + b[1]), 0.5 * (b[2] + b[3])};
}

DensityHistogram histogram_samples(std::span<const double> samples, const HistogramSpec &spec) {
    validate_spec(spec);
    DensityHistogram h;
    h.spec = spec;
    const std::size_t d = domain_dim(spec.domain);
    if (samples.size() % d != 0) throw InvalidArgument("sample coordinate count is not a multiple of dim");
    const std::size_t nb = d == 1 ? spec.bins : spec.bins * spec.bins;
    h.counts.assign(nb, 0.0);
    h.area.resize(nb);
    h.density.assign(nb, 0.0);
    for (std::size_t b = 0; b < nb; ++b) {
        const auto c = h.bounds(b);
        h.area[b] = d == 1 ? c[1] - c[0] : disk_rect_area(c[0], c[1], c[2], c[3]);
    }
    h.n = samples.size() / d;
    h.empty = h.n == 0;
    const double w = cell_width(spec), lo = axis_lo(spec);
    auto index = [&](double x) -> std::ptrdiff_t {
        const double f = (x - lo) / w;
        if (!(f >= 0.0) || !(f < static_cast<double>(spec.bins))) return -1;
        return std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(f), static_cast<std::ptrdiff_t>(spec.bins) - 1);
    };
    for (std::size_t i = 0; i < h.n; ++i) {
        const double *p = samples.data() + i * d;
        if (d == 1) {
            const auto ix = index(p[0]);
            if (ix < 0) {
                ++h.outside;
                continue;
            }
            h.counts[ix] += 1.0;
        } else {
            const auto ix = index(p[0]), iy = index(p[1]);
            if (ix < 0 || iy < 0 || !(p[0] * p[0] + p[1] * p[1] < 1.0)) {
                ++h.outside;
                continue;
            }
            const std::size_t b = static_cast<std::size_t>(iy) * spec.bins + static_cast<std::size_t>(ix);
            if (h.area[b] <= 0.0) {
                ++h.outside;
                continue;
            }
            h.counts[b] += 1.0;
        }
    }
    if (h.n > 0)
        for (std::size_t b = 0; b < nb; ++b)
            if (h.area[b] > 0.0) h.density[b] = h.counts[b] / (static_cast<double>(h.n) * h.area[b]);
    return h;
}

BatchFn target_batch(const TargetDensity &target, const Condition &cond) {
    return [&target, cond](std::span<const double> pts) {
        const std::size_t d = target.dim();
        std::vector<double> out(pts.size() / d);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = target.value(pts.subspan(i * d, d), cond);
        return out;
    };
}

BatchFn pdf_batch(const PdfModel &pm, const Condition &cond) {
    return [&pm, cond](std::span<const double> pts) { return pdf_eval_batch(pm, pts, cond); };
}

std::vector<double> bin_averages(const HistogramSpec &spec, const BatchFn &fn, std::size_t sub) {
    validate_spec(spec);
    if (sub == 0) throw InvalidArgument("sub-cell count must be >= 1");
    DensityHistogram shape = histogram_samples({}, spec);
    const std::size_t d = shape.dim(), nb = shape.size();
    std::vector<double> pts;
    std::vector<std::size_t> owner;
    for (std::size_t b = 0; b < nb; ++b) {
        if (shape.area[b] <= 0.0) continue;
        const auto c = shape.bounds(b);
        if (d == 1) {
            for (std::size_t s = 0; s < sub; ++s) {
                pts.push_back(c[0] + (c[1] - c[0]) * (s + 0.5) / sub);
                owner.push_back(b);
            }
            continue;
        }
        for (std::size_t sy = 0; sy < sub; ++sy)
            for (std::size_t sx = 0; sx < sub; ++sx) {
                const double x = c[0] + (c[1] - c[0]) * (sx + 0.5) / sub;
                const double y = c[2] + (c[3] - c[2]) * (sy + 0.5) / sub;
                if (!(x * x + y * y < 1.0)) continue;
                pts.push_back(x);
                pts.push_back(y);
                owner.push_back(b);
            }
    }
    const std::vector<double> vals = pts.empty() ? std::vector<double>{} : fn(pts);
    std::vector<double> sum(nb, 0.0), cnt(nb, 0.0);
    for (std::size_t k = 0; k < owner.size(); ++k) {
        sum[owner[k]] += vals[k];
        cnt[owner[k]] += 1.0;
    }
    // Slivers of the disk too thin to hold a sub-cell midpoint use the nearest in-disk point.
    for (std::size_t b = 0; b < nb; ++b) {
        if (shape.area[b] <= 0.0 || cnt[b] > 0.0) continue;
        auto c = shape.center(b);
        const double r = std::hypot(c[0], c[1]);
        const double s = (1.0 - 1e-9) / r;
        const std::vector<double> p{c[0] * s, c[1] * s};
        sum[b] = fn(p)[0];
        cnt[b] = 1.0;
    }
    for (std::size_t b = 0; b < nb; ++b) sum[b] = cnt[b] > 0.0 ? sum[b] / cnt[b] : 0.0;
    return sum;
}

double kl_divergence(const DensityHistogram &hist, const BatchFn &ref, double ref_norm, std::size_t sub) {
    if (!(ref_norm > 0.0) || !std::isfinite(ref_norm)) throw InvalidArgument("reference normalizer must be > 0");
    if (hist.empty) return 0.0;
    const std::vector<double> q = bin_averages(hist.spec, ref, sub);
    double kl = 0.0;
    for (std::size_t b = 0; b < hist.size(); ++b) {
        const double p = hist.density[b];
        if (p <= 0.0) continue;
        const double qb = std::max(q[b] / ref_norm, 1e-12);
        kl += hist.area[b] * p * std::log(p / qb);
    }
    return kl;
}

double integrate_range(const HistogramSpec &spec, const BatchFn &fn, std::size_t resolution) {
    validate_spec(spec);
    std::vector<double> pts;
    if (spec.domain == Domain::Line1D) {
        const double h = (spec.hi - spec.lo) / resolution;
        pts.resize(resolution);
        for (std::size_t i = 0; i < resolution; ++i) pts[i] = spec.lo + (i + 0.5) * h;
        const auto v = fn(pts);
        double s = 0.0;
        for (double x : v) s += x;
        return s * h;
    }
    const std::size_t na = 2 * resolution;
    const double hr = 1.0 / resolution, ha = 2.0 * std::numbers::pi / na;
    pts.reserve(2 * resolution * na);
    for (std::size_t i = 0; i < resolution; ++i) {
        const double r = (i + 0.5) * hr;
        for (std::size_t j = 0; j < na; ++j) {
            const double phi = (j + 0.5) * ha;
            pts.push_back(r * std::cos(phi));
            pts.push_back(r * std::sin(phi));
        }
    }
    const auto v = fn(pts);
    double total = 0.0;
    for (std::size_t i = 0; i < resolution; ++i) {
        double ring = 0.0;
        for (std::size_t j = 0; j < na; ++j) ring += v[i * na + j];
        total += ring * (i + 0.5) * hr;
    }
    return total * hr * ha;
}

double kl_to_target(const DensityHistogram &hist, const TargetDensity &target, const Condition &cond) {
    if (target.dim() != hist.dim()) throw InvalidArgument("histogram and target dimensions differ");
    const double z = quadrature_integral(target, cond, {}, target.dim() == 1 ? 1 << 16 : 1024);
    return kl_divergence(hist, target_batch(target, cond), z);
}

double kl_to_pdf(const DensityHistogram &hist, const PdfModel &pm, const Condition &cond) {
    if (pm.dim() != hist.dim()) throw InvalidArgument("histogram and pdf model dimensions differ");
    const BatchFn fn = pdf_batch(pm, cond);
    const double z = integrate_range(hist.spec, fn, pm.dim() == 1 ? 1 << 14 : 512);
    return kl_divergence(hist, fn, z);
}

std::string histogram_csv(const DensityHistogram &hist) {
    std::string out = hist.dim() == 1 ? "x,density\n" : "x,y,density\n";
    char buf[160];
    for (std::size_t b = 0; b < hist.size(); ++b) {
        if (hist.area[b] <= 0.0) continue;
        const auto c = hist.center(b);
        if (hist.dim() == 1)
            std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", c[0], hist.density[b]);
        else
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", c[0], c[1], hist.density[b]);
        out += buf;
    }
    return out;
}

CoverageResult coverage_check(std::span<const double> samples, const TargetDensity &target, const Condition &cond,
                              const HistogramSpec &spec, double mass_threshold, const RegionFn &region) {
    if (!(mass_threshold > 0.0)) throw InvalidArgument("mass threshold must be > 0");
    if (target.dim() != domain_dim(spec.domain)) throw InvalidArgument("target and histogram dimensions differ");
    const DensityHistogram hist = histogram_samples(samples, spec);
    const std::vector<double> avg = bin_averages(spec, target_batch(target, cond));
    std::vector<double> mass(hist.size());
    double max_mass = 0.0;
    for (std::size_t b = 0; b < hist.size(); ++b) {
        mass[b] = avg[b] * hist.area[b];
        max_mass = std::max(max_mass, mass[b]);
    }
    CoverageResult r;
    for (std::size_t b = 0; b < hist.size(); ++b) {
        if (hist.area[b] <= 0.0 || mass[b] < mass_threshold * max_mass) continue;
        if (region) {
            const auto c = hist.center(b);
            if (!region(std::span<const double>(c.data(), hist.dim()))) continue;
        }
        ++r.significant;
        if (hist.counts[b] == 0.0) ++r.missed;
    }
    if (hist.empty) {
        r.missed = r.significant;
        r.miss_fraction = 1.0;
        return r;
    }
    r.miss_fraction = r.significant ? static_cast<double>(r.missed) / static_cast<double>(r.significant) : 0.0;
    return r;
}

InjectivityResult injectivity_check(const SamplerModel &model, const Prior &prior, const Condition &cond,
                                    std::size_t grid_resolution) {
    if (grid_resolution < 2) throw InvalidArgument("grid resolution must be >= 2");
    if (prior.dim != model.dim()) throw InvalidArgument("prior and sampler dimensions differ");
    const double lo = prior.kind == PriorKind::StdNormal ? -4.0 : prior.lo;
    const double hi = prior.kind == PriorKind::StdNormal ? 4.0 : prior.hi;
    const std::size_t d = model.dim();
    const std::size_t g = grid_resolution;
    PriorBatch z;
    z.dim = d;
    const std::size_t total = d == 1 ? g : g * g;
    z.z.resize(total * d);
    z.q.assign(total, 1.0);
    auto node = [&](std::size_t i) {
        // Uniform boxes use cell midpoints so every node stays in the support.
        if (prior.kind == PriorKind::Uniform) return lo + (hi - lo) * (i + 0.5) / g;
        return lo + (hi - lo) * i / (g - 1);
    };
    for (std::size_t k = 0; k < total; ++k) {
        if (d == 1) {
            z.z[k] = node(k);
        } else {
            z.z[2 * k] = node(k % g);
            z.z[2 * k + 1] = node(k / g);
        }
    }
    const TransformBatch t = transform_batch(model, z, std::span(&cond, 1));
    InjectivityResult r;
    r.points = total;
    r.min_det = t.det_j[0];
    std::size_t neg = 0;
    for (double v : t.det_j) {
        r.min_det = std::min(r.min_det, v);
        if (v < 0.0) ++neg;
    }
    r.negative_fraction = static_cast<double>(neg) / static_cast<double>(total);
    return r;
}

} // namespace repsample
