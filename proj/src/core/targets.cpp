#include "targets.hpp"

#include "dual.hpp"
#include "error.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace repsample {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;

double normal_pdf(double x, double mean, double std) {
    const double t = (x - mean) / std;
    return kInvSqrt2Pi / std * std::exp(-0.5 * t * t);
}

// Microfacet reflectance in projected-solid-angle measure (cosine folded in).
// Trowbridge-Reitz NDF, separable Smith masking-shadowing, Schlick Fresnel.
template <typename T> T ggx_reflectance(const T &x, const T &y, double ox, double oy, double alpha, double f0) {
    using std::sqrt;
    const T ci = sqrt(1.0 - x * x - y * y);
    const double co = std::sqrt(std::max(0.0, 1.0 - ox * ox - oy * oy));
    T hx = x + ox, hy = y + oy, hz = ci + co;
    const T hn = sqrt(hx * hx + hy * hy + hz * hz);
    hx = hx / hn;
    hy = hy / hn;
    hz = hz / hn;
    const double a2 = alpha * alpha;
    const T denom = hz * hz * (a2 - 1.0) + 1.0;
    const T D = a2 / (std::numbers::pi * denom * denom);
    const T idoth = x * hx + y * hy + ci * hz;
    const T one_minus = 1.0 - idoth;
    const T m2 = one_minus * one_minus;
    const T F = f0 + (1.0 - f0) * (m2 * m2 * one_minus);
    // G1(c) / c = 2 / (c + sqrt(a^2 + (1 - a^2) c^2)); the 1/4 cancels the two factors of 2.
    const T si = sqrt(a2 + (1.0 - a2) * ci * ci);
    const double so = std::sqrt(a2 + (1.0 - a2) * co * co);
    return D * F / ((ci + si) * (co + so));
}

} // namespace

// ---------------------------------------------------------------- priors

void Prior::validate() const {
    if (dim != 1 && dim != 2) throw InvalidArgument("prior dim must be 1 or 2");
    if (kind == PriorKind::Uniform && !(hi > lo)) throw InvalidArgument("uniform prior needs hi > lo");
}

double Prior::pdf(std::span<const double> z) const {
    if (kind == PriorKind::StdNormal) {
        double sq = 0.0;
        for (double v : z) sq += v * v;
        return std::pow(kInvSqrt2Pi, static_cast<double>(z.size())) * std::exp(-0.5 * sq);
    }
    for (double v : z)
        if (v < lo || v > hi) return 0.0;
    return std::pow(1.0 / (hi - lo), static_cast<double>(z.size()));
}

void Prior::sample(Rng &rng, std::span<double> z) const {
    for (double &v : z) v = kind == PriorKind::StdNormal ? rng.normal() : rng.uniform(lo, hi);
}

PriorBatch prior_sample(const Prior &prior, std::size_t n, std::uint64_t seed) {
    prior.validate();
    if (n == 0) throw InvalidArgument("prior_sample: n must be >= 1");
    PriorBatch batch;
    batch.dim = prior.dim;
    batch.z.resize(n * prior.dim);
    batch.q.resize(n);
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        std::span<double> zi(batch.z.data() + i * prior.dim, prior.dim);
        prior.sample(rng, zi);
        batch.q[i] = prior.pdf(zi);
    }
    return batch;
}

// ------------------------------------------------------------ conditions

Condition sample_condition(Rng &rng) {
    const double r = std::sqrt(rng.uniform());
    const double phi = 2.0 * std::numbers::pi * rng.uniform();
    return Condition::at(r * std::cos(phi), r * std::sin(phi));
}

Condition sample_condition(std::uint64_t seed) {
    Rng rng(derive_seed(seed, stream::Condition));
    return sample_condition(rng);
}

// ------------------------------------------------------------------ grid

double GridField::value(double x, double y) const {
    const double fx = (std::clamp(x, -1.0, 1.0) + 1.0) * 0.5 * static_cast<double>(cols - 1);
    const double fy = (std::clamp(y, -1.0, 1.0) + 1.0) * 0.5 * static_cast<double>(rows - 1);
    const std::size_t ix = std::min(static_cast<std::size_t>(fx), cols - 2);
    const std::size_t iy = std::min(static_cast<std::size_t>(fy), rows - 2);
    const double tx = fx - static_cast<double>(ix), ty = fy - static_cast<double>(iy);
    const double v00 = values[iy * cols + ix], v01 = values[iy * cols + ix + 1];
    const double v10 = values[(iy + 1) * cols + ix], v11 = values[(iy + 1) * cols + ix + 1];
    return (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
}

std::array<double, 2> GridField::gradient(double x, double y) const {
    const double fx = (std::clamp(x, -1.0, 1.0) + 1.0) * 0.5 * static_cast<double>(cols - 1);
    const double fy = (std::clamp(y, -1.0, 1.0) + 1.0) * 0.5 * static_cast<double>(rows - 1);
    const std::size_t ix = std::min(static_cast<std::size_t>(fx), cols - 2);
    const std::size_t iy = std::min(static_cast<std::size_t>(fy), rows - 2);
    const double tx = fx - static_cast<double>(ix), ty = fy - static_cast<double>(iy);
    const double v00 = values[iy * cols + ix], v01 = values[iy * cols + ix + 1];
    const double v10 = values[(iy + 1) * cols + ix], v11 = values[(iy + 1) * cols + ix + 1];
    const double sx = 0.5 * static_cast<double>(cols - 1), sy = 0.5 * static_cast<double>(rows - 1);
    return {((1 - ty) * (v01 - v00) + ty * (v11 - v10)) * sx, ((1 - tx) * (v10 - v00) + tx * (v11 - v01)) * sy};
}

GridField parse_grid(const std::string &text) {
    std::istringstream in(text);
    GridField g;
    long long rows = 0, cols = 0;
    if (!(in >> rows >> cols)) throw InvalidArgument("grid: missing 'rows cols' header");
    if (rows < 2 || cols < 2) throw InvalidArgument("grid: rows and cols must be >= 2");
    g.rows = static_cast<std::size_t>(rows);
    g.cols = static_cast<std::size_t>(cols);
    g.values.resize(g.rows * g.cols);
    for (std::size_t i = 0; i < g.values.size(); ++i) {
        if (!(in >> g.values[i]))
            throw InvalidArgument("grid: expected " + std::to_string(g.values.size()) + " values, got " +
                                  std::to_string(i));
        if (!(g.values[i] >= 0.0) || !std::isfinite(g.values[i]))
            throw InvalidArgument("grid: values must be finite and nonnegative");
    }
    std::string extra;
    if (in >> extra) throw InvalidArgument("grid: trailing data after " + std::to_string(g.values.size()) + " values");
    return g;
}

GridField load_grid(const std::string &path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open grid file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_grid(ss.str());
}

// --------------------------------------------------------------- targets

TargetDensity TargetDensity::gauss_mix(GaussMixParams p, double floor_eps) {
    if (p.weights.empty() || p.weights.size() != p.means.size() || p.weights.size() != p.stds.size())
        throw InvalidArgument("gauss_mix: weights, means and stds must be nonempty and equally long");
    for (std::size_t i = 0; i < p.weights.size(); ++i) {
        if (!(p.weights[i] >= 0.0)) throw InvalidArgument("gauss_mix: weights must be nonnegative");
        if (!(p.stds[i] > 0.0)) throw InvalidArgument("gauss_mix: stds must be positive");
    }
    if (!(floor_eps >= 0.0)) throw InvalidArgument("floor_eps must be >= 0");
    TargetDensity t;
    t.kind_ = TargetKind::GaussMix1D;
    t.floor_eps_ = floor_eps;
    t.mix_ = std::move(p);
    return t;
}

TargetDensity TargetDensity::ggx(GgxParams p, double floor_eps) {
    if (!(p.roughness > 0.0 && p.roughness <= 1.0)) throw InvalidArgument("ggx: roughness must be in (0, 1]");
    if (!(p.f0 >= 0.0 && p.f0 <= 1.0)) throw InvalidArgument("ggx: f0 must be in [0, 1]");
    if (p.fixed_omega_o) {
        const auto &o = *p.fixed_omega_o;
        if (o[0] * o[0] + o[1] * o[1] > 1.0) throw InvalidArgument("ggx: omega_o must lie in the unit disk");
    }
    if (!(floor_eps >= 0.0)) throw InvalidArgument("floor_eps must be >= 0");
    TargetDensity t;
    t.kind_ = TargetKind::GgxDisk2D;
    t.floor_eps_ = floor_eps;
    t.ggx_ = p;
    return t;
}

TargetDensity TargetDensity::grid(GridField g, double floor_eps) {
    if (g.rows < 2 || g.cols < 2 || g.values.size() != g.rows * g.cols)
        throw InvalidArgument("grid: inconsistent dimensions");
    if (!(floor_eps >= 0.0)) throw InvalidArgument("floor_eps must be >= 0");
    TargetDensity t;
    t.kind_ = TargetKind::Grid2D;
    t.floor_eps_ = floor_eps;
    t.grid_ = std::move(g);
    return t;
}

TargetDensity TargetDensity::bimodal(BimodalParams p, double floor_eps) {
    if (!(p.gap > 0.0) || !(p.mode_std > 0.0) || !(p.mode_center > 0.0))
        throw InvalidArgument("bimodal: gap, mode_center and mode_std must be positive");
    if (!(floor_eps >= 0.0)) throw InvalidArgument("floor_eps must be >= 0");
    TargetDensity t;
    t.kind_ = TargetKind::DisconnectedBimodal1D;
    t.floor_eps_ = floor_eps;
    t.bimodal_ = p;
    return t;
}

bool TargetDensity::in_domain(std::span<const double> u) const {
    if (u.size() != dim()) return false;
    if (dim() == 1) return std::isfinite(u[0]);
    return u[0] * u[0] + u[1] * u[1] < 1.0;
}

DensityEval TargetDensity::eval(std::span<const double> u, const Condition &cond) const {
    if (u.size() != dim()) throw InvalidArgument("target eval: point has wrong dimension");
    if (!in_domain(u)) throw DomainError("target eval: point outside the domain");
    DensityEval r;
    switch (kind_) {
    case TargetKind::GaussMix1D: {
        double v = 0.0, g = 0.0;
        for (std::size_t i = 0; i < mix_.weights.size(); ++i) {
            const double n = mix_.weights[i] * normal_pdf(u[0], mix_.means[i], mix_.stds[i]);
            v += n;
            g -= n * (u[0] - mix_.means[i]) / (mix_.stds[i] * mix_.stds[i]);
        }
        r.value = v + floor_eps_;
        r.grad[0] = g;
        break;
    }
    case TargetKind::DisconnectedBimodal1D: {
        if (std::abs(u[0]) < 0.5 * bimodal_.gap) return r;
        const double c = bimodal_.mode_center, s = bimodal_.mode_std;
        const double a = 0.5 * normal_pdf(u[0], -c, s), b = 0.5 * normal_pdf(u[0], c, s);
        r.value = a + b + floor_eps_;
        r.grad[0] = -(a * (u[0] + c) + b * (u[0] - c)) / (s * s);
        break;
    }
    case TargetKind::GgxDisk2D: {
        std::array<double, 2> o{};
        if (ggx_.fixed_omega_o) {
            o = *ggx_.fixed_omega_o;
        } else {
            if (!cond.omega_o) throw InvalidArgument("ggx target requires a condition omega_o");
            o = *cond.omega_o;
            if (o[0] * o[0] + o[1] * o[1] > 1.0 + 1e-12)
                throw InvalidArgument("condition omega_o outside the unit disk");
        }
        const auto x = Dual<2>::variable(u[0], 0), y = Dual<2>::variable(u[1], 1);
        const Dual<2> f = ggx_reflectance(x, y, o[0], o[1], ggx_.roughness, ggx_.f0);
        r.value = f.v + floor_eps_;
        r.grad = f.d;
        break;
    }
    case TargetKind::Grid2D:
        r.value = grid_.value(u[0], u[1]) + floor_eps_;
        r.grad = grid_.gradient(u[0], u[1]);
        break;
    }
    return r;
}

double TargetDensity::quadrature_bound() const {
    switch (kind_) {
    case TargetKind::GaussMix1D: {
        double m = 0.0, s = 0.0;
        for (std::size_t i = 0; i < mix_.means.size(); ++i) {
            m = std::max(m, std::abs(mix_.means[i]));
            s = std::max(s, mix_.stds[i]);
        }
        return m + 8.0 * s;
    }
    case TargetKind::DisconnectedBimodal1D: return bimodal_.mode_center + 8.0 * bimodal_.mode_std;
    default: return 1.0;
    }
}

// ------------------------------------------------------------ quadrature

double integrate_line(const PointFn &fn, double lo, double hi, std::size_t n) {
    const double h = (hi - lo) / static_cast<double>(n);
    double sum = 0.0;
    double u = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        u = lo + (static_cast<double>(i) + 0.5) * h;
        sum += fn(std::span<const double>(&u, 1));
    }
    return sum * h;
}

double integrate_disk(const PointFn &fn, std::size_t n) {
    const std::size_t na = 2 * n;
    const double hr = 1.0 / static_cast<double>(n);
    const double ha = 2.0 * std::numbers::pi / static_cast<double>(na);
    std::vector<double> cs(na), sn(na);
    for (std::size_t j = 0; j < na; ++j) {
        const double phi = (static_cast<double>(j) + 0.5) * ha;
        cs[j] = std::cos(phi);
        sn[j] = std::sin(phi);
    }
    double total = 0.0;
    std::array<double, 2> u{};
    for (std::size_t i = 0; i < n; ++i) {
        const double r = (static_cast<double>(i) + 0.5) * hr;
        double ring = 0.0;
        for (std::size_t j = 0; j < na; ++j) {
            u = {r * cs[j], r * sn[j]};
            ring += fn(u);
        }
        total += ring * r;
    }
    return total * hr * ha;
}

double quadrature_integral(const TargetDensity &target, const Condition &cond, const PointFn &weight,
                           std::size_t resolution) {
    if (resolution < 64) throw InvalidArgument("quadrature resolution must be >= 64");
    PointFn integrand = [&](std::span<const double> u) {
        const double f = target.value(u, cond);
        return weight ? weight(u) * f : f;
    };
    if (target.dim() == 1) {
        const double b = target.quadrature_bound();
        return integrate_line(integrand, -b, b, resolution);
    }
    return integrate_disk(integrand, resolution);
}

QuadratureResult quadrature_with_estimate(const TargetDensity &target, const Condition &cond,
                                          const PointFn &weight, std::size_t resolution) {
    QuadratureResult r;
    r.value = quadrature_integral(target, cond, weight, resolution);
    r.refined = quadrature_integral(target, cond, weight, 2 * resolution);
    r.rel_change = r.refined != 0.0 ? std::abs(r.refined - r.value) / std::abs(r.refined) : std::abs(r.value);
    return r;
}

} // namespace repsample
