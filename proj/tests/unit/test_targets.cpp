#include "targets.hpp"
#include "error.hpp"
#include "rng.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace repsample;

namespace {

// Textbook microfacet BRDF f = D G F / (4 cos_i cos_o) with directions lifted
// from the disk; against the projected measure du = cos_i dw the density is f itself.
double ggx_oracle(double x, double y, double ox, double oy, double a, double f0) {
    const double wi[3] = {x, y, std::sqrt(1 - x * x - y * y)};
    const double wo[3] = {ox, oy, std::sqrt(1 - ox * ox - oy * oy)};
    double h[3] = {wi[0] + wo[0], wi[1] + wo[1], wi[2] + wo[2]};
    const double hn = std::sqrt(h[0] * h[0] + h[1] * h[1] + h[2] * h[2]);
    for (double &c : h) c /= hn;
    const double cos_h = h[2];
    const double tan2 = (1 - cos_h * cos_h) / (cos_h * cos_h);
    const double D = a * a / (std::numbers::pi * std::pow(cos_h, 4) * std::pow(a * a + tan2, 2));
    auto G1 = [&](double c) { return 2 * c / (c + std::sqrt(a * a + (1 - a * a) * c * c)); };
    const double idh = wi[0] * h[0] + wi[1] * h[1] + wi[2] * h[2];
    const double F = f0 + (1 - f0) * std::pow(1 - idh, 5);
    return D * G1(wi[2]) * G1(wo[2]) * F / (4 * wi[2] * wo[2]);
}

} // namespace

TEST_SUITE("targets") {

TEST_CASE("gaussian peak") {
    const auto t = TargetDensity::gauss_mix({{1.0}, {0.0}, {1.0}});
    CHECK(t.value(std::vector<double>{0.0}, Condition::none()) == doctest::Approx(1 / std::sqrt(2 * M_PI) + 1e-7).epsilon(1e-14));
}

TEST_CASE("ggx matches the textbook microfacet form") {
    const auto t = TargetDensity::ggx({0.2, 0.04, std::nullopt}, 0.0);
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        const Condition c = sample_condition(rng);
        double x, y;
        do {
            x = rng.uniform(-1, 1);
            y = rng.uniform(-1, 1);
        } while (x * x + y * y >= 0.999);
        const double v = t.value(std::vector<double>{x, y}, c);
        CHECK(oracle::rel_err(v, ggx_oracle(x, y, (*c.omega_o)[0], (*c.omega_o)[1], 0.2, 0.04)) < 1e-10);
    }
}

TEST_CASE("ggx at normal incidence is radially symmetric") {
    const auto t = TargetDensity::ggx({0.2, 0.04, std::nullopt});
    const Condition c = Condition::at(0, 0);
    const double ref = t.value(std::vector<double>{0.3, 0.0}, c);
    for (int k = 1; k < 8; ++k) {
        const double a = k * std::numbers::pi / 4;
        const double v = t.value(std::vector<double>{0.3 * std::cos(a), 0.3 * std::sin(a)}, c);
        CHECK(std::abs(v - ref) < 1e-10);
    }
}

TEST_CASE("ggx is invariant under joint rotation") {
    const auto t = TargetDensity::ggx({0.3, 0.04, std::nullopt});
    const double a = 0.77, ca = std::cos(a), sa = std::sin(a);
    const double u[2] = {-0.4, 0.2}, o[2] = {0.5, 0.1};
    const double v0 = t.value(std::vector<double>{u[0], u[1]}, Condition::at(o[0], o[1]));
    const double v1 = t.value(std::vector<double>{ca * u[0] - sa * u[1], sa * u[0] + ca * u[1]},
                              Condition::at(ca * o[0] - sa * o[1], sa * o[0] + ca * o[1]));
    CHECK(std::abs(v0 - v1) < 1e-10);
}

TEST_CASE("gradients match central differences") {
    GridField g;
    g.rows = 4;
    g.cols = 5;
    for (int i = 0; i < 20; ++i) g.values.push_back(1.0 + 0.37 * i - 0.02 * i * i);
    const std::vector<TargetDensity> targets{TargetDensity::gauss_mix({{0.3, 0.4, 0.3}, {-1.5, 0.0, 1.8}, {0.5, 0.35, 0.6}}),
                                             TargetDensity::ggx({0.2, 0.04, std::nullopt}),
                                             TargetDensity::grid(g), TargetDensity::bimodal({})};
    Rng rng(5);
    for (const auto &t : targets) {
        int checked = 0;
        while (checked < 100) {
            std::vector<double> u(t.dim());
            if (t.dim() == 1) {
                u[0] = rng.uniform(-3, 3);
                if (t.kind() == TargetKind::DisconnectedBimodal1D && std::abs(u[0]) < 0.51) continue;
            } else {
                u[0] = rng.uniform(-0.95, 0.95);
                u[1] = rng.uniform(-0.95, 0.95);
                if (u[0] * u[0] + u[1] * u[1] > 0.9) continue;
                if (t.kind() == TargetKind::Grid2D) {
                    // keep away from cell boundaries where the bilinear gradient jumps
                    const double fx = (u[0] + 1) / 2 * 4, fy = (u[1] + 1) / 2 * 3;
                    if (std::abs(fx - std::round(fx)) < 1e-3 || std::abs(fy - std::round(fy)) < 1e-3) continue;
                }
            }
            const Condition c = t.conditional() ? sample_condition(rng) : Condition::none();
            const DensityEval e = t.eval(u, c);
            for (std::size_t k = 0; k < t.dim(); ++k) {
                const double fd = oracle::central_diff([&](const std::vector<double> &v) { return t.value(v, c); }, u, k);
                CHECK(oracle::rel_err(e.grad[k], fd) < 1e-4);
            }
            ++checked;
        }
    }
}

TEST_CASE("domain handling") {
    const auto t = TargetDensity::ggx({0.2, 0.04, std::nullopt});
    CHECK_THROWS_AS(t.eval(std::vector<double>{0.8, 0.8}, Condition::at(0, 0)), DomainError);
    CHECK_THROWS_AS(t.eval(std::vector<double>{0.1, 0.1}, Condition::none()), InvalidArgument);
    const auto b = TargetDensity::bimodal({});
    CHECK(b.value(std::vector<double>{0.2}, Condition::none()) == 0.0);
    CHECK_THROWS_AS(TargetDensity::gauss_mix({{1.0}, {0.0}, {-1.0}}), InvalidArgument);
}

TEST_CASE("quadrature") {
    SUBCASE("normalized mixture integrates to one") {
        const auto t = TargetDensity::gauss_mix({{0.3, 0.4, 0.3}, {-1.5, 0.0, 1.8}, {0.5, 0.35, 0.6}}, 0.0);
        CHECK(std::abs(quadrature_integral(t, Condition::none(), {}, 4096) - 1.0) < 1e-6);
    }
    SUBCASE("uniform disk density") {
        CHECK(std::abs(integrate_disk([](std::span<const double>) { return 1 / std::numbers::pi; }, 256) - 1.0) < 1e-6);
    }
    SUBCASE("ggx self-convergence") {
        const auto t = TargetDensity::ggx({0.2, 0.04, std::nullopt}, 0.0);
        const double a = quadrature_integral(t, Condition::at(0, 0), {}, 512);
        const double b = quadrature_integral(t, Condition::at(0, 0), {}, 2048);
        CHECK(oracle::rel_err(a, b) < 1e-4);
        CHECK(b < 1.0); // albedo bound
        const double i64 = quadrature_integral(t, Condition::at(0, 0), {}, 64);
        const double i128 = quadrature_integral(t, Condition::at(0, 0), {}, 128);
        const double i256 = quadrature_integral(t, Condition::at(0, 0), {}, 256);
        CHECK(std::abs(i256 - i128) < std::abs(i128 - i64));
    }
    SUBCASE("1D bound covers the mass") {
        const auto t = TargetDensity::gauss_mix({{0.5, 0.5}, {-2.0, 3.0}, {0.5, 1.0}});
        CHECK(t.quadrature_bound() == doctest::Approx(3.0 + 8.0));
    }
}

TEST_CASE("priors") {
    SUBCASE("standard normal moments") {
        Prior p;
        p.dim = 2;
        const auto b = prior_sample(p, 1000000, 3);
        double m[2] = {0, 0}, v[2] = {0, 0};
        for (std::size_t i = 0; i < b.size(); ++i)
            for (int k = 0; k < 2; ++k) {
                m[k] += b.z[2 * i + k];
                v[k] += b.z[2 * i + k] * b.z[2 * i + k];
            }
        for (int k = 0; k < 2; ++k) {
            m[k] /= 1e6;
            v[k] = v[k] / 1e6 - m[k] * m[k];
            CHECK(std::abs(m[k]) < 4e-3);
            CHECK(std::abs(v[k] - 1.0) < 0.01);
        }
        CHECK(b.q[0] == doctest::Approx(std::exp(-0.5 * (b.z[0] * b.z[0] + b.z[1] * b.z[1])) / (2 * M_PI)));
    }
    SUBCASE("uniform histogram is flat") {
        Prior p;
        p.kind = PriorKind::Uniform;
        const auto b = prior_sample(p, 1000000, 4);
        std::vector<double> counts(100, 0.0);
        for (double z : b.z) counts[std::min<std::size_t>(99, static_cast<std::size_t>((z + 1) / 2 * 100))] += 1;
        const double e = 1e4, sd = std::sqrt(1e6 * 0.01 * 0.99);
        for (double c : counts) CHECK(std::abs(c - e) < 4 * sd);
        CHECK(b.q[0] == 0.5);
    }
    SUBCASE("deterministic") {
        Prior p;
        CHECK(prior_sample(p, 10, 9).z == prior_sample(p, 10, 9).z);
    }
}

TEST_CASE("condition sampling") {
    Rng rng(2);
    double r = 0.0;
    for (int i = 0; i < 1000000; ++i) {
        const Condition c = sample_condition(rng);
        const double rr = std::hypot((*c.omega_o)[0], (*c.omega_o)[1]);
        REQUIRE(rr <= 1.0);
        r += rr;
    }
    CHECK(std::abs(r / 1e6 - 2.0 / 3.0) < 2e-3);
    CHECK(sample_condition(7) == sample_condition(7));
}

TEST_CASE("grid parsing") {
    const GridField g = parse_grid("2 2\n0 1\n2 3\n");
    CHECK(g.value(-1, -1) == 0.0);
    CHECK(g.value(1, 1) == 3.0);
    CHECK(g.value(0, 0) == doctest::Approx(1.5));
    CHECK_THROWS(parse_grid("2 2\n1 2 3"));
    CHECK_THROWS(parse_grid("1 1\n-1"));
    CHECK_THROWS_AS(load_grid("/nonexistent/grid.txt"), IoError);
}

}
