#include "reparam.hpp"
#include "error.hpp"
#include "rng.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace repsample;

namespace {

SamplerModel random_model(Domain d, bool conditional, std::uint64_t seed, double scale = 0.5) {
    SamplerOptions o;
    o.domain = d;
    o.conditional = conditional;
    SamplerModel m = make_sampler(o, seed);
    Rng rng(seed * 7 + 1);
    for (double &v : m.net.values) v = rng.uniform(-scale, scale);
    return m;
}

const TargetDensity &mix3() {
    static const TargetDensity t =
        TargetDensity::gauss_mix({{0.3, 0.4, 0.3}, {-1.5, 0.0, 1.8}, {0.5, 0.35, 0.6}});
    return t;
}

} // namespace

TEST_SUITE("reparam") {

TEST_CASE("identity-initialized 1D model is the identity") {
    SamplerOptions o;
    o.init = InitKind::Identity;
    const SamplerModel m = make_sampler(o, 3);
    for (double z : {-3.0, -0.5, 0.0, 0.37, 2.2}) {
        const auto r = transform(m, std::vector<double>{z}, Condition::none());
        CHECK(std::abs(r.u[0] - z) < 1e-12);
        CHECK(std::abs(r.det_j - 1.0) < 1e-12);
    }
}

TEST_CASE("disk output map sends (0,0,c) to the center") {
    SamplerOptions o;
    o.domain = Domain::Disk2D;
    SamplerModel m = make_sampler(o, 1);
    std::fill(m.net.values.begin(), m.net.values.end(), 0.0);
    const std::size_t last = m.net.spec.num_layers() - 1;
    m.net.values[m.net.spec.bias_offset(last) + 2] = 0.8;
    const auto r = transform(m, std::vector<double>{0.4, -1.2}, Condition::none());
    CHECK(r.u[0] == 0.0);
    CHECK(r.u[1] == 0.0);
}

TEST_CASE("disk jacobian determinant matches finite differences") {
    Rng rng(4);
    for (int k = 0; k < 20; ++k) {
        const SamplerModel m = random_model(Domain::Disk2D, k % 2 == 1, 100 + k);
        const Condition c = m.conditional() ? sample_condition(rng) : Condition::none();
        const std::vector<double> z{rng.normal(), rng.normal()};
        const auto r = transform(m, z, c);
        double J[2][2];
        for (int j = 0; j < 2; ++j)
            for (int i = 0; i < 2; ++i)
                J[i][j] = oracle::central_diff([&](const std::vector<double> &v) { return transform(m, v, c).u[i]; }, z, j);
        const double fd = J[0][0] * J[1][1] - J[0][1] * J[1][0];
        CHECK(oracle::rel_err(r.det_j, fd) < 1e-3);
        CHECK(r.u[0] * r.u[0] + r.u[1] * r.u[1] < 1.0);
    }
}

TEST_CASE("defensive map closed form") {
    auto r = defensive_map(std::vector<double>{0.0, 0.0});
    CHECK(r.u[0] == 0.0);
    CHECK(r.det_j == 1.0);
    r = defensive_map(std::vector<double>{1.0, 0.0});
    CHECK(r.u[0] == doctest::Approx(0.70710678).epsilon(1e-8));
    CHECK(r.det_j == doctest::Approx(0.25));
    r = defensive_map(std::vector<double>{1.0, 1.0});
    CHECK(r.u[0] == doctest::Approx(0.57735).epsilon(1e-5));
    CHECK(r.u[1] == doctest::Approx(0.57735).epsilon(1e-5));
    CHECK(r.det_j == doctest::Approx(1.0 / 9.0));
    r = defensive_map(std::vector<double>{2.0});
    CHECK(r.u[0] == doctest::Approx(2.0 / std::sqrt(5.0)));
    CHECK(r.det_j == doctest::Approx(std::pow(5.0, -1.5)));
    // the defensive model runs through transform as well
    const auto t = transform(SamplerModel::defensive(Domain::Disk2D), std::vector<double>{1.0, 1.0}, Condition::none());
    CHECK(t.det_j == doctest::Approx(1.0 / 9.0));
}

TEST_CASE("upper bound loss dominates per sample") {
    for (int k = 0; k < 10; ++k) {
        const SamplerModel m = random_model(Domain::Line1D, false, 300 + k, 1.5);
        const TrainBatch b = make_train_batch(mix3(), Prior{}, 1, 512, 900 + k);
        const auto lp = evaluate_loss(m, mix3(), b, LossForm::RepPrime, false);
        const auto lr = evaluate_loss(m, mix3(), b, LossForm::Rep, false);
        const auto ln = evaluate_loss(m, mix3(), b, LossForm::Nll, false);
        for (std::size_t i = 0; i < lp.terms.size(); ++i) CHECK(lp.terms[i] >= lr.terms[i]);
        CHECK(ln.loss <= lp.loss);
    }
}

TEST_CASE("loss gradient matches finite differences") {
    Prior p2;
    p2.dim = 2;
    const auto ggx = TargetDensity::ggx({0.4, 0.04, std::nullopt});
    const auto cases = {std::pair{Domain::Line1D, false}, std::pair{Domain::Disk2D, true}};
    int seed = 0;
    for (auto [dom, cond] : cases) {
        const SamplerModel m = random_model(dom, cond, 40 + seed);
        const TargetDensity &t = dom == Domain::Line1D ? mix3() : ggx;
        const TrainBatch b = make_train_batch(t, dom == Domain::Line1D ? Prior{} : p2, 3, 16, 77 + seed);
        for (LossForm form : {LossForm::RepPrime, LossForm::Nll}) {
            const auto r = evaluate_loss(m, t, b, form, true);
            auto loss = [&](const std::vector<double> &theta) {
                SamplerModel q = m;
                q.net.values = theta;
                return evaluate_loss(q, t, b, form, false).loss;
            };
            for (std::size_t i = 0; i < m.net.values.size(); i += 3)
                CHECK(oracle::rel_err(r.grad[i], oracle::central_diff(loss, m.net.values, i, 1e-6)) < 1e-3);
        }
        ++seed;
    }
}

TEST_CASE("exact reparameterization gives the prior entropy") {
    // f = pushforward of N(0,1) under the 1D defensive map, f(u) = phi(u / sqrt(1-u^2)) (1-u^2)^{-3/2};
    // then f(I(z)) |dI/dz| = q(z) term by term and the loss is the prior entropy.
    const TrainBatch b = make_train_batch(false, Prior{}, 1, 4096, 5);
    const SamplerModel m = SamplerModel::defensive(Domain::Line1D);
    double sum = 0.0;
    for (std::size_t i = 0; i < b.z.size(); ++i) {
        const auto r = transform(m, b.z.point(i), Condition::none());
        const double u = r.u[0];
        const double f = oracle::normal_pdf(u / std::sqrt(1 - u * u)) * std::pow(1 - u * u, -1.5);
        const double term = -std::log(f * r.det_j);
        CHECK(oracle::rel_err(term, -std::log(b.z.q[i])) < 1e-9);
        sum += term;
    }
    CHECK(std::abs(sum / 4096.0 - 0.5 * std::log(2 * M_PI * M_E)) < 0.05);
}

TEST_CASE("alpha outside [0,1) is rejected") {
    SamplerOptions o;
    o.alpha = 1.0;
    CHECK_THROWS_AS(make_sampler(o, 1), InvalidArgument);
    SamplerModel m = make_sampler(SamplerOptions{}, 1);
    m.alpha = 1.0;
    const TrainBatch b = make_train_batch(mix3(), Prior{}, 1, 8, 1);
    CHECK_THROWS_AS(evaluate_loss(m, mix3(), b, LossForm::RepPrime), InvalidArgument);
}

TEST_CASE("training a single gaussian reaches the entropy bound") {
    const auto t = TargetDensity::gauss_mix({{1.0}, {0.5}, {0.8}});
    SamplerOptions o;
    o.init = InitKind::Identity;
    TrainConfig c;
    c.steps = 1500;
    c.batch_conditions = 8;
    c.seed = 3;
    c.learning_rate = 2e-3;
    const auto r = train_sampler(t, Prior{}, o, c);
    const double F = quadrature_integral(t, Condition::none(), {}, 4096);
    CHECK(std::abs(r.log.final_loss - (0.5 * std::log(2 * M_PI * M_E) + std::log(F))) < 0.01 + 0.05);
    // evaluate on a large fresh batch for a tighter check
    const TrainBatch big = make_train_batch(t, Prior{}, 1, 200000, 11);
    const auto l = evaluate_loss(r.model, t, big, LossForm::RepPrime, false);
    CHECK(std::abs(l.loss - (0.5 * std::log(2 * M_PI * M_E) + std::log(F))) < 0.01);
    CHECK(r.log.rows.front().step == 0);
    CHECK(r.log.rows.back().step == c.steps - 1);
}

TEST_CASE("training is deterministic") {
    TrainConfig c;
    c.steps = 20;
    c.batch_conditions = 2;
    c.batch_z = 64;
    c.seed = 9;
    const auto a = train_sampler(mix3(), Prior{}, SamplerOptions{}, c);
    const auto b = train_sampler(mix3(), Prior{}, SamplerOptions{}, c);
    CHECK(a.model.net.values == b.model.net.values);
    CHECK(a.log.final_loss == b.log.final_loss);
}

TEST_CASE("draws") {
    SamplerOptions o;
    o.init = InitKind::Identity;
    const SamplerModel id = make_sampler(o, 1);
    const DrawBatch d = draw_samples(id, Prior{}, Condition::none(), 1000, 5);
    const PriorBatch z = prior_sample(Prior{}, 1000, derive_seed(5, stream::Draw));
    CHECK(d.u == z.z);
    Prior p2;
    p2.dim = 2;
    const DrawBatch disk = draw_samples(random_model(Domain::Disk2D, false, 8, 2.0), p2, Condition::none(), 10000, 1);
    for (std::size_t i = 0; i < disk.size(); ++i) REQUIRE(disk.u[2 * i] * disk.u[2 * i] + disk.u[2 * i + 1] * disk.u[2 * i + 1] < 1.0);
    CHECK_THROWS_AS(draw_samples(id, p2, Condition::none(), 10, 1), InvalidArgument);
}

TEST_CASE("conditional model requires a condition") {
    const SamplerModel m = random_model(Domain::Disk2D, true, 3);
    CHECK_THROWS_AS(transform(m, std::vector<double>{0.1, 0.2}, Condition::none()), InvalidArgument);
    CHECK_THROWS_AS(transform(m, std::vector<double>{NAN, 0.2}, Condition::at(0, 0)), InvalidArgument);
}

}
