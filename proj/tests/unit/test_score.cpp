#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "trbsde/score.hpp"

#include <cmath>

using namespace trbsde;

namespace {

const GaussianMixture1D kBimodal({0.5, 0.5}, {-3.0, 3.0}, {1.0, 1.0});

ScoreData frozen_samples(int n, std::uint64_t seed, const GaussianMixture1D& mix) {
    NoiseStream s(seed, 0);
    ScoreData d{RowVec::Zero(n), Mat(1, n)};
    for (int i = 0; i < n; ++i) d.X(0, i) = mix.sample(s);
    return d;
}

DiffusionOuter unit_G() {
    return [](double) { return Mat::Identity(1, 1); };
}

// psi(x) ~= a x through one tanh unit in its linear regime.
Mlp linear_psi(double a) {
    Mlp net({.state_dim = 1, .out_dim = 1, .hidden = 1, .depth = 1});
    const double e = 1e-4;
    net.params() << 0.0, e, 0.0, a / e, 0.0;
    return net;
}

}  // namespace

TEST_CASE("mixture log-density derivatives against finite differences") {
    const double h = 1e-5;
    for (double x : {-4.0, -1.0, 0.3, 3.0, 5.5}) {
        const double fd = (kBimodal.log_density(x + h) - kBimodal.log_density(x - h)) / (2 * h);
        CHECK(std::abs(analytic_mixture_score(kBimodal, 1.0, x) - fd) <= 1e-6);
        const double fd2 = (kBimodal.log_density_grad(x + h) - kBimodal.log_density_grad(x - h)) / (2 * h);
        CHECK(std::abs(kBimodal.log_density_hess(x) - fd2) <= 1e-5);
    }
    CHECK(analytic_mixture_score(kBimodal, 1.0, 0.0) == doctest::Approx(0.0));
    CHECK(analytic_mixture_score(kBimodal, 2.0, 3.0) == doctest::Approx(2.0 * kBimodal.log_density_grad(3.0)));
    CHECK(std::isfinite(analytic_mixture_score(kBimodal, 1.0, 1e4)));
    CHECK_THROWS(GaussianMixture1D({0.5, 0.6}, {0, 1}, {1, 1}));
    CHECK_THROWS(GaussianMixture1D({1.0}, {0}, {-1}));
}

TEST_CASE("implicit score matching: one-dimensional linear family") {
    const GaussianMixture1D n01({1.0}, {0.0}, {1.0});
    const ScoreData d = frozen_samples(200000, 1, n01);
    CHECK(ism_loss(Mlp({.state_dim = 1, .out_dim = 1}), d, unit_G()) == 0.0);
    const double at_min = ism_loss(linear_psi(-1.0), d, unit_G());
    CHECK(at_min == doctest::Approx(-0.5).epsilon(0.02));
    CHECK(ism_loss(linear_psi(-0.5), d, unit_G()) > at_min);
    CHECK(ism_loss(linear_psi(-1.5), d, unit_G()) > at_min);
}

TEST_CASE("implicit and explicit score matching differ by a psi-independent constant") {
    const ScoreData d = frozen_samples(100000, 2, kBimodal);
    Mlp net({.state_dim = 1, .out_dim = 1, .hidden = 8, .seed = 3});
    NoiseStream s(5, 0);
    for (Eigen::Index i = 0; i < net.n_params(); ++i) net.params()(i) += 0.3 * s.normal();
    // Per sample: (1/2 psi^2 + psi') - (1/2 (psi - s)^2 - 1/2 s^2) = psi' + psi s, mean zero.
    const auto der = net.derivatives(0.0, d.X, Mat::Identity(1, 1), false);
    Eigen::ArrayXd diff(d.size());
    for (Eigen::Index i = 0; i < d.size(); ++i)
        diff(i) = der.jac_cols[0](0, i) + der.value(0, i) * kBimodal.log_density_grad(d.X(0, i));
    const double se = std::sqrt((diff - diff.mean()).square().mean() / d.size());
    CHECK(std::abs(diff.mean()) < 4 * se);
}

TEST_CASE("ISM parameter gradient matches finite differences") {
    ScoreData d = frozen_samples(32, 4, kBimodal);
    d.t = RowVec::LinSpaced(32, 0.1, 1.0);
    Mlp net({.state_dim = 1, .out_dim = 1, .hidden = 8, .seed = 6});
    NoiseStream s(7, 0);
    for (Eigen::Index i = 0; i < net.n_params(); ++i) net.params()(i) += 0.3 * s.normal();
    const DiffusionOuter G = [](double t) { return Mat::Constant(1, 1, 1.0 + t); };
    Vec g;
    const double L = ism_loss_grad(net, d, G, g);
    CHECK(L == doctest::Approx(ism_loss(net, d, G)));
    for (Eigen::Index p = 0; p < net.n_params(); p += 3) {
        Mlp a = net, b = net;
        a.params()(p) += 1e-6;
        b.params()(p) -= 1e-6;
        CHECK(g(p) == doctest::Approx((ism_loss(a, d, G) - ism_loss(b, d, G)) / 2e-6).epsilon(1e-5).scale(1.0));
    }
}

TEST_CASE("learned score of a standard normal is -x") {
    const GaussianMixture1D n01({1.0}, {0.0}, {1.0});
    const ScoreData d = frozen_samples(200000, 8, n01);
    Mlp psi({.state_dim = 1, .out_dim = 1, .seed = 9});
    AdamState st(psi.n_params(), 1e-3);
    train_score(psi, d, unit_G(), {.steps = 3000, .batch_size = 256, .seed = 10, .ema_decay = 0.995}, st);
    CHECK(std::abs(psi(0.0, Vec::Zero(1))(0)) <= 0.05);
    CHECK(psi(0.0, Vec::Constant(1, 1.0))(0) == doctest::Approx(-1.0).epsilon(0.1));
}

TEST_CASE("learned score of the symmetric bimodal mixture vanishes at the origin") {
    // Few samples fall between the modes; a small set lets the net overfit there.
    const ScoreData d = frozen_samples(400000, 11, kBimodal);
    Mlp psi({.state_dim = 1, .out_dim = 1, .seed = 12});
    AdamState st(psi.n_params(), 1e-3);
    train_score(psi, d, unit_G(), {.steps = 3000, .batch_size = 256, .seed = 13, .ema_decay = 0.999}, st);
    CHECK(std::abs(psi(0.0, Vec::Zero(1))(0)) <= 0.1);
}

TEST_CASE("learned score of the OU-noised mixture") {
    // dX = -X dt + dW from the bimodal mixture: p_t has means m e^{-t}, variances v e^{-2t} + (1 - e^{-2t}) / 2.
    const SdeModel ou = ou_model(1.0, 1.0);
    const InitSampler init = [](NoiseStream& s) { return Vec::Constant(1, kBimodal.sample(s)); };
    const auto batch = simulate_forward(ou, init, ControlLaw::zero(1), TimeGrid(0, 1, 50), 2000, 14);
    Mlp psi({.state_dim = 1, .out_dim = 1, .horizon = 1.0, .seed = 15});
    AdamState st(psi.n_params(), 1e-3);
    train_score(psi, score_data_from_batch(batch), [](double) { return Mat::Identity(1, 1); },
                {.steps = 4000, .batch_size = 256, .seed = 16, .ema_decay = 0.995}, st);
    const double t = 0.5, a = std::exp(-t);
    const GaussianMixture1D pt({0.5, 0.5}, {-3 * a, 3 * a}, {a * a + (1 - a * a) / 2, a * a + (1 - a * a) / 2});
    CHECK(weighted_score_error(psi, t, pt, 1.0) <= 0.10);
}

TEST_CASE("score data skips the initial grid index") {
    const auto batch = simulate_forward(ou_model(1.0, 1.0), point_init(Vec::Zero(1)), ControlLaw::zero(1),
                                        TimeGrid(0, 1, 4), 3, 1);
    const ScoreData d = score_data_from_batch(batch);
    CHECK(d.size() == 12);
    CHECK(d.t.minCoeff() == doctest::Approx(0.25));
}

TEST_CASE("score training divergence guard") {
    const ScoreData d = frozen_samples(1000, 17, kBimodal);
    Mlp psi({.state_dim = 1, .out_dim = 1, .output_scale = 1e3, .seed = 18});
    AdamState st(psi.n_params(), 1.0);
    CHECK_THROWS_AS(train_score(psi, d, unit_G(), {.steps = 2000, .batch_size = 64, .eval_every = 1, .seed = 1}, st),
                    TrainingDiverged);
}
