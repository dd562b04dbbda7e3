#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "trbsde/finetune.hpp"
#include "trbsde/oracles.hpp"

#include <cmath>
#include <numbers>

using namespace trbsde;

TEST_CASE("Lyapunov gain: exponential and ODE routes agree") {
    const auto cfg = LinearModelConfig::standard();
    for (double t : {0.0, 0.7, 2.0}) {
        CHECK((lyapunov_gain(cfg, t) - lyapunov_gain_ode(cfg, t)).cwiseAbs().maxCoeff() <= 1e-8);
    }
    CHECK((lyapunov_gain(cfg, 2.0) - cfg.Qf).norm() == 0.0);
}

TEST_CASE("linear Gaussian marginal against closed-form scalar OU") {
    Mat A = Mat::Constant(1, 1, -1.0), g = Mat::Constant(1, 1, 1.0);
    const auto m = linear_gaussian_marginal(A, g, Vec::Constant(1, 2.0), Mat::Constant(1, 1, 0.5), 1.0);
    CHECK(m.mean(0) == doctest::Approx(2 * std::exp(-1.0)));
    CHECK(m.cov(0, 0) == doctest::Approx(0.5 * std::exp(-2.0) + (1 - std::exp(-2.0)) / 2));
}

TEST_CASE("tilted single Gaussian completes the square") {
    const GaussianMixture1D n01({1.0}, {0.0}, {1.0});
    const auto t = tilted_mixture(n01, 1.0, 3.0);
    REQUIRE(t.size() == 1);
    CHECK(t.means[0] == doctest::Approx(1.5));
    CHECK(t.variances[0] == doctest::Approx(0.5));
    CHECK(t.weights[0] == doctest::Approx(1.0));
}

TEST_CASE("tilted bimodal target: weights and quadrature normalisation") {
    const GaussianMixture1D target({0.5, 0.5}, {-3.0, 3.0}, {1.0, 1.0});
    for (double beta : {1.0 / 50, 1.0 / 8, 1.0}) {
        const auto t = tilted_mixture(target, beta);
        // Quadrature of p(x) exp(-beta/2 (x-3)^2), normalised, against the closed form.
        const int n = 40000;
        const double lo = -15, hi = 15, h = (hi - lo) / n;
        double Z = 0;
        std::vector<double> vals(n + 1);
        for (int i = 0; i <= n; ++i) {
            const double x = lo + i * h;
            vals[i] = target.density(x) * std::exp(-0.5 * beta * (x - 3) * (x - 3));
            Z += (i == 0 || i == n ? 0.5 : 1.0) * vals[i] * h;
        }
        double err = 0, mass = 0;
        for (int i = 0; i <= n; ++i) {
            const double x = lo + i * h;
            err = std::max(err, std::abs(vals[i] / Z - t.density(x)));
            mass += (i == 0 || i == n ? 0.5 : 1.0) * t.density(x) * h;
        }
        CHECK(err <= 1e-6);
        CHECK(std::abs(mass - 1.0) <= 1e-6);
    }
    CHECK(tilted_mixture(target, 1.0).weights[1] > 0.99);
}

TEST_CASE("oracle MSE of the zero net is the trace of G0^T G0") {
    const auto cfg = LinearModelConfig::standard(0.5);
    const Mlp zero({.state_dim = 2, .out_dim = 2, .horizon = 2.0});
    const Mat G0 = lyapunov_gain(cfg, 0.0);
    const double tr = (G0.transpose() * G0).trace();
    CHECK(mse_vs_oracle(zero, cfg, 100000, 1) == doctest::Approx(tr).epsilon(0.03));
}

TEST_CASE("W1 between samples") {
    NoiseStream s(1, 0), r(2, 0);
    std::vector<double> a(100000), b(100000), c(70001);
    for (auto& v : a) v = s.normal();
    for (auto& v : b) v = r.normal() + 1.0;
    for (auto& v : c) v = r.normal() + 1.0;
    CHECK(std::abs(w1_distance(a, b) - 1.0) <= 0.02);
    CHECK(std::abs(w1_distance(a, c) - 1.0) <= 0.02);
    const std::vector<double> p{0.0}, q{2.0, 4.0};
    CHECK(w1_distance(p, q) == doctest::Approx(3.0));
    CHECK(w1_distance(q, q) == 0.0);
}

TEST_CASE("W1 to a mixture") {
    const GaussianMixture1D n01({1.0}, {0.0}, {1.0});
    const GaussianMixture1D shifted({1.0}, {1.0}, {1.0});
    NoiseStream s(3, 0);
    std::vector<double> a(100000);
    for (auto& v : a) v = s.normal();
    CHECK(w1_to_mixture(a, n01) < 0.01);
    CHECK(std::abs(w1_to_mixture(a, shifted) - 1.0) <= 0.02);
    // A single atom at the mean of N(0,1): E|Z| = sqrt(2/pi).
    const std::vector<double> atom{0.0};
    CHECK(w1_to_mixture(atom, n01) == doctest::Approx(std::sqrt(2.0 / std::numbers::pi)).epsilon(1e-10));
}

TEST_CASE("gaussian KL values") {
    CHECK(gaussian_kl(0.0, 1.0) == 0.0);
    CHECK(gaussian_kl(1.0, 1.0) == doctest::Approx(0.5));
    CHECK(gaussian_kl(0.0, 2.0) == doctest::Approx(0.5 * (4 - std::log(4.0) - 1)));
    CHECK(gaussian_kl(0.0, 2.0) == doctest::Approx(0.8069).epsilon(1e-4));
}

TEST_CASE("cost map: deterministic rollout at the equilibrium and symmetry") {
    const TerminalCost cost = TerminalCost::pendulum();
    CostMapSpec spec{.resolution = 3, .rollouts = 1, .horizon = 1.0, .n_steps = 100};
    const auto det = mc_cost_map(pendulum_model(0.01, 0.0), cost, spec);
    CHECK(det.cost(1, 1) == doctest::Approx(0.0));  // (0, 0) stays put
    CostMapSpec sym{.resolution = 9, .rollouts = 400, .horizon = 1.0, .n_steps = 50, .seed = 3};
    const auto map = mc_cost_map(pendulum_model(), cost, sym);
    double worst = 0;
    for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 9; ++j) {
            const double a = map.cost(i, j), b = map.cost(8 - i, 8 - j);
            worst = std::max(worst, std::abs(a - b) / (0.5 * (a + b) + 0.1));
        }
    CHECK(worst < 0.25);
    CHECK_THROWS(mc_cost_map(pendulum_model(), cost, {.resolution = 1}));
}
