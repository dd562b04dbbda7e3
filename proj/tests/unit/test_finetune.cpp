#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "trbsde/finetune.hpp"
#include "trbsde/oracles.hpp"

#include <cmath>
#include <vector>

using namespace trbsde;

namespace {

const GaussianMixture1D kBimodal({0.5, 0.5}, {-3.0, 3.0}, {1.0, 1.0});

std::vector<double> row(const Mat& m) { return {m.data(), m.data() + m.size()}; }

FinetuneConfig tiny_config() {
    FinetuneConfig c;
    c.outer_iterations = 5;
    c.inner_iterations = 2;
    c.q0_steps = 20;
    c.n_paths = 200;
    c.n_steps = 50;
    c.score_train.steps = 50;
    c.regression.steps = 50;
    c.eval_paths = 200;
    return c;
}

}  // namespace

TEST_CASE("Gaussian KL values") {
    CHECK(gaussian_kl(0.0, 1.0) == 0.0);
    CHECK(gaussian_kl(1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(gaussian_kl(0.0, 2.0) == doctest::Approx(0.5 * (4.0 - std::log(4.0) - 1.0)).epsilon(1e-14));
    CHECK(gaussian_kl(0.0, 2.0) == doctest::Approx(0.8069).epsilon(1e-4));
    CHECK(gaussian_kl(0.3, 0.7) > 0.0);
    CHECK_THROWS(gaussian_kl(0.0, 0.0));
    CHECK_THROWS(gaussian_kl(0.0, -1.0));
}

TEST_CASE("initial distribution gradients: closed-form cases") {
    const std::vector<double> x0{-1.0, 0.5, 2.0, 0.1};
    const std::vector<double> zero(4, 0.0);
    const InitGradients g0 = init_dist_gradients(zero, x0, 0.0, 1.0);
    CHECK(g0.d_mu == 0.0);
    CHECK(g0.d_q == 0.0);

    const std::vector<double> c(4, 0.7);
    CHECK(init_dist_gradients(c, x0, 0.4, 1.3).d_mu == doctest::Approx(0.7 + 0.4).epsilon(1e-14));

    const std::vector<double> none;
    CHECK_THROWS(init_dist_gradients(none, none, 0.0, 1.0));
    CHECK_THROWS(init_dist_gradients(c, std::vector<double>{1.0}, 0.0, 1.0));
}

TEST_CASE("initial distribution gradients match finite differences on a quadratic toy") {
    // f = 0, g = 0, l = x^2 / 2: X_T = X_0 = mu + Q xi and Y_0 = X_0.
    NoiseStream s(17, 0);
    std::vector<double> xi(20000);
    for (double& v : xi) v = s.normal();
    auto objective = [&](double mu, double Q) {
        double acc = 0.0;
        for (double v : xi) acc += 0.5 * (mu + Q * v) * (mu + Q * v);
        return acc / static_cast<double>(xi.size()) + gaussian_kl(mu, Q);
    };
    const double mu = 0.4, Q = 1.3, h = 1e-5;
    std::vector<double> x0(xi.size());
    for (std::size_t i = 0; i < xi.size(); ++i) x0[i] = mu + Q * xi[i];
    const InitGradients g = init_dist_gradients(x0, x0, mu, Q);
    const double fd_mu = (objective(mu + h, Q) - objective(mu - h, Q)) / (2 * h);
    const double fd_q = (objective(mu, Q + h) - objective(mu, Q - h)) / (2 * h);
    CHECK(std::abs(g.d_mu - fd_mu) <= 1e-3 * std::abs(fd_mu));
    CHECK(std::abs(g.d_q - fd_q) <= 1e-3 * std::abs(fd_q));
}

TEST_CASE("GaussianInit keeps Q positive") {
    GaussianInit q{.mu = 0.5, .log_q = std::log(0.2)};
    CHECK(q.Q() == doctest::Approx(0.2));
    q.log_q = -50.0;
    CHECK(q.Q() > 0.0);
}

TEST_CASE("pretrained model construction") {
    const PretrainedModel pm = build_pretrained_model(kBimodal, 8.0, 1.0);
    const GaussianMixture1D end = pm.noised(1.0);
    const double alpha = std::exp(-4.0);
    CHECK(end.means[1] == doctest::Approx(3.0 * alpha).epsilon(1e-12));
    CHECK(end.variances[0] == doctest::Approx(alpha * alpha + 1.0 - alpha * alpha).epsilon(1e-12));
    CHECK(std::abs(pm.start_variance() - 1.0) <= 0.01);
    CHECK_THROWS(build_pretrained_model(kBimodal, 1.0, 1.0));
    CHECK_THROWS(build_pretrained_model(kBimodal, -8.0, 1.0));
}

TEST_CASE("pretrained terminal law matches the target mixture") {
    const PretrainedModel pm = build_pretrained_model(kBimodal, 8.0, 1.0);
    const std::vector<double> xs = sample_terminal(pm, ControlLaw::zero(1), GaussianInit{}, 10000, 200, 5);
    const double w1 = w1_to_mixture(xs, kBimodal);
    MESSAGE("pretrained W1 = " << w1);
    CHECK(w1 <= 0.15);
}

TEST_CASE("single-component target gives a stationary OU bridge") {
    const GaussianMixture1D normal({1.0}, {0.0}, {1.0});
    const PretrainedModel pm = build_pretrained_model(normal, 8.0, 1.0);
    const std::vector<double> xs = sample_terminal(pm, ControlLaw::zero(1), GaussianInit{}, 20000, 200, 9);
    double m = 0, v = 0;
    for (double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    for (double x : xs) v += (x - m) * (x - m);
    v /= static_cast<double>(xs.size() - 1);
    const double n = static_cast<double>(xs.size());
    CHECK(std::abs(m) <= 4.0 / std::sqrt(n));
    CHECK(std::abs(v - 1.0) <= 4.0 * std::sqrt(2.0 / n) + 0.02);
}

TEST_CASE("exact pretrained score is G d/dx log pbar") {
    const PretrainedModel pm = build_pretrained_model(kBimodal, 8.0, 1.0);
    const ScoreField s = pm.exact_score();
    Mat x(1, 3);
    x << -2.0, 0.3, 3.1;
    const Mat v = s.evaluate(0.25, x);
    const GaussianMixture1D p = pm.noised(0.75);
    for (int i = 0; i < 3; ++i) CHECK(v(0, i) == doctest::Approx(8.0 * p.log_density_grad(x(0, i))).epsilon(1e-12));
}

TEST_CASE("SOC objective bookkeeping") {
    const PretrainedModel pm = build_pretrained_model(kBimodal, 8.0, 1.0);
    const TimeGrid grid(0.0, 1.0, 50);
    SUBCASE("zero control, nominal init, zero cost") {
        const GaussianInit q0;
        const auto batch = simulate_forward(pm.model, q0.sampler(), ControlLaw::zero(1), grid, 500, 3);
        const SocTerms t = soc_objective_eval(batch, tilt_cost(0.0), q0);
        CHECK(t.total == 0.0);
        CHECK(t.running == 0.0);
        CHECK(t.kl == 0.0);
    }
    SUBCASE("terms add up under a nonzero control") {
        const GaussianInit q0{.mu = 0.3, .log_q = std::log(0.8)};
        const ControlLaw u = ControlLaw::from_batch(1, [](double t, const Mat& X) { return Mat((0.5 + t) * X); });
        const auto batch = simulate_forward(pm.model, q0.sampler(), u, grid, 500, 4);
        const SocTerms t = soc_objective_eval(batch, tilt_cost(0.5), q0);
        CHECK(t.running > 0.0);
        CHECK(t.kl == doctest::Approx(gaussian_kl(0.3, 0.8)).epsilon(1e-14));
        CHECK(t.total == t.terminal + t.running + t.kl);
    }
}

TEST_CASE("SOC terminal term on the OU testbed") {
    const double rate = 1.0, sigma = 0.7, T = 1.0;
    const int n = 100, N = 20000;
    const SdeModel ou = ou_model(rate, sigma);
    const TimeGrid grid(0.0, T, n);
    const GaussianInit q0{.mu = 0.5, .log_q = 0.0};
    const auto batch = simulate_forward(ou, q0.sampler(), ControlLaw::zero(1), grid, N, 21);
    const SocTerms t = soc_objective_eval(batch, TerminalCost::quadratic(Mat::Identity(1, 1), Vec::Zero(1)), q0);
    // Exact moments of the Euler recursion.
    const double dt = T / n;
    double m = 0.5, v = 1.0;
    for (int k = 0; k < n; ++k) {
        m *= 1.0 - rate * dt;
        v = (1.0 - rate * dt) * (1.0 - rate * dt) * v + sigma * sigma * dt;
    }
    const double expected = 0.5 * (v + m * m);
    const double sd = 0.5 * std::sqrt((2.0 * v * v + 4.0 * m * m * v) / N);
    CHECK(std::abs(t.terminal - expected) <= 3.0 * sd);
}

TEST_CASE("zero tilt leaves the pretrained model unchanged") {
    const PretrainedModel pm = build_pretrained_model(kBimodal, 8.0, 1.0);
    const FinetuneConfig cfg = tiny_config();
    for (bool tr : {true, false}) {
        const FinetuneResult r =
            tr ? finetune_trbsde(pm, tilt_cost(0.0), cfg) : finetune_adjoint_matching(pm, tilt_cost(0.0), cfg);
        CHECK(std::abs(r.init.mu) <= 0.1);
        CHECK(std::abs(r.init.Q() - 1.0) <= 0.1);
        const Mat x = RowVec::LinSpaced(21, -4.0, 4.0);
        double umax = 0.0;
        for (double t : {0.0, 0.5, 1.0}) umax = std::max(umax, r.control.evaluate(t, x).cwiseAbs().maxCoeff());
        CHECK(umax <= 0.05);
    }
}

TEST_CASE("adjoint matching inner regression loss decreases within an outer iteration") {
    const PretrainedModel pm = build_pretrained_model(kBimodal, 8.0, 1.0);
    FinetuneConfig cfg;
    cfg.outer_iterations = 1;
    cfg.inner_iterations = 10;
    cfg.q0_update_every = 0;
    cfg.n_paths = 1000;
    cfg.n_steps = 100;
    cfg.regression.steps = 1000;
    cfg.eval_paths = 200;
    const FinetuneResult r = finetune_adjoint_matching(pm, tilt_cost(1.0 / 8.0), cfg);
    REQUIRE(r.history.size() == 1u);
    const std::vector<double>& l = r.history.front().inner_losses;
    REQUIRE(l.size() == 11u);
    MESSAGE("inner loss " << l.front() << " -> " << l.back());
    CHECK(l.back() <= 0.5 * l.front());
}

TEST_CASE("adjoint matching targets are -g^T Y") {
    const PretrainedModel pm = build_pretrained_model(kBimodal, 8.0, 1.0);
    const TimeGrid grid(0.0, 1.0, 10);
    const auto batch = simulate_forward(pm.model, GaussianInit{}.sampler(), ControlLaw::zero(1), grid, 7, 2);
    const auto adj = simulate_nonadapted(batch, pm.model, tilt_cost(0.5));
    const RegressionData d = adjoint_matching_data(batch, adj, pm.model);
    REQUIRE(d.Y.cols() == 11 * 7);
    CHECK(d.t(7 * 4) == doctest::Approx(0.4));
    CHECK(d.Y(0, 7 * 4 + 3) == doctest::Approx(-std::sqrt(8.0) * adj.Y[4](0, 3)).epsilon(1e-14));
    CHECK(d.X(0, 7 * 10 + 2) == batch.terminal()(0, 2));
    const std::vector<double> terminal = row(d.Y.rightCols(7));
    for (int i = 0; i < 7; ++i)
        CHECK(terminal[static_cast<std::size_t>(i)] ==
              doctest::Approx(-std::sqrt(8.0) * 0.5 * (batch.terminal()(0, i) - 3.0)).epsilon(1e-12));
}
