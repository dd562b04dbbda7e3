#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "trbsde/oracles.hpp"
#include "trbsde/simulate.hpp"
#include "trbsde/types.hpp"

#include <cmath>
#include <numbers>
#include <algorithm>
#include <sstream>

using namespace trbsde;

TEST_CASE("noise streams are reproducible and standard normal") {
    NoiseStream a(7, 3, 1), b(7, 3, 1), c(7, 4, 1);
    double sum = 0, sq = 0, diff = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = a.normal();
        CHECK(z == b.normal());
        diff += std::abs(z - c.normal());
        sum += z;
        sq += z * z;
    }
    CHECK(diff > 0);
    CHECK(std::abs(sum / n) < 5.0 / std::sqrt(n));
    CHECK(std::abs(sq / n - 1.0) < 5.0 * std::sqrt(2.0 / n));
}

TEST_CASE("time grid validation") {
    CHECK_THROWS(TimeGrid(0.0, 1.0, 0));
    CHECK_THROWS(TimeGrid(1.0, 1.0, 10));
    const TimeGrid g(0.0, 2.0, 4);
    CHECK(g.dt() == doctest::Approx(0.5));
    CHECK(g.time(4) == doctest::Approx(2.0));
}

TEST_CASE("deterministic linear flow converges to the matrix exponential at first order") {
    const auto cfg = LinearModelConfig::standard(0.0);
    const SdeModel m = cfg.model();
    Vec x0(2);
    x0 << 1.0, 0.0;
    const Vec exact = expm(2.0 * cfg.A) * x0;
    double prev = 0;
    for (int n : {200, 400, 800}) {
        const auto b = simulate_forward_from(m, Mat(x0), ControlLaw::zero(2), TimeGrid(0, 2, n), 1);
        const double err = (b.terminal().col(0) - exact).norm();
        CHECK(err < 5.0 / n);
        if (prev > 0) CHECK(prev / err == doctest::Approx(2.0).epsilon(0.1));
        prev = err;
    }
}

TEST_CASE("OU terminal variance") {
    const SdeModel m = ou_model(1.0, 1.0);
    const int N = 10000;
    const auto b = simulate_forward(m, point_init(Vec::Zero(1)), ControlLaw::zero(1), TimeGrid(0, 1, 1000), N, 11);
    const Eigen::ArrayXd x = b.terminal().row(0).transpose().array();
    const double var = (x - x.mean()).square().sum() / (N - 1);
    const double exact = (1.0 - std::exp(-2.0)) / 2.0;
    CHECK(std::abs(var - exact) < 5.0 * exact * std::sqrt(2.0 / (N - 1)));
}

TEST_CASE("simulation is reproducible and uses common noise across initial states") {
    const SdeModel m = pendulum_model();
    const TimeGrid g(0, 1, 50);
    Mat x0 = Mat::Random(2, 5);
    const auto a = simulate_forward_from(m, x0, ControlLaw::zero(2), g, 99);
    const auto b = simulate_forward_from(m, x0, ControlLaw::zero(2), g, 99);
    const auto c = simulate_forward_from(m, x0.array() + 0.1, ControlLaw::zero(2), g, 99);
    CHECK((a.terminal() - b.terminal()).norm() == 0.0);
    for (int k = 0; k < g.n_steps; ++k) CHECK((a.noises[k] - c.noises[k]).norm() == 0.0);
    CHECK_THROWS_AS(simulate_forward(m, point_init(Vec::Zero(2)), ControlLaw::zero(2), g, 0, 1), std::invalid_argument);
}

TEST_CASE("non-finite states name the trajectory and step") {
    SdeModel m = linear_model(Mat::Identity(1, 1) * 1e300, Mat::Identity(1, 1));
    Mat x0(1, 2);
    x0 << 0.0, 1e10;
    try {
        simulate_forward_from(m, x0, ControlLaw::zero(1), TimeGrid(0, 1, 10), 1);
        FAIL("expected divergence");
    } catch (const SimulationDiverged& e) {
        CHECK(e.trajectory() == 1);
        CHECK(e.step() >= 0);
    }
}

TEST_CASE("sensitivity of the linear flow approaches the matrix exponential") {
    const auto cfg = LinearModelConfig::standard(0.5);
    const SdeModel m = cfg.model();
    const auto b = simulate_forward(m, gaussian_init(Vec::Zero(2), Mat::Identity(2, 2)), ControlLaw::zero(2),
                                    TimeGrid(0, 2, 2000), 3, 5);
    const auto s = simulate_sensitivity(m, b);
    for (const auto& p : s) CHECK((p.eta.back() - expm(2.0 * cfg.A)).norm() < 5e-3);
}

TEST_CASE("drift Jacobians") {
    const SdeModel lin = LinearModelConfig::standard().model();
    Vec x = Vec::Random(2);
    Mat A(2, 2);
    A << 0, 1, -1, -0.5;
    CHECK((lin.drift_jacobian(0.3, x) - A).cwiseAbs().maxCoeff() <= 1e-12);
    const SdeModel pend = pendulum_model();
    for (int i = 0; i < 10; ++i) {
        x = 3.0 * Vec::Random(2);
        Mat J(2, 2);
        J << 0, 1, std::cos(x(0)), -0.01;
        CHECK((pend.drift_jacobian(0.0, x) - J).cwiseAbs().maxCoeff() <= 1e-6);
        CHECK((drift_jacobian_fd(pend, 0.0, x) - J).cwiseAbs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("batch csv layout") {
    const auto b = simulate_forward(pendulum_model(), point_init(Vec::Zero(2)), ControlLaw::zero(2), TimeGrid(0, 1, 3), 2, 1);
    std::ostringstream os;
    write_batch_csv(os, b);
    const std::string s = os.str();
    CHECK(s.rfind("t,i,x0,x1\n", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == 1 + 2 * 4);
}
