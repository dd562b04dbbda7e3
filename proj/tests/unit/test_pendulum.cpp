#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "trbsde/pendulum.hpp"

#include <cmath>

using namespace trbsde;

namespace {

SupportOptConfig small_config(int iterations, double step) {
    SupportOptConfig c;
    c.iterations = iterations;
    c.step = step;
    c.log_every = 10;
    c.log_rollouts = 16;
    c.phi.horizon = 1.0;
    c.phi.n_steps = 50;
    return c;
}

}  // namespace

TEST_CASE("method names round trip") {
    for (GradientMethod m : {GradientMethod::TrBsde, GradientMethod::Pnaa, GradientMethod::Pathwise})
        CHECK(parse_method(method_name(m)) == m);
    CHECK_THROWS_AS(parse_method("autodiff"), std::invalid_argument);
}

TEST_CASE("uniform points lie in the box and are reproducible") {
    CostMapSpec box;
    const EmpiricalInit a = uniform_points(500, box, 3);
    const EmpiricalInit b = uniform_points(500, box, 3);
    CHECK(a.points == b.points);
    CHECK(a.frozen_count() == 0);
    CHECK(a.points.row(0).minCoeff() >= box.theta_min);
    CHECK(a.points.row(0).maxCoeff() <= box.theta_max);
    CHECK(a.points.row(1).minCoeff() >= box.omega_min);
    CHECK(a.points.row(1).maxCoeff() <= box.omega_max);
    CHECK(uniform_points(500, box, 4).points != a.points);
}

TEST_CASE("upright equilibrium without noise stays put") {
    const SdeModel model = pendulum_model(0.01, 0.0);
    EmpiricalInit q;
    q.points = Mat::Zero(2, 1);
    q.frozen = {false};
    for (GradientMethod m : {GradientMethod::Pathwise, GradientMethod::Pnaa}) {
        SupportOptConfig c = small_config(20, 1e-3);
        c.refresh_every = 10;
        c.phi.n_paths = 50;
        c.phi.outer_iterations = 1;
        c.phi.regression.steps = 20;
        const SupportOptResult r = optimize_support(m, model, TerminalCost::pendulum(), q, c);
        CHECK(r.points.points.col(0).norm() <= 20 * c.step * 0.05);
    }
}

TEST_CASE("pathwise gradient matches frozen-noise finite differences") {
    const SdeModel model = pendulum_model();
    const TerminalCost cost = TerminalCost::pendulum();
    const TimeGrid grid(0.0, 1.0, 100);
    const EmpiricalInit pts = uniform_points(10, CostMapSpec{}, 11);
    const double h = 1e-6;
    for (int i = 0; i < pts.size(); ++i) {
        const Vec x = pts.points.col(i);
        const std::uint64_t seed = 100 + static_cast<std::uint64_t>(i);
        const Mat g = discrete_pathwise_gradient(simulate_forward_from(model, x, ControlLaw::zero(2), grid, seed),
                                                 model, cost);
        Vec fd(2);
        for (int a = 0; a < 2; ++a) {
            Vec xp = x, xm = x;
            xp(a) += h;
            xm(a) -= h;
            const auto bp = simulate_forward_from(model, xp, ControlLaw::zero(2), grid, seed);
            const auto bm = simulate_forward_from(model, xm, ControlLaw::zero(2), grid, seed);
            fd(a) = (cost.value(bp.terminal().col(0)) - cost.value(bm.terminal().col(0))) / (2 * h);
        }
        CHECK((g.col(0) - fd).norm() <= 1e-4 * std::max(1.0, fd.norm()));
    }
}

TEST_CASE("point count is conserved and escaping points are frozen") {
    const SdeModel model = pendulum_model();
    EmpiricalInit q = uniform_points(30, CostMapSpec{}, 5);
    SupportOptConfig c = small_config(5, 200.0);
    c.freeze_radius = 50.0;
    const SupportOptResult r = optimize_support(GradientMethod::Pathwise, model, TerminalCost::pendulum(), q, c);
    CHECK(r.points.size() == 30);
    CHECK(r.points.frozen.size() == 30u);
    CHECK(r.points.frozen_count() > 0);
    for (int i = 0; i < r.points.size(); ++i) {
        if (r.points.frozen[i]) {
            const double n = r.points.points.col(i).norm();
            CHECK((!std::isfinite(n) || n > c.freeze_radius));
        } else {
            CHECK(r.points.points.col(i).norm() <= c.freeze_radius);
        }
    }
}

TEST_CASE("pathwise descent halves the mean cost") {
    const SdeModel model = pendulum_model();
    const EmpiricalInit q = uniform_points(40, CostMapSpec{}, 7);
    SupportOptConfig c = small_config(300, 0.05);
    const SupportOptResult r = optimize_support(GradientMethod::Pathwise, model, TerminalCost::pendulum(), q, c);
    REQUIRE(r.mean_cost.size() >= 2);
    CHECK(r.mean_cost.front().first == 0);
    CHECK(r.mean_cost.back().first == 300);
    CHECK(r.mean_cost.back().second <= 0.5 * r.mean_cost.front().second);
    CHECK(r.iterations_to_half_cost > 0);
    CHECK(r.snapshots.front().iteration == 0);
    CHECK(r.snapshots.back().iteration == 300);
}

TEST_CASE("TR-BSDE support optimisation runs and lowers the cost") {
    const SdeModel model = pendulum_model();
    const EmpiricalInit q = uniform_points(20, CostMapSpec{}, 9);
    SupportOptConfig c = small_config(60, 0.05);
    c.refresh_every = 20;
    c.phi.n_paths = 200;
    c.phi.outer_iterations = 3;
    c.phi.regression = {.steps = 300, .batch_size = 128};
    c.phi.score_train = {.steps = 300, .batch_size = 128};
    const SupportOptResult r = optimize_support(GradientMethod::TrBsde, model, TerminalCost::pendulum(), q, c);
    CHECK(r.points.points.allFinite());
    CHECK(r.mean_cost.back().second < r.mean_cost.front().second);
}

TEST_CASE("mean point cost ignores frozen points") {
    const SdeModel model = pendulum_model();
    EmpiricalInit q;
    q.points.resize(2, 2);
    q.points << 0.0, 3.0, 0.0, 0.0;
    q.frozen = {false, true};
    const double c = mean_point_cost(model, TerminalCost::pendulum(), q, 1e-9, 1, 4, 1);
    CHECK(c < 1e-6);
    q.frozen = {true, true};
    CHECK(mean_point_cost(model, TerminalCost::pendulum(), q, 1.0, 10, 4, 1) == 0.0);
}
