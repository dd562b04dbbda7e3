#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "trbsde/adjoint.hpp"
#include "trbsde/oracles.hpp"

#include <cmath>

using namespace trbsde;

namespace {

TrajectoryBatch pendulum_batch(int n, int steps, std::uint64_t seed) {
    Mat cov = Mat::Identity(2, 2);
    cov(0, 0) = 4.0;
    return simulate_forward(pendulum_model(), gaussian_init(Vec::Zero(2), cov), ControlLaw::zero(2),
                            TimeGrid(0, 1, steps), n, seed);
}

}  // namespace

TEST_CASE("terminal cost gradients match finite differences") {
    Mat Q(2, 2);
    Q << 2.0, 0.3, 0.3, 1.0;
    Vec c(2);
    c << 1.0, -1.0;
    for (const TerminalCost& cost : {TerminalCost::quadratic(Q, c, 0.7), TerminalCost::pendulum()}) {
        NoiseStream s(1, 0);
        for (int p = 0; p < 10; ++p) {
            Vec x(2);
            x << 2 * s.normal(), 2 * s.normal();
            Vec fd(2);
            for (int j = 0; j < 2; ++j) {
                Vec e = Vec::Zero(2);
                e(j) = 1e-6;
                fd(j) = (cost.value(x + e) - cost.value(x - e)) / 2e-6;
            }
            CHECK((cost.gradient(x) - fd).norm() <= 1e-5 * std::max(1.0, fd.norm()));
        }
    }
    const TerminalCost pend = TerminalCost::pendulum();
    Vec x(2);
    x << 0.0, 2.0;
    CHECK(pend.value(x) == doctest::Approx(2.0));
}

TEST_CASE("non-adapted adjoint trivial cases") {
    const auto b = pendulum_batch(5, 20, 1);
    const auto zero = simulate_nonadapted(b, pendulum_model(), TerminalCost::constant(2, 3.0));
    for (const Mat& Y : zero.Y) CHECK(Y.norm() == 0.0);

    const SdeModel still = constant_drift_model(Vec::Zero(2), 0.5);
    const auto bs = simulate_forward(still, gaussian_init(Vec::Zero(2), Mat::Identity(2, 2)), ControlLaw::zero(2),
                                     TimeGrid(0, 1, 10), 4, 2);
    const TerminalCost pend = TerminalCost::pendulum();
    const auto path = simulate_nonadapted(bs, still, pend);
    for (int i = 0; i < 4; ++i) {
        const Vec g = pend.gradient(bs.terminal().col(i));
        for (const Mat& Y : path.Y) CHECK((Y.col(i) - g).norm() == 0.0);
        CHECK((discrete_pathwise_gradient(bs, still, pend).col(i) - g).norm() == 0.0);
    }
    const auto pb = pendulum_batch(3, 10, 3);
    const auto pp = simulate_nonadapted(pb, pendulum_model(), pend);
    for (int i = 0; i < 3; ++i) CHECK((pp.Y.back().col(i) - pend.gradient(pb.terminal().col(i))).norm() == 0.0);
}

TEST_CASE("linear non-adapted adjoint at time zero is exp(A^T T) Q_f X_T") {
    const auto cfg = LinearModelConfig::standard(1.0);
    double prev = 0;
    for (int n : {250, 500, 1000}) {
        const auto b = simulate_forward(cfg.model(), gaussian_init(Vec::Zero(2), Mat::Identity(2, 2)),
                                        ControlLaw::zero(2), TimeGrid(0, 2, n), 20, 4);
        const auto path = simulate_nonadapted(b, cfg.model(), cfg.cost());
        const Mat exact = expm(2.0 * cfg.A.transpose()) * cfg.Qf * b.terminal();
        const double err = (path.Y.front() - exact).norm() / exact.norm();
        CHECK(err < 5.0 / n);
        if (prev > 0) CHECK(prev / err == doctest::Approx(2.0).epsilon(0.15));
        prev = err;
    }
}

TEST_CASE("discrete duality holds to roundoff on the pendulum") {
    const SdeModel m = pendulum_model();
    const auto b = pendulum_batch(20, 200, 5);
    const auto eta = simulate_sensitivity(m, b);
    const auto path = simulate_nonadapted(b, m, TerminalCost::pendulum());
    double worst = 0;
    for (int i = 0; i < b.n_paths; ++i) {
        const RowVec ref = path.Y.back().col(i).transpose() * eta[i].eta.back();
        for (int k = 0; k <= b.grid.n_steps; ++k)
            worst = std::max(worst, (path.Y[k].col(i).transpose() * eta[i].eta[k] - ref).cwiseAbs().maxCoeff());
    }
    CHECK(worst <= 1e-10);
}

TEST_CASE("pathwise gradient matches common-random-number finite differences") {
    const SdeModel m = pendulum_model();
    const TerminalCost cost = TerminalCost::pendulum();
    const auto b = pendulum_batch(10, 100, 6);
    const Mat g = discrete_pathwise_gradient(b, m, cost);
    const auto na = simulate_nonadapted(b, m, cost);
    CHECK((g - na.Y.front()).norm() <= 1e-12 * g.norm());
    const double h = 1e-6;
    for (int i = 0; i < b.n_paths; ++i) {
        Vec fd(2);
        for (int j = 0; j < 2; ++j) {
            Mat xp = b.initial(), xm = b.initial();
            xp(j, i) += h;
            xm(j, i) -= h;
            const auto bp = simulate_forward_from(m, xp, ControlLaw::zero(2), b.grid, b.seed);
            const auto bm = simulate_forward_from(m, xm, ControlLaw::zero(2), b.grid, b.seed);
            fd(j) = (cost.value(bp.terminal().col(i)) - cost.value(bm.terminal().col(i))) / (2 * h);
        }
        CHECK((g.col(i) - fd).norm() <= 1e-4 * std::max(fd.norm(), 1e-3));
    }
}

TEST_CASE("PNAA recovers the adjoint exactly without noise") {
    const auto cfg = LinearModelConfig::standard(0.0);
    const auto b = simulate_forward(cfg.model(), gaussian_init(Vec::Zero(2), Mat::Identity(2, 2)), ControlLaw::zero(2),
                                    TimeGrid(0, 2, 50), 500, 7);
    Mlp net({.state_dim = 2, .out_dim = 2, .horizon = 2.0, .seed = 8});
    AdamState st(net.n_params(), 1e-3);
    const auto rep = pnaa_fit({b}, cfg.model(), cfg.cost(), net, {.steps = 6000, .batch_size = 128, .seed = 9}, st);
    CHECK(rep.final_holdout <= 1e-3);
}

TEST_CASE("PNAA at moderate noise gives a finite oracle MSE") {
    const auto cfg = LinearModelConfig::standard(0.5);
    const auto b = simulate_forward(cfg.model(), gaussian_init(Vec::Zero(2), Mat::Identity(2, 2)), ControlLaw::zero(2),
                                    TimeGrid(0, 2, 50), 500, 10);
    Mlp net({.state_dim = 2, .out_dim = 2, .horizon = 2.0, .seed = 11});
    AdamState st(net.n_params(), 1e-3);
    pnaa_fit({b}, cfg.model(), cfg.cost(), net, {.steps = 1000, .batch_size = 128, .seed = 12}, st);
    const double mse = mse_vs_oracle(net, cfg, 2000, 1);
    CHECK(std::isfinite(mse));
    MESSAGE("PNAA oracle MSE at eps = 0.5: " << mse);
}
