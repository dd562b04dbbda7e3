#include "trbsde/tr_bsde.hpp"

#include "trbsde/parallel.hpp"

#include <cmath>
#include <iostream>
#include <sstream>

namespace trbsde {

Mat ReversedModel::drift(double t, const Mat& X) const {
    const double tf = horizon - t;
    Mat out = score.evaluate(tf, X);
    for (Eigen::Index i = 0; i < X.cols(); ++i) out.col(i) -= forward.drift(tf, X.col(i));
    return out;
}

Vec hamiltonian_grad_x(const SdeModel& model, double t, const Vec& x, const Vec& y) {
    return model.drift_jacobian(t, x).transpose() * y;
}

TrajectoryBatch simulate_reversed(const Mat& terminals, const ReversedModel& rmodel, const TimeGrid& grid,
                                  std::uint64_t seed) {
    const int n = rmodel.forward.dim;
    const int N = static_cast<int>(terminals.cols());
    if (terminals.rows() != n) throw DimensionMismatch("simulate_reversed: terminal dimension");
    if (N < 1) throw std::invalid_argument("simulate_reversed: no terminal samples");

    TrajectoryBatch batch;
    batch.grid = grid;
    batch.dim = n;
    batch.n_paths = N;
    batch.seed = seed;
    batch.states.reserve(grid.n_points());
    batch.states.push_back(terminals);

    std::vector<NoiseStream> streams;
    streams.reserve(N);
    for (int i = 0; i < N; ++i) streams.emplace_back(seed, static_cast<std::uint64_t>(i), 1);

    const double dt = grid.dt();
    const double sqrt_dt = std::sqrt(dt);
    for (int k = 0; k < grid.n_steps; ++k) {
        const double t = grid.time(k);
        const Mat& x = batch.states.back();
        Mat u = rmodel.control.evaluate(rmodel.horizon - t, x);
        const Mat drift = rmodel.drift(t, x);
        const Mat g = rmodel.diffusion(t);
        Mat dw(n, N);
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < n; ++j) dw(j, i) = sqrt_dt * streams[i].normal();
        Mat next = x + dt * drift + g * (dt * u + dw);
        for (int i = 0; i < N; ++i) {
            if (!next.col(i).allFinite()) {
                std::ostringstream msg;
                msg << "reversed simulation diverged: trajectory " << i << ", step " << k;
                throw SimulationDiverged(msg.str(), i, k);
            }
        }
        batch.controls.push_back(std::move(u));
        batch.noises.push_back(std::move(dw));
        batch.states.push_back(std::move(next));
    }
    return batch;
}

Mat ReversedAdjointPath::Z_at(int i, int k) const {
    const auto n = static_cast<Eigen::Index>(Y.front().rows());
    return Eigen::Map<const Mat>(Z[k].col(i).data(), n, n);
}

ReversedAdjointPath simulate_tr_bsde(const TrajectoryBatch& rbatch, const ReversedModel& rmodel, const Mlp& phi,
                                     const TerminalCost& cost) {
    if (phi.config().state_dim != rbatch.dim || phi.config().out_dim != rbatch.dim)
        throw DimensionMismatch("simulate_tr_bsde: phi must map R^n to R^n");
    return simulate_tr_bsde(
        rbatch, rmodel, [&phi](double t, const Mat& X, const Mat& G) { return phi.derivatives(t, X, G, true); }, cost);
}

ReversedAdjointPath simulate_tr_bsde(const TrajectoryBatch& rbatch, const ReversedModel& rmodel,
                                     const PhiDerivatives& phi, const TerminalCost& cost) {
    const int n = rbatch.dim;
    const int N = rbatch.n_paths;
    const double T = rmodel.horizon;
    const double dt = rbatch.grid.dt();

    ReversedAdjointPath path;
    path.Y.reserve(rbatch.grid.n_points());
    Mat y0(n, N);
    for (int i = 0; i < N; ++i) y0.col(i) = cost.gradient(rbatch.states[0].col(i));
    path.Y.push_back(std::move(y0));

    for (int k = 0; k < rbatch.grid.n_steps; ++k) {
        const double tf = T - rbatch.grid.time(k);
        const Mat& X = rbatch.states[k];
        const Mat& Y = path.Y.back();
        const Mat G = rmodel.forward.diffusion_outer(tf);
        const Mat g_rev = rmodel.diffusion(rbatch.grid.time(k));
        const Mlp::BatchDerivatives d = phi(tf, X, G);
        const Mat s = rmodel.score.evaluate(tf, X);
        const Mat& dw = rbatch.noises[k];

        Mat next(n, N);
        Mat Z(n * n, N);
        parallel_for(0, N, [&](int i) {
            const Mat jac = d.jacobian(i);
            const Vec xi = X.col(i);
            const Vec yi = Y.col(i);
            const Vec h = rmodel.forward.drift_jacobian(tf, xi).transpose() * yi;
            const Vec c = jac * s.col(i) + d.g_hess_trace.col(i);
            const Mat zt = jac * g_rev;  // Z~^T
            Eigen::Map<Mat>(Z.col(i).data(), n, n) = zt.transpose();
            next.col(i) = yi + dt * (h + c) + zt * dw.col(i);
        });
        for (int i = 0; i < N; ++i) {
            if (!next.col(i).allFinite()) {
                std::ostringstream msg;
                msg << "reversed adjoint diverged: trajectory " << i << ", step " << k;
                throw SimulationDiverged(msg.str(), i, k);
            }
        }
        path.Z.push_back(std::move(Z));
        path.Y.push_back(std::move(next));
    }
    return path;
}

RegressionData tr_bsde_regression_data(const TrajectoryBatch& rbatch, const ReversedAdjointPath& path,
                                       double horizon) {
    const int N = rbatch.n_paths;
    const Eigen::Index total = static_cast<Eigen::Index>(rbatch.grid.n_points()) * N;
    RegressionData d;
    d.t.resize(total);
    d.X.resize(rbatch.dim, total);
    d.Y.resize(rbatch.dim, total);
    for (int k = 0; k < rbatch.grid.n_points(); ++k) {
        const Eigen::Index col = static_cast<Eigen::Index>(k) * N;
        d.t.segment(col, N).setConstant(horizon - rbatch.grid.time(k));
        d.X.middleCols(col, N) = rbatch.states[k];
        d.Y.middleCols(col, N) = path.Y[k];
    }
    return d;
}

Mlp make_phi_net(int dim, const SolvePhiConfig& cfg) {
    return Mlp({.state_dim = dim,
                .out_dim = dim,
                .hidden = cfg.shape.hidden,
                .depth = cfg.shape.depth,
                .horizon = cfg.horizon,
                .output_scale = cfg.phi_output_scale,
                .seed = derive_seed(cfg.seed, 101)});
}

Mlp make_score_net(const SdeModel& model, const SolvePhiConfig& cfg) {
    double scale = cfg.score_output_scale;
    if (scale <= 0.0) {
        scale = model.diffusion_outer(cfg.horizon).diagonal().maxCoeff();
        if (!(scale > 0.0)) scale = 1.0;
    }
    return Mlp({.state_dim = model.dim,
                .out_dim = model.dim,
                .hidden = cfg.shape.hidden,
                .depth = cfg.shape.depth,
                .horizon = cfg.horizon,
                .output_scale = scale,
                .seed = derive_seed(cfg.seed, 202)});
}

SolvePhiResult solve_phi(const SdeModel& model, const ControlLaw& control, const TerminalCost& cost,
                         const InitSampler& q0, const SolvePhiConfig& cfg, PhiSolverState& state,
                         const SolvePhiOptions& options) {
    const TimeGrid grid(0.0, cfg.horizon, cfg.n_steps);
    const TrajectoryBatch forward =
        simulate_forward(model, q0, control, grid, cfg.n_paths, domain_seed(cfg.seed, SeedDomain::Forward));

    SolvePhiResult result{.phi = state.phi ? *state.phi : make_phi_net(model.dim, cfg)};

    ScoreField score;
    if (options.score) {
        score = *options.score;
    } else {
        if (!state.psi) state.psi = make_score_net(model, cfg);
        if (state.psi_opt.m.size() == 0) state.psi_opt = AdamState(state.psi->n_params(), cfg.score_lr);
        TrainOptions opts = cfg.score_train;
        opts.seed = domain_seed(cfg.seed, SeedDomain::Score);
        const DiffusionOuter G = [&model](double t) { return model.diffusion_outer(t); };
        result.score_loss = train_score(*state.psi, score_data_from_batch(forward, 1), G, opts, state.psi_opt).loss;
        score = ScoreField::from_net(*state.psi);
    }

    const ReversedModel rmodel{model, score, control, cfg.horizon};
    const TrajectoryBatch reversed =
        simulate_reversed(forward.terminal(), rmodel, grid, domain_seed(cfg.seed, SeedDomain::Reversed));

    if (state.phi_opt.m.size() == 0) state.phi_opt = AdamState(result.phi.n_params(), cfg.regression_lr);
    int rising = 0;
    for (int j = 0; j < cfg.outer_iterations; ++j) {
        const ReversedAdjointPath path = simulate_tr_bsde(reversed, rmodel, result.phi, cost);
        TrainOptions opts = cfg.regression;
        opts.seed = derive_seed(domain_seed(cfg.seed, SeedDomain::Regression), static_cast<std::uint64_t>(j));
        const RegressionReport rep =
            train_regression(result.phi, tr_bsde_regression_data(reversed, path, cfg.horizon), opts, state.phi_opt);
        PhiIteration it{.regression_loss = rep.final_holdout};
        if (options.oracle_mse) it.oracle_mse = options.oracle_mse(result.phi);
        if (!result.history.empty() && it.regression_loss >= result.history.back().regression_loss) {
            if (++rising >= 3) {
                std::ostringstream msg;
                msg << "solve_phi: regression loss has not decreased for 3 outer iterations (iteration " << j + 1
                    << ", loss " << it.regression_loss << ")";
                result.warnings.push_back(msg.str());
                rising = 0;
            }
        } else {
            rising = 0;
        }
        result.history.push_back(it);
    }
    state.phi = result.phi;
    return result;
}

}  // namespace trbsde
