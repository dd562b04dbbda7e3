#include "trbsde/adjoint.hpp"

#include "trbsde/parallel.hpp"

#include <cmath>

namespace trbsde {

TerminalCost TerminalCost::quadratic(const Mat& Q, const Vec& center, double beta) {
    TerminalCost c;
    c.value = [Q, center, beta](const Vec& x) {
        const Vec d = x - center;
        return 0.5 * beta * d.dot(Q * d);
    };
    c.gradient = [Q, center, beta](const Vec& x) -> Vec {
        const Mat sym = 0.5 * (Q + Q.transpose());
        return beta * (sym * (x - center));
    };
    return c;
}

TerminalCost TerminalCost::pendulum() {
    TerminalCost c;
    c.value = [](const Vec& x) { return 0.5 * x(1) * x(1) + 1.0 - std::cos(x(0)); };
    c.gradient = [](const Vec& x) -> Vec {
        Vec g(2);
        g << std::sin(x(0)), x(1);
        return g;
    };
    return c;
}

TerminalCost TerminalCost::constant(int dim, double value) {
    TerminalCost c;
    c.value = [value](const Vec&) { return value; };
    c.gradient = [dim](const Vec&) -> Vec { return Vec::Zero(dim); };
    return c;
}

namespace {

Mat terminal_gradients(const TrajectoryBatch& batch, const TerminalCost& cost) {
    Mat out(batch.dim, batch.n_paths);
    for (int i = 0; i < batch.n_paths; ++i) out.col(i) = cost.gradient(batch.terminal().col(i));
    return out;
}

Mat checked_jacobian(const SdeModel& model, double t, const Vec& x) {
    if (!model.drift_jacobian) throw std::invalid_argument("adjoint: model has no drift Jacobian");
    Mat J = model.drift_jacobian(t, x);
    if (J.rows() != model.dim || J.cols() != model.dim) throw DimensionMismatch("adjoint: drift Jacobian shape");
    return J;
}

}  // namespace

NonAdaptedAdjointPath simulate_nonadapted(const TrajectoryBatch& batch, const SdeModel& model,
                                          const TerminalCost& cost) {
    if (batch.dim != model.dim) throw DimensionMismatch("simulate_nonadapted: batch dimension");
    if (static_cast<int>(batch.states.size()) != batch.grid.n_points())
        throw std::invalid_argument("simulate_nonadapted: batch must store every grid index");
    const int K = batch.grid.n_steps;
    const double dt = batch.grid.dt();
    NonAdaptedAdjointPath path;
    path.Y.assign(K + 1, Mat(batch.dim, batch.n_paths));
    path.Y[K] = terminal_gradients(batch, cost);
    parallel_for(0, batch.n_paths, [&](int i) {
        for (int k = K - 1; k >= 0; --k) {
            const Mat J = checked_jacobian(model, batch.grid.time(k), batch.state(i, k));
            const Vec next = path.Y[k + 1].col(i);
            path.Y[k].col(i) = next + dt * (J.transpose() * next);
        }
    });
    return path;
}

Mat discrete_pathwise_gradient(const TrajectoryBatch& batch, const SdeModel& model, const TerminalCost& cost) {
    if (batch.dim != model.dim) throw DimensionMismatch("discrete_pathwise_gradient: batch dimension");
    const int n = model.dim;
    const double dt = batch.grid.dt();
    Mat out(n, batch.n_paths);
    parallel_for(0, batch.n_paths, [&](int i) {
        // X[k+1] = X[k] + dt f(t_k, X[k]) + g(t_k)(u_k dt + dW_k); the step map's
        // Jacobian is I + dt J_k since g, u and dW are frozen.
        Vec lambda = cost.gradient(batch.terminal().col(i));
        for (int k = batch.grid.n_steps - 1; k >= 0; --k) {
            const Mat step_jac = Mat::Identity(n, n) + dt * checked_jacobian(model, batch.grid.time(k), batch.state(i, k));
            lambda = step_jac.transpose() * lambda;
        }
        out.col(i) = lambda;
    });
    return out;
}

RegressionData adjoint_regression_data(const std::vector<TrajectoryBatch>& batches,
                                       const std::vector<NonAdaptedAdjointPath>& adjoints) {
    if (batches.size() != adjoints.size()) throw std::invalid_argument("adjoint_regression_data: size mismatch");
    Eigen::Index total = 0;
    for (const auto& b : batches) total += static_cast<Eigen::Index>(b.grid.n_points()) * b.n_paths;
    if (total == 0) throw std::invalid_argument("adjoint_regression_data: empty dataset");
    const int n = batches.front().dim;
    RegressionData d;
    d.t.resize(total);
    d.X.resize(n, total);
    d.Y.resize(n, total);
    Eigen::Index col = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
        const auto& batch = batches[b];
        for (int k = 0; k < batch.grid.n_points(); ++k) {
            const int N = batch.n_paths;
            d.t.segment(col, N).setConstant(batch.grid.time(k));
            d.X.middleCols(col, N) = batch.states[k];
            d.Y.middleCols(col, N) = adjoints[b].Y[k];
            col += N;
        }
    }
    return d;
}

RegressionReport pnaa_fit(const std::vector<TrajectoryBatch>& batches, const SdeModel& model,
                          const TerminalCost& cost, Mlp& net, const TrainOptions& opts, AdamState& state) {
    std::vector<NonAdaptedAdjointPath> adjoints;
    adjoints.reserve(batches.size());
    for (const auto& b : batches) adjoints.push_back(simulate_nonadapted(b, model, cost));
    return train_regression(net, adjoint_regression_data(batches, adjoints), opts, state);
}

}  // namespace trbsde
