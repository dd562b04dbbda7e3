#pragma once

#include "trbsde/regression.hpp"
#include "trbsde/simulate.hpp"

#include <functional>
#include <vector>

namespace trbsde {

/// Terminal loss l_f and its gradient.
struct TerminalCost {
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> gradient;

    /// 1/2 (x - center)^T Q (x - center) scaled by beta.
    static TerminalCost quadratic(const Mat& Q, const Vec& center, double beta = 1.0);
    /// 1/2 x_2^2 + 1 - cos(x_1).
    static TerminalCost pendulum();
    static TerminalCost constant(int dim, double c);
};

/// Non-adapted adjoint on every grid index, indexed like batch.states
/// (each entry n x N).
struct NonAdaptedAdjointPath {
    std::vector<Mat> Y;
};

/// Y[k] = Y[k+1] + dt J_k^T Y[k+1], Y[n_steps] = grad l_f(X[n_steps]),
/// with J_k = df/dx(t_k, X[k]).
NonAdaptedAdjointPath simulate_nonadapted(const TrajectoryBatch& batch, const SdeModel& model,
                                          const TerminalCost& cost);

/// d l_f(X[n_steps]) / d X[0] through the Euler map at frozen noise and
/// control, accumulated in reverse: lambda[k] = (I + dt J_k)^T lambda[k+1].
/// Returns an n x N matrix, one gradient per trajectory.
Mat discrete_pathwise_gradient(const TrajectoryBatch& batch, const SdeModel& model, const TerminalCost& cost);

/// Regression pairs ((t_k, X[i][k]) -> Y[i][k]) over all i, k.
RegressionData adjoint_regression_data(const std::vector<TrajectoryBatch>& batches,
                                       const std::vector<NonAdaptedAdjointPath>& adjoints);

/// Projected non-adapted adjoint: fits net to E[Y_t | X_t] by regressing the
/// pathwise adjoint onto (t, X_t). Trains `net` in place.
RegressionReport pnaa_fit(const std::vector<TrajectoryBatch>& batches, const SdeModel& model,
                          const TerminalCost& cost, Mlp& net, const TrainOptions& opts, AdamState& state);

}  // namespace trbsde
