#pragma once

#include "trbsde/adjoint.hpp"
#include "trbsde/score.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace trbsde {

/// Reversal of dX = f dt + g (k dt + dW) on [0, T]:
///   f~(t, x) = -f(T - t, x) + s(T - t, x),  g~(t) = -g(T - t),  U~ = k(T - t, x).
struct ReversedModel {
    SdeModel forward;
    ScoreField score;
    ControlLaw control;
    double horizon = 1.0;

    Mat drift(double t, const Mat& X) const;
    Mat diffusion(double t) const { return -forward.diffusion(horizon - t); }
};

/// dH/dx for state-independent diffusion: (df/dx)^T y.
Vec hamiltonian_grad_x(const SdeModel& model, double t, const Vec& x, const Vec& y);

/// Euler-Maruyama of the reversed SDE from X~_0 = the forward terminals
/// (one column per trajectory). The returned batch lives on the reversed
/// clock: states[k] approximates X at forward time T - k dt.
TrajectoryBatch simulate_reversed(const Mat& terminals, const ReversedModel& rmodel, const TimeGrid& grid,
                                  std::uint64_t seed);

struct ReversedAdjointPath {
    std::vector<Mat> Y;  // indexed like rbatch.states, n x N each
    std::vector<Mat> Z;  // n_steps entries; column i holds Z~ (n x n, column-major)

    Mat Z_at(int i, int k) const;
};

/// Value, x-Jacobian columns and G-weighted Hessian trace of phi at (t, X).
using PhiDerivatives = std::function<Mlp::BatchDerivatives(double t, const Mat& X, const Mat& G)>;

/// Y~[k+1] = Y~[k] + dt [ (df/dx)^T Y~[k] + c ] + Z~[k]^T dW~[k],  Y~[0] = grad l_f(X~[0]),
/// with c = (dphi/dx) s + Tr(G d^2 phi/dx^2) and Z~^T = (dphi/dx) g~, all at
/// forward time T - t_k and state X~[k]. Reuses rbatch's increments.
ReversedAdjointPath simulate_tr_bsde(const TrajectoryBatch& rbatch, const ReversedModel& rmodel, const Mlp& phi,
                                     const TerminalCost& cost);
ReversedAdjointPath simulate_tr_bsde(const TrajectoryBatch& rbatch, const ReversedModel& rmodel,
                                     const PhiDerivatives& phi, const TerminalCost& cost);

/// Pairs ((T - t_k, X~[k]) -> Y~[k]) over all trajectories and grid indices.
RegressionData tr_bsde_regression_data(const TrajectoryBatch& rbatch, const ReversedAdjointPath& path,
                                       double horizon);

struct NetworkShape {
    int hidden = 64;
    int depth = 2;
};

struct SolvePhiConfig {
    double horizon = 1.0;
    int n_paths = 1000;
    int n_steps = 100;
    int outer_iterations = 10;  // J_f
    TrainOptions score_train{.steps = 2000, .batch_size = 256};
    TrainOptions regression{.steps = 2000, .batch_size = 128};
    double score_lr = 1e-3;
    double regression_lr = 1e-3;
    NetworkShape shape;
    double phi_output_scale = 1.0;
    double score_output_scale = 0.0;  // 0 selects max diag G(T)
    std::uint64_t seed = 0;
};

/// Network state carried between calls (warm start).
struct PhiSolverState {
    std::optional<Mlp> phi;
    std::optional<Mlp> psi;
    AdamState phi_opt;
    AdamState psi_opt;
};

struct PhiIteration {
    double regression_loss = 0.0;  // held-out MSE after the regression
    double oracle_mse = std::numeric_limits<double>::quiet_NaN();
};

struct SolvePhiResult {
    Mlp phi;
    std::vector<PhiIteration> history;
    std::vector<double> score_loss;
    std::vector<std::string> warnings;
};

struct SolvePhiOptions {
    /// Use this score instead of learning one by score matching.
    std::optional<ScoreField> score;
    /// Evaluated on phi after every outer iteration.
    std::function<double(const Mlp&)> oracle_mse;
};

Mlp make_phi_net(int dim, const SolvePhiConfig& cfg);
Mlp make_score_net(const SdeModel& model, const SolvePhiConfig& cfg);

/// Time-reversed BSDE solver: forward simulation, score matching, one
/// reversed simulation, then outer_iterations rounds of {simulate the
/// reversed adjoint with the current phi; regress phi onto it}.
SolvePhiResult solve_phi(const SdeModel& model, const ControlLaw& control, const TerminalCost& cost,
                         const InitSampler& q0, const SolvePhiConfig& cfg, PhiSolverState& state,
                         const SolvePhiOptions& options = {});

}  // namespace trbsde
