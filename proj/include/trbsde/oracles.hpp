#pragma once

#include "trbsde/adjoint.hpp"
#include "trbsde/mlp.hpp"
#include "trbsde/score.hpp"
#include "trbsde/tr_bsde.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace trbsde {

/// dX = A X dt + eps B dW, terminal cost 1/2 X_T^T Q_f X_T, X_0 ~ N(0, I).
struct LinearModelConfig {
    Mat A;
    Mat B;
    Mat Qf;
    double epsilon = 1.0;
    double horizon = 2.0;

    static LinearModelConfig standard(double epsilon = 1.0);

    SdeModel model() const;
    TerminalCost cost() const;
};

/// Matrix exponential (Pade scaling-and-squaring).
Mat expm(const Mat& M);

/// G(t) = exp(A^T (T - t)) Q_f exp(A (T - t)), the gain with phi(t, x) = G(t) x.
Mat lyapunov_gain(const LinearModelConfig& cfg, double t);

/// Same gain from classical RK4 on dG/dt = -A^T G - G A backward from G(T) = Q_f.
Mat lyapunov_gain_ode(const LinearModelConfig& cfg, double t, int steps = 4000);

/// Mean and covariance of X_t for dX = A X dt + g dW with Gaussian X_0.
struct GaussianMoments {
    Vec mean;
    Mat cov;
};
GaussianMoments linear_gaussian_marginal(const Mat& A, const Mat& g, const Vec& m0, const Mat& S0, double t);

/// Exact score G grad log p_t = -G S_t^{-1} (x - m_t) of those marginals.
ScoreField linear_gaussian_score(const Mat& A, const Mat& g, const Vec& m0, const Mat& S0);

/// phi(t, x) = G(t) x with the Lyapunov gain, in the form simulate_tr_bsde consumes.
PhiDerivatives lyapunov_phi(const LinearModelConfig& cfg);

/// Component-wise completion of squares for p(x) exp(-beta/2 (x - center)^2).
GaussianMixture1D tilted_mixture(const GaussianMixture1D& target, double beta, double center = 3.0);

/// (1/n) sum ||G(0) xi - phi(0, xi)||^2 over fresh xi ~ N(0, I).
double mse_vs_oracle(const Mlp& phi, const LinearModelConfig& cfg, int n_eval = 10000, std::uint64_t seed = 0);

/// 1-D Wasserstein-1 between two empirical measures: the integral of
/// |F_a - F_b|, which for equal sizes is the mean absolute difference of
/// order statistics.
double w1_distance(std::span<const double> a, std::span<const double> b);

/// 1-D Wasserstein-1 between an empirical measure and a Gaussian mixture,
/// integrated in closed form.
double w1_to_mixture(std::span<const double> samples, const GaussianMixture1D& mix);

struct CostMapSpec {
    double theta_min = -2.0 * 3.14159265358979323846;
    double theta_max = 2.0 * 3.14159265358979323846;
    double omega_min = -3.0;
    double omega_max = 3.0;
    int resolution = 50;
    int rollouts = 200;
    double horizon = 1.0;
    int n_steps = 100;
    std::uint64_t seed = 0;
};

struct CostMap {
    Vec theta;  // grid values along the first state coordinate
    Vec omega;  // grid values along the second
    Mat cost;   // cost(i, j) = E[l_f(X_T) | X_0 = (theta_i, omega_j)]
};

/// Monte-Carlo estimate of the expected terminal cost on a regular grid of
/// initial states of a two-dimensional model.
CostMap mc_cost_map(const SdeModel& model, const TerminalCost& cost, const CostMapSpec& spec);

}  // namespace trbsde
