#pragma once

#include "trbsde/tr_bsde.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace trbsde {

/// q0 = N(mu, Q^2) in one dimension. Q is stored as log Q so that it stays positive.
struct GaussianInit {
    double mu = 0.0;
    double log_q = 0.0;

    double Q() const;
    InitSampler sampler() const;
};

/// KL(N(mu, Q^2) || N(0, 1)) = 1/2 (Q^2 + mu^2 - log Q^2 - 1).
double gaussian_kl(double mu, double Q);

struct InitGradients {
    double d_mu = 0.0;
    double d_q = 0.0;
};

/// d/dmu and d/dQ of E[J] + KL from samples (X0, Y0):
///   d_mu = E[Y0] + mu,  d_q = E[Y0 (X0 - mu) / Q] + Q - 1/Q.
InitGradients init_dist_gradients(std::span<const double> Y0, std::span<const double> X0, double mu, double Q);

/// A generative SDE on [0, T_gen] obtained by reversing the noising process
/// dZ = -(rate/2) Z ds + sqrt(rate) dB started at `target`, so that
///   f(t, x) = (rate/2) x + rate d/dx log pbar_{T_gen - t}(x),  g = sqrt(rate),
/// with pbar_s the noised mixture. Starting it from N(0, 1) approximately
/// reproduces the target at t = T_gen.
struct PretrainedModel {
    SdeModel model;
    GaussianMixture1D target;
    double rate = 8.0;
    double horizon = 1.0;

    /// Noised law pbar_s: means alpha_s m_k, variances alpha_s^2 v_k + 1 - alpha_s^2, alpha_s = e^{-rate s / 2}.
    GaussianMixture1D noised(double s) const;
    /// Variance of pbar_{T_gen}, the law the generative process should start from.
    double start_variance() const;
    /// Exact score G(t) d/dx log pbar_{T_gen - t} of the uncontrolled generative marginals.
    ScoreField exact_score() const;
};

PretrainedModel build_pretrained_model(const GaussianMixture1D& target, double rate = 8.0, double horizon = 1.0);

/// ell_f(x) = beta/2 (x - center)^2.
TerminalCost tilt_cost(double beta, double center = 3.0);

struct SocTerms {
    double total = 0.0;
    double terminal = 0.0;
    double running = 0.0;
    double kl = 0.0;
};

/// E[l_f(X_T)] + E[sum_k 1/2 ||U_k||^2 dt] + KL(q0 || N(0, 1)) on a batch
/// simulated under (q0, control). The three addends are reported separately.
SocTerms soc_objective_eval(const TrajectoryBatch& batch, const TerminalCost& cost, const GaussianInit& q0);

/// k(t, x) = -g(t)^T phi(t, x).
ControlLaw feedback_from_phi(const SdeModel& model, const Mlp& phi);
/// k(t, x) = net(t, x).
ControlLaw control_from_net(const Mlp& net);

struct FinetuneConfig {
    int outer_iterations = 30;  // k_f
    int inner_iterations = 10;  // J_f
    int q0_steps = 50;          // o_f
    int q0_update_every = 5;
    int q0_samples = 1000;
    double q0_lr = 0.02;
    int n_paths = 2000;
    int n_steps = 200;
    TrainOptions score_train{.steps = 500, .batch_size = 256};
    TrainOptions regression{.steps = 2000, .batch_size = 128};
    double net_lr = 1e-3;
    double score_lr = 1e-3;
    NetworkShape shape;
    int eval_paths = 2000;
    int history_every = 1;
    std::uint64_t seed = 0;
};

struct FinetuneRecord {
    int iteration = 0;
    SocTerms objective;
    double mu = 0.0;
    double Q = 1.0;
    double w1 = std::numeric_limits<double>::quiet_NaN();
    double inner_loss = std::numeric_limits<double>::quiet_NaN();
    /// Adjoint matching: loss of the untrained first-round fit, then the held-out
    /// loss after each inner round. TR-BSDE: regression loss per solve_phi iteration.
    std::vector<double> inner_losses;
};

struct FinetuneResult {
    Mlp net;  // phi for TR-BSDE, the control network for adjoint matching
    ControlLaw control;
    GaussianInit init;
    std::vector<FinetuneRecord> history;
    std::vector<std::string> warnings;
};

/// TR-BSDE fine-tuning: alternate solve_phi under the current (k, q0),
/// k <- -g^T phi, and periodic ADAM steps on (mu, log Q) with Y0 = phi(0, X0).
/// `reference`, when given, is used for the W1 column of the history.
FinetuneResult finetune_trbsde(const PretrainedModel& pm, const TerminalCost& cost, const FinetuneConfig& cfg,
                               const std::optional<GaussianMixture1D>& reference = std::nullopt);

/// Pairs ((t_k, X_k) -> -g(t_k)^T Y_k) for the adjoint-matching control regression.
RegressionData adjoint_matching_data(const TrajectoryBatch& batch, const NonAdaptedAdjointPath& adj,
                                     const SdeModel& model);

/// Adjoint matching: regress a control network onto -g^T Y with the
/// pathwise adjoint Y, re-simulating after each regression round; periodic
/// (mu, log Q) updates use Y_0.
FinetuneResult finetune_adjoint_matching(const PretrainedModel& pm, const TerminalCost& cost,
                                         const FinetuneConfig& cfg,
                                         const std::optional<GaussianMixture1D>& reference = std::nullopt);

/// Terminal samples X_T under (q0, control).
std::vector<double> sample_terminal(const PretrainedModel& pm, const ControlLaw& control, const GaussianInit& q0,
                                    int n_samples, int n_steps, std::uint64_t seed);

}  // namespace trbsde
