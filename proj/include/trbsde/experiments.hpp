#pragma once

#include "trbsde/finetune.hpp"
#include "trbsde/oracles.hpp"
#include "trbsde/pendulum.hpp"

#include <functional>
#include <string>
#include <vector>

namespace trbsde {

// Runners shared by the command-line tool and the acceptance suite.

using Progress = std::function<void(const std::string&)>;

// ---- linear-quadratic estimator comparison ----

struct LqConfig {
    std::vector<double> epsilons{0.2, 0.5, 1.0};
    int n_seeds = 10;
    SolvePhiConfig phi = [] {
        SolvePhiConfig c;
        c.horizon = 2.0;
        return c;
    }();
    /// PNAA regression steps; 0 means outer_iterations x regression.steps.
    int pnaa_steps = 0;
    int eval_samples = 10000;
    double ema_decay = 0.0;
    std::uint64_t seed = 0;
};

struct LqRecord {
    std::string method;
    double epsilon = 0.0;
    int seed = 0;
    double mse = 0.0;
};

/// TR-BSDE and PNAA at one (epsilon, seed) with the same forward batch,
/// initial network and total regression steps. Returns {trbsde, pnaa}.
std::vector<LqRecord> run_lq_point(const LqConfig& cfg, double epsilon, int seed);
std::vector<LqRecord> run_lq_sweep(const LqConfig& cfg, const Progress& progress = {});

// ---- pendulum support optimization ----

struct PendulumConfig {
    int n_points = 200;
    std::vector<GradientMethod> methods{GradientMethod::TrBsde, GradientMethod::Pnaa};
    SupportOptConfig opt;
    CostMapSpec map;
    double damping = 0.01;
    double noise = 0.5;
    std::uint64_t seed = 0;

    static PendulumConfig defaults();
};

struct PendulumRun {
    GradientMethod method;
    SupportOptResult result;
};

struct PendulumResult {
    EmpiricalInit initial;
    std::vector<PendulumRun> runs;
};

/// Every method starts from the same uniformly drawn point cloud.
PendulumResult run_pendulum(const PendulumConfig& cfg, int seed, const Progress& progress = {});

// ---- diffusion fine-tuning ----

struct FinetuneExperimentConfig {
    std::vector<double> betas{1.0 / 50, 1.0 / 20, 1.0 / 8, 1.0 / 6, 1.0};
    int n_seeds = 1;
    GaussianMixture1D target{{0.5, 0.5}, {-3.0, 3.0}, {1.0, 1.0}};
    double rate = 8.0;
    double horizon = 1.0;
    double center = 3.0;
    FinetuneConfig ft;
    int n_samples = 10000;
    bool run_trbsde = true;
    bool run_adjoint_matching = true;
};

struct FinetuneRun {
    std::string method;  // "trbsde" or "adjoint_matching"
    double beta = 0.0;
    int seed = 0;
    FinetuneResult result;
    std::vector<double> samples;
    double w1 = 0.0;  // to the analytic tilted target
};

std::vector<FinetuneRun> run_finetune_beta(const FinetuneExperimentConfig& cfg, double beta, int seed,
                                           const Progress& progress = {});

}  // namespace trbsde
