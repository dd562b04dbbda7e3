#include "trbsde/experiments.hpp"

#include <sstream>

namespace trbsde {

std::vector<LqRecord> run_lq_point(const LqConfig& cfg, double epsilon, int seed) {
    const LinearModelConfig lin = LinearModelConfig::standard(epsilon);
    const SdeModel model = lin.model();
    const TerminalCost cost = lin.cost();
    const Mat I = Mat::Identity(2, 2);
    const InitSampler q0 = gaussian_init(Vec::Zero(2), I);

    SolvePhiConfig pc = cfg.phi;
    pc.horizon = lin.horizon;
    pc.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(seed));
    pc.score_train.ema_decay = cfg.ema_decay;
    pc.regression.ema_decay = cfg.ema_decay;
    const std::uint64_t eval_seed = derive_seed(pc.seed, 0xE7A1);

    PhiSolverState state;
    const SolvePhiResult tr = solve_phi(model, ControlLaw::zero(2), cost, q0, pc, state);

    // PNAA on the forward batch solve_phi drew, from the same initial network.
    const TimeGrid grid(0.0, pc.horizon, pc.n_steps);
    const TrajectoryBatch batch =
        simulate_forward(model, q0, ControlLaw::zero(2), grid, pc.n_paths, domain_seed(pc.seed, SeedDomain::Forward));
    Mlp net = make_phi_net(2, pc);
    AdamState opt(net.n_params(), pc.regression_lr);
    TrainOptions opts = pc.regression;
    opts.steps = cfg.pnaa_steps > 0 ? cfg.pnaa_steps : pc.outer_iterations * pc.regression.steps;
    opts.seed = domain_seed(pc.seed, SeedDomain::Regression);
    pnaa_fit({batch}, model, cost, net, opts, opt);

    return {{"trbsde", epsilon, seed, mse_vs_oracle(tr.phi, lin, cfg.eval_samples, eval_seed)},
            {"pnaa", epsilon, seed, mse_vs_oracle(net, lin, cfg.eval_samples, eval_seed)}};
}

std::vector<LqRecord> run_lq_sweep(const LqConfig& cfg, const Progress& progress) {
    std::vector<LqRecord> out;
    for (double eps : cfg.epsilons) {
        for (int s = 0; s < cfg.n_seeds; ++s) {
            const auto recs = run_lq_point(cfg, eps, s);
            if (progress) {
                std::ostringstream msg;
                msg << "lq eps=" << eps << " seed=" << s << " trbsde=" << recs[0].mse << " pnaa=" << recs[1].mse;
                progress(msg.str());
            }
            out.insert(out.end(), recs.begin(), recs.end());
        }
    }
    return out;
}

PendulumConfig PendulumConfig::defaults() {
    PendulumConfig c;
    c.opt.iterations = 1500;
    c.opt.phi.horizon = 1.0;
    c.opt.phi.n_steps = 100;
    c.opt.phi.n_paths = 1000;
    c.opt.phi.outer_iterations = 10;
    c.opt.phi.score_train = {.steps = 500, .batch_size = 256};
    c.opt.phi.regression = {.steps = 1000, .batch_size = 128};
    c.map.horizon = c.opt.phi.horizon;
    c.map.n_steps = c.opt.phi.n_steps;
    return c;
}

PendulumResult run_pendulum(const PendulumConfig& cfg, int seed, const Progress& progress) {
    const SdeModel model = pendulum_model(cfg.damping, cfg.noise);
    const TerminalCost cost = TerminalCost::pendulum();
    const std::uint64_t s = derive_seed(cfg.seed, static_cast<std::uint64_t>(seed));
    PendulumResult res;
    res.initial = uniform_points(cfg.n_points, cfg.map, s);
    for (GradientMethod m : cfg.methods) {
        SupportOptConfig opt = cfg.opt;
        opt.seed = s;
        res.runs.push_back({m, optimize_support(m, model, cost, res.initial, opt)});
        if (progress) {
            const auto& r = res.runs.back().result;
            std::ostringstream msg;
            msg << "pendulum seed=" << seed << " " << method_name(m) << " cost " << r.mean_cost.front().second
                << " -> " << r.mean_cost.back().second << " frozen=" << r.points.frozen_count();
            progress(msg.str());
        }
    }
    return res;
}

std::vector<FinetuneRun> run_finetune_beta(const FinetuneExperimentConfig& cfg, double beta, int seed,
                                           const Progress& progress) {
    const PretrainedModel pm = build_pretrained_model(cfg.target, cfg.rate, cfg.horizon);
    const TerminalCost cost = tilt_cost(beta, cfg.center);
    const GaussianMixture1D tilted = tilted_mixture(cfg.target, beta, cfg.center);
    FinetuneConfig ft = cfg.ft;
    ft.seed = derive_seed(cfg.ft.seed, static_cast<std::uint64_t>(seed));
    const std::uint64_t sample_seed = domain_seed(ft.seed, SeedDomain::Evaluation, 0x5A);

    std::vector<FinetuneRun> out;
    auto finish = [&](std::string method, FinetuneResult r) {
        FinetuneRun run{
            .method = std::move(method), .beta = beta, .seed = seed, .result = std::move(r), .samples = {}, .w1 = 0.0};
        run.samples = sample_terminal(pm, run.result.control, run.result.init, cfg.n_samples, ft.n_steps, sample_seed);
        run.w1 = w1_to_mixture(run.samples, tilted);
        if (progress) {
            std::ostringstream msg;
            msg << "finetune beta=" << beta << " seed=" << seed << " " << run.method << " W1=" << run.w1
                << " mu=" << run.result.init.mu << " Q=" << run.result.init.Q();
            progress(msg.str());
        }
        out.push_back(std::move(run));
    };
    if (cfg.run_trbsde) finish("trbsde", finetune_trbsde(pm, cost, ft, tilted));
    if (cfg.run_adjoint_matching) finish("adjoint_matching", finetune_adjoint_matching(pm, cost, ft, tilted));
    return out;
}

}  // namespace trbsde
