#include "trbsde/finetune.hpp"

#include "trbsde/oracles.hpp"

#include <cmath>
#include <memory>

namespace trbsde {

double GaussianInit::Q() const { return std::exp(log_q); }

InitSampler GaussianInit::sampler() const {
    const double m = mu, q = Q();
    return [m, q](NoiseStream& s) -> Vec { return Vec::Constant(1, m + q * s.normal()); };
}

double gaussian_kl(double mu, double Q) {
    if (!(Q > 0.0)) throw std::invalid_argument("gaussian_kl: Q must be positive");
    return 0.5 * (Q * Q + mu * mu - std::log(Q * Q) - 1.0);
}

InitGradients init_dist_gradients(std::span<const double> Y0, std::span<const double> X0, double mu, double Q) {
    if (Y0.empty() || Y0.size() != X0.size())
        throw std::invalid_argument("init_dist_gradients: samples must be nonempty and paired");
    if (!(Q > 0.0)) throw std::invalid_argument("init_dist_gradients: Q must be positive");
    double mean_y = 0.0, mean_cross = 0.0;
    for (std::size_t i = 0; i < Y0.size(); ++i) {
        mean_y += Y0[i];
        mean_cross += Y0[i] * (X0[i] - mu) / Q;
    }
    const auto n = static_cast<double>(Y0.size());
    return {mean_y / n + mu, mean_cross / n + Q - 1.0 / Q};
}

GaussianMixture1D PretrainedModel::noised(double s) const {
    const double alpha = std::exp(-0.5 * rate * s);
    GaussianMixture1D out = target;
    for (std::size_t k = 0; k < out.size(); ++k) {
        out.means[k] = alpha * target.means[k];
        out.variances[k] = alpha * alpha * target.variances[k] + 1.0 - alpha * alpha;
    }
    return out;
}

double PretrainedModel::start_variance() const { return noised(horizon).variance(); }

ScoreField PretrainedModel::exact_score() const {
    auto self = std::make_shared<const PretrainedModel>(*this);
    return ScoreField::analytic([self](double t, const Mat& X) -> Mat {
        const GaussianMixture1D p = self->noised(self->horizon - t);
        Mat out(X.rows(), X.cols());
        for (Eigen::Index i = 0; i < X.cols(); ++i) out(0, i) = analytic_mixture_score(p, self->rate, X(0, i));
        return out;
    });
}

PretrainedModel build_pretrained_model(const GaussianMixture1D& target, double rate, double horizon) {
    target.validate();
    if (!(rate > 0.0) || !(horizon > 0.0))
        throw std::invalid_argument("build_pretrained_model: rate and horizon must be positive");
    if (std::exp(-0.5 * rate * horizon) > 0.05)
        throw std::invalid_argument("build_pretrained_model: exp(-rate T / 2) must not exceed 0.05");

    PretrainedModel pm;
    pm.target = target;
    pm.rate = rate;
    pm.horizon = horizon;

    // Each closure owns a copy of the parameters, so the model outlives pm.
    const PretrainedModel params = pm;
    SdeModel& m = pm.model;
    m.dim = 1;
    m.name = "pretrained";
    m.drift = [params](double t, const Vec& x) -> Vec {
        const GaussianMixture1D p = params.noised(params.horizon - t);
        return Vec::Constant(1, 0.5 * params.rate * x(0) + params.rate * p.log_density_grad(x(0)));
    };
    m.diffusion = [rate](double) -> Mat { return Mat::Constant(1, 1, std::sqrt(rate)); };
    m.drift_jacobian = [params](double t, const Vec& x) -> Mat {
        const GaussianMixture1D p = params.noised(params.horizon - t);
        return Mat::Constant(1, 1, 0.5 * params.rate + params.rate * p.log_density_hess(x(0)));
    };
    return pm;
}

TerminalCost tilt_cost(double beta, double center) {
    return TerminalCost::quadratic(Mat::Identity(1, 1), Vec::Constant(1, center), beta);
}

SocTerms soc_objective_eval(const TrajectoryBatch& batch, const TerminalCost& cost, const GaussianInit& q0) {
    SocTerms out;
    const double dt = batch.grid.dt();
    for (int i = 0; i < batch.n_paths; ++i) out.terminal += cost.value(batch.terminal().col(i));
    for (const Mat& u : batch.controls) out.running += 0.5 * dt * u.squaredNorm();
    out.terminal /= batch.n_paths;
    out.running /= batch.n_paths;
    out.kl = gaussian_kl(q0.mu, q0.Q());
    out.total = out.terminal + out.running + out.kl;
    return out;
}

ControlLaw feedback_from_phi(const SdeModel& model, const Mlp& phi) {
    auto net = std::make_shared<const Mlp>(phi);
    auto diffusion = model.diffusion;
    return ControlLaw::from_batch(model.dim, [net, diffusion](double t, const Mat& X) -> Mat {
        return -diffusion(t).transpose() * net->forward(t, X);
    });
}

ControlLaw control_from_net(const Mlp& net) {
    auto copy = std::make_shared<const Mlp>(net);
    return ControlLaw::from_batch(net.config().out_dim,
                                  [copy](double t, const Mat& X) -> Mat { return copy->forward(t, X); });
}

std::vector<double> sample_terminal(const PretrainedModel& pm, const ControlLaw& control, const GaussianInit& q0,
                                    int n_samples, int n_steps, std::uint64_t seed) {
    const TimeGrid grid(0.0, pm.horizon, n_steps);
    const TrajectoryBatch b = simulate_forward(pm.model, q0.sampler(), control, grid, n_samples, seed);
    return {b.terminal().data(), b.terminal().data() + b.terminal().size()};
}

namespace {

constexpr std::uint64_t kHistoryTag = 0x4849;
constexpr std::uint64_t kInnerTag = 0x494e;
constexpr std::uint64_t kQ0Tag = 0x5130;

// Optimizer over (mu, log Q).
struct InitOptimizer {
    AdamState state;
    explicit InitOptimizer(double lr) : state(2, lr) {}

    void step(GaussianInit& q0, const InitGradients& g) {
        Vec params(2);
        params << q0.mu, q0.log_q;
        Vec grad(2);
        grad << g.d_mu, g.d_q * q0.Q();  // chain rule through Q = exp(log Q)
        adam_step(params, grad, state);
        q0.mu = params(0);
        q0.log_q = params(1);
    }
};

FinetuneRecord make_record(const PretrainedModel& pm, const TerminalCost& cost, const FinetuneConfig& cfg,
                           const ControlLaw& control, const GaussianInit& q0, int iteration,
                           const std::optional<GaussianMixture1D>& reference) {
    const TimeGrid grid(0.0, pm.horizon, cfg.n_steps);
    const TrajectoryBatch b =
        simulate_forward(pm.model, q0.sampler(), control, grid, cfg.eval_paths,
                         derive_seed(domain_seed(cfg.seed, SeedDomain::Evaluation, kHistoryTag), iteration));
    FinetuneRecord r;
    r.iteration = iteration;
    r.objective = soc_objective_eval(b, cost, q0);
    r.mu = q0.mu;
    r.Q = q0.Q();
    if (reference) {
        const Mat& xt = b.terminal();
        r.w1 = w1_to_mixture(std::span<const double>(xt.data(), static_cast<std::size_t>(xt.size())), *reference);
    }
    return r;
}

bool record_due(const FinetuneConfig& cfg, int iteration) {
    return cfg.history_every > 0 && (iteration % cfg.history_every == 0 || iteration == cfg.outer_iterations);
}

}  // namespace

FinetuneResult finetune_trbsde(const PretrainedModel& pm, const TerminalCost& cost, const FinetuneConfig& cfg,
                               const std::optional<GaussianMixture1D>& reference) {
    SolvePhiConfig sp;
    sp.horizon = pm.horizon;
    sp.n_paths = cfg.n_paths;
    sp.n_steps = cfg.n_steps;
    sp.outer_iterations = cfg.inner_iterations;
    sp.score_train = cfg.score_train;
    sp.regression = cfg.regression;
    sp.score_lr = cfg.score_lr;
    sp.regression_lr = cfg.net_lr;
    sp.shape = cfg.shape;

    PhiSolverState state;
    GaussianInit q0;
    InitOptimizer q0_opt(cfg.q0_lr);
    ControlLaw control = ControlLaw::zero(1);
    FinetuneResult result{.net = make_phi_net(1, sp), .control = control, .init = {}, .history = {}, .warnings = {}};

    for (int it = 1; it <= cfg.outer_iterations; ++it) {
        sp.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(it));
        SolvePhiResult solved = solve_phi(pm.model, control, cost, q0.sampler(), sp, state);
        for (auto& w : solved.warnings) result.warnings.push_back(std::move(w));
        control = feedback_from_phi(pm.model, solved.phi);

        if (cfg.q0_update_every > 0 && it % cfg.q0_update_every == 0) {
            for (int o = 0; o < cfg.q0_steps; ++o) {
                NoiseStream s(domain_seed(cfg.seed, SeedDomain::InitDistribution, kQ0Tag),
                              static_cast<std::uint64_t>(it), static_cast<std::uint64_t>(o));
                Mat x0(1, cfg.q0_samples);
                for (int i = 0; i < cfg.q0_samples; ++i) x0(0, i) = q0.mu + q0.Q() * s.normal();
                const Mat y0 = solved.phi.forward(0.0, x0);
                q0_opt.step(q0, init_dist_gradients({y0.data(), static_cast<std::size_t>(y0.size())},
                                                    {x0.data(), static_cast<std::size_t>(x0.size())}, q0.mu,
                                                    q0.Q()));
            }
        }
        result.net = solved.phi;
        if (record_due(cfg, it)) {
            FinetuneRecord r = make_record(pm, cost, cfg, control, q0, it, reference);
            if (!solved.history.empty()) r.inner_loss = solved.history.back().regression_loss;
            for (const PhiIteration& h : solved.history) r.inner_losses.push_back(h.regression_loss);
            result.history.push_back(r);
        }
    }
    result.control = control;
    result.init = q0;
    return result;
}

RegressionData adjoint_matching_data(const TrajectoryBatch& batch, const NonAdaptedAdjointPath& adj,
                                     const SdeModel& model) {
    const int N = batch.n_paths;
    const Eigen::Index total = static_cast<Eigen::Index>(batch.grid.n_points()) * N;
    RegressionData data;
    data.t.resize(total);
    data.X.resize(batch.dim, total);
    data.Y.resize(batch.dim, total);
    for (int k = 0; k < batch.grid.n_points(); ++k) {
        const Eigen::Index col = static_cast<Eigen::Index>(k) * N;
        const double t = batch.grid.time(k);
        data.t.segment(col, N).setConstant(t);
        data.X.middleCols(col, N) = batch.states[k];
        data.Y.middleCols(col, N) = -model.diffusion(t).transpose() * adj.Y[k];
    }
    return data;
}

FinetuneResult finetune_adjoint_matching(const PretrainedModel& pm, const TerminalCost& cost,
                                         const FinetuneConfig& cfg,
                                         const std::optional<GaussianMixture1D>& reference) {
    const TimeGrid grid(0.0, pm.horizon, cfg.n_steps);
    Mlp knet({.state_dim = 1,
              .out_dim = 1,
              .hidden = cfg.shape.hidden,
              .depth = cfg.shape.depth,
              .horizon = pm.horizon,
              .output_scale = 1.0,
              .seed = derive_seed(cfg.seed, 303)});
    AdamState opt(knet.n_params(), cfg.net_lr);
    GaussianInit q0;
    InitOptimizer q0_opt(cfg.q0_lr);
    ControlLaw control = ControlLaw::zero(1);
    FinetuneResult result{.net = knet, .control = control, .init = {}, .history = {}, .warnings = {}};

    for (int it = 1; it <= cfg.outer_iterations; ++it) {
        Mat last_x0, last_y0;
        double inner_loss = std::numeric_limits<double>::quiet_NaN();
        std::vector<double> inner_losses;
        for (int j = 0; j < cfg.inner_iterations; ++j) {
            const std::uint64_t round = static_cast<std::uint64_t>(it) * 1000 + static_cast<std::uint64_t>(j);
            const TrajectoryBatch batch = simulate_forward(pm.model, q0.sampler(), control, grid, cfg.n_paths,
                                                           domain_seed(cfg.seed, SeedDomain::Forward, round));
            const NonAdaptedAdjointPath adj = simulate_nonadapted(batch, pm.model, cost);

            const RegressionData data = adjoint_matching_data(batch, adj, pm.model);
            TrainOptions opts = cfg.regression;
            opts.seed = derive_seed(domain_seed(cfg.seed, SeedDomain::Regression, kInnerTag), round);
            if (j == 0) inner_losses.push_back(regression_mse(knet, data));
            inner_loss = train_regression(knet, data, opts, opt).final_holdout;
            inner_losses.push_back(inner_loss);
            control = control_from_net(knet);
            last_x0 = batch.initial();
            last_y0 = adj.Y.front();
        }

        if (cfg.q0_update_every > 0 && it % cfg.q0_update_every == 0 && last_x0.size() > 0) {
            // The samples {X_0, Y_0} of the last simulation stay fixed during these steps.
            const std::span<const double> x0(last_x0.data(), static_cast<std::size_t>(last_x0.size()));
            const std::span<const double> y0(last_y0.data(), static_cast<std::size_t>(last_y0.size()));
            for (int o = 0; o < cfg.q0_steps; ++o) q0_opt.step(q0, init_dist_gradients(y0, x0, q0.mu, q0.Q()));
        }
        if (record_due(cfg, it)) {
            FinetuneRecord r = make_record(pm, cost, cfg, control, q0, it, reference);
            r.inner_loss = inner_loss;
            r.inner_losses = std::move(inner_losses);
            result.history.push_back(r);
        }
    }
    result.net = knet;
    result.control = control;
    result.init = q0;
    return result;
}

}  // namespace trbsde
