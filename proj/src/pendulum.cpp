#include "trbsde/pendulum.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace trbsde {

int EmpiricalInit::frozen_count() const {
    return static_cast<int>(std::count(frozen.begin(), frozen.end(), true));
}

EmpiricalInit uniform_points(int n, const CostMapSpec& box, std::uint64_t seed) {
    NoiseStream s(domain_seed(seed, SeedDomain::InitDistribution), 0);
    EmpiricalInit q;
    q.points.resize(2, n);
    for (int i = 0; i < n; ++i) {
        q.points(0, i) = box.theta_min + (box.theta_max - box.theta_min) * s.uniform();
        q.points(1, i) = box.omega_min + (box.omega_max - box.omega_min) * s.uniform();
    }
    q.frozen.assign(n, false);
    return q;
}

std::string_view method_name(GradientMethod m) {
    switch (m) {
        case GradientMethod::TrBsde: return "trbsde";
        case GradientMethod::Pnaa: return "pnaa";
        case GradientMethod::Pathwise: return "pathwise";
    }
    return "unknown";
}

GradientMethod parse_method(std::string_view name) {
    if (name == "trbsde") return GradientMethod::TrBsde;
    if (name == "pnaa") return GradientMethod::Pnaa;
    if (name == "pathwise") return GradientMethod::Pathwise;
    throw std::invalid_argument("unknown gradient method: " + std::string(name));
}

namespace {

Mat active_points(const EmpiricalInit& q) {
    std::vector<Eigen::Index> idx;
    for (int i = 0; i < q.size(); ++i)
        if (!q.frozen[i]) idx.push_back(i);
    Mat out(q.points.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = q.points.col(idx[c]);
    return out;
}

Mat repeat_columns(const Mat& pts, int reps) {
    Mat out(pts.rows(), pts.cols() * reps);
    for (Eigen::Index i = 0; i < pts.cols(); ++i)
        for (int r = 0; r < reps; ++r) out.col(i * reps + r) = pts.col(i);
    return out;
}

}  // namespace

double mean_point_cost(const SdeModel& model, const TerminalCost& cost, const EmpiricalInit& q0, double horizon,
                       int n_steps, int rollouts, std::uint64_t seed) {
    const Mat pts = active_points(q0);
    if (pts.cols() == 0) return 0.0;
    const TrajectoryBatch b = simulate_forward_from(model, repeat_columns(pts, rollouts), ControlLaw::zero(model.dim),
                                                    TimeGrid(0.0, horizon, n_steps), seed);
    double acc = 0.0;
    for (int i = 0; i < b.n_paths; ++i) acc += cost.value(b.terminal().col(i));
    return acc / b.n_paths;
}

SupportOptResult optimize_support(GradientMethod method, const SdeModel& model, const TerminalCost& cost,
                                  const EmpiricalInit& points0, const SupportOptConfig& cfg) {
    if (cfg.iterations < 1) throw std::invalid_argument("optimize_support: iterations must be >= 1");
    const double T = cfg.phi.horizon;
    const TimeGrid grid(0.0, T, cfg.phi.n_steps);
    const ControlLaw zero = ControlLaw::zero(model.dim);

    SupportOptResult res;
    res.points = points0;
    if (res.points.frozen.size() != static_cast<std::size_t>(res.points.size()))
        res.points.frozen.assign(res.points.size(), false);
    res.snapshots.push_back({0, res.points.points});

    auto log_cost = [&](int iter) {
        // Same evaluation noise for every method at a given iteration.
        const double c = mean_point_cost(model, cost, res.points, T, cfg.phi.n_steps, cfg.log_rollouts,
                                         domain_seed(cfg.seed, SeedDomain::Evaluation, static_cast<std::uint64_t>(iter)));
        res.mean_cost.emplace_back(iter, c);
        if (res.iterations_to_half_cost < 0 && c <= 0.5 * res.mean_cost.front().second)
            res.iterations_to_half_cost = iter;
    };
    log_cost(0);

    PhiSolverState phi_state;
    std::optional<Mlp> pnaa_net;
    AdamState pnaa_opt;
    std::optional<Mlp> phi;

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        const Mat active = active_points(res.points);
        if (active.cols() == 0) break;

        if (method != GradientMethod::Pathwise && iter % std::max(1, cfg.refresh_every) == 0) {
            SolvePhiConfig pc = cfg.phi;
            pc.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(iter));
            const InitSampler q0 = empirical_init(active);
            if (method == GradientMethod::TrBsde) {
                phi = solve_phi(model, zero, cost, q0, pc, phi_state).phi;
            } else {
                if (!pnaa_net) {
                    pnaa_net = make_phi_net(model.dim, pc);
                    pnaa_opt = AdamState(pnaa_net->n_params(), pc.regression_lr);
                }
                const TrajectoryBatch b =
                    simulate_forward(model, q0, zero, grid, pc.n_paths, domain_seed(pc.seed, SeedDomain::Forward));
                TrainOptions opts = pc.regression;
                opts.steps = pc.regression.steps * pc.outer_iterations;
                opts.seed = domain_seed(pc.seed, SeedDomain::Regression);
                pnaa_fit({b}, model, cost, *pnaa_net, opts, pnaa_opt);
                phi = *pnaa_net;
            }
        }

        Mat grad(model.dim, active.cols());
        if (method == GradientMethod::Pathwise) {
            const int R = std::max(1, cfg.pathwise_rollouts);
            const TrajectoryBatch b = simulate_forward_from(
                model, repeat_columns(active, R), zero, grid,
                derive_seed(domain_seed(cfg.seed, SeedDomain::Forward), static_cast<std::uint64_t>(iter)));
            const Mat g = discrete_pathwise_gradient(b, model, cost);
            for (Eigen::Index i = 0; i < active.cols(); ++i) grad.col(i) = g.middleCols(i * R, R).rowwise().mean();
        } else {
            grad = phi->forward(0.0, active);
        }

        Eigen::Index c = 0;
        for (int i = 0; i < res.points.size(); ++i) {
            if (res.points.frozen[i]) continue;
            res.points.points.col(i) -= cfg.step * grad.col(c++);
            if (!res.points.points.col(i).allFinite() || res.points.points.col(i).norm() > cfg.freeze_radius)
                res.points.frozen[i] = true;
        }

        const int done = iter + 1;
        if (cfg.log_every > 0 && (done % cfg.log_every == 0 || done == cfg.iterations)) log_cost(done);
        if (cfg.snapshot_every > 0 && done % cfg.snapshot_every == 0 && done != cfg.iterations)
            res.snapshots.push_back({done, res.points.points});
    }
    res.snapshots.push_back({cfg.iterations, res.points.points});
    return res;
}

}  // namespace trbsde
