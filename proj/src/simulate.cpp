#include "trbsde/simulate.hpp"

#include "trbsde/parallel.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

namespace trbsde {

namespace {

Vec standard_normal(NoiseStream& s, int n) {
    Vec z(n);
    for (int j = 0; j < n; ++j) z(j) = s.normal();
    return z;
}

[[noreturn]] void report_divergence(const SdeModel& model, int i, int k) {
    std::ostringstream msg;
    msg << "simulation diverged: model '" << model.name << "', trajectory " << i << ", step " << k;
    throw SimulationDiverged(msg.str(), i, k);
}

TrajectoryBatch run_euler(const SdeModel& model, Mat x0, const ControlLaw& control,
                          const TimeGrid& grid, std::uint64_t seed) {
    const int n = model.dim;
    const int N = static_cast<int>(x0.cols());
    if (x0.rows() != n) throw DimensionMismatch("simulate_forward: initial state dimension");
    if (control.dim() != n) throw DimensionMismatch("simulate_forward: control dimension");

    TrajectoryBatch batch;
    batch.grid = grid;
    batch.dim = n;
    batch.n_paths = N;
    batch.seed = seed;
    batch.states.reserve(grid.n_points());
    batch.controls.reserve(grid.n_steps);
    batch.noises.reserve(grid.n_steps);
    batch.states.push_back(std::move(x0));

    std::vector<NoiseStream> streams;
    streams.reserve(N);
    for (int i = 0; i < N; ++i) streams.emplace_back(seed, static_cast<std::uint64_t>(i), 1);

    const double dt = grid.dt();
    const double sqrt_dt = std::sqrt(dt);
    for (int k = 0; k < grid.n_steps; ++k) {
        const double t = grid.time(k);
        const Mat& x = batch.states.back();
        Mat u = control.evaluate(t, x);
        const Mat g = model.diffusion(t);
        Mat dw(n, N);
        Mat next(n, N);
        parallel_for(0, N, [&](int i) {
            dw.col(i) = sqrt_dt * standard_normal(streams[i], n);
            const Vec xi = x.col(i);
            next.col(i) = xi + model.drift(t, xi) * dt + g * (u.col(i) * dt + dw.col(i));
        });
        for (int i = 0; i < N; ++i)
            if (!next.col(i).allFinite()) report_divergence(model, i, k);
        batch.controls.push_back(std::move(u));
        batch.noises.push_back(std::move(dw));
        batch.states.push_back(std::move(next));
    }
    return batch;
}

}  // namespace

InitSampler gaussian_init(const Vec& mean, const Mat& cov) {
    const Mat chol = cov.llt().matrixL();
    return [mean, chol](NoiseStream& s) -> Vec {
        return mean + chol * standard_normal(s, static_cast<int>(mean.size()));
    };
}

InitSampler point_init(const Vec& x0) {
    return [x0](NoiseStream&) -> Vec { return x0; };
}

InitSampler empirical_init(const Mat& points) {
    if (points.cols() == 0) throw std::invalid_argument("empirical_init: no support points");
    return [points](NoiseStream& s) -> Vec {
        const auto m = static_cast<std::uint64_t>(points.cols());
        const auto j = static_cast<Eigen::Index>(s.next_bits() % m);
        return points.col(j);
    };
}

TrajectoryBatch simulate_forward(const SdeModel& model, const InitSampler& init,
                                 const ControlLaw& control, const TimeGrid& grid, int n_paths,
                                 std::uint64_t seed) {
    if (n_paths < 1) throw std::invalid_argument("simulate_forward: n_paths must be >= 1");
    Mat x0(model.dim, n_paths);
    for (int i = 0; i < n_paths; ++i) {
        NoiseStream s(seed, static_cast<std::uint64_t>(i), 0);
        const Vec xi = init(s);
        if (xi.size() != model.dim) throw DimensionMismatch("simulate_forward: init sampler dimension");
        x0.col(i) = xi;
    }
    return run_euler(model, std::move(x0), control, grid, seed);
}

TrajectoryBatch simulate_forward_from(const SdeModel& model, const Mat& initial_states,
                                      const ControlLaw& control, const TimeGrid& grid,
                                      std::uint64_t seed) {
    if (initial_states.cols() < 1) throw std::invalid_argument("simulate_forward_from: no initial states");
    return run_euler(model, initial_states, control, grid, seed);
}

std::vector<SensitivityPath> simulate_sensitivity(const SdeModel& model,
                                                  const TrajectoryBatch& batch) {
    const int n = model.dim;
    if (batch.dim != n) throw DimensionMismatch("simulate_sensitivity: batch dimension");
    const double dt = batch.grid.dt();
    std::vector<SensitivityPath> out(batch.n_paths);
    parallel_for(0, batch.n_paths, [&](int i) {
        auto& eta = out[i].eta;
        eta.reserve(batch.grid.n_points());
        eta.push_back(Mat::Identity(n, n));
        for (int k = 0; k < batch.grid.n_steps; ++k) {
            const Mat J = model.drift_jacobian(batch.grid.time(k), batch.state(i, k));
            if (J.rows() != n || J.cols() != n)
                throw DimensionMismatch("simulate_sensitivity: drift Jacobian shape");
            eta.push_back(eta.back() + dt * (J * eta.back()));
        }
    });
    return out;
}

Mat drift_jacobian_fd(const SdeModel& model, double t, const Vec& x) {
    const int n = static_cast<int>(x.size());
    Mat J(n, n);
    for (int j = 0; j < n; ++j) {
        const double h = 1e-5 * (1.0 + std::abs(x(j)));
        Vec xp = x, xm = x;
        xp(j) += h;
        xm(j) -= h;
        J.col(j) = (model.drift(t, xp) - model.drift(t, xm)) / (2.0 * h);
    }
    if (!J.allFinite()) throw NonFiniteValue("drift_jacobian_fd: non-finite drift near x");
    return J;
}

void write_batch_csv(std::ostream& os, const TrajectoryBatch& batch, const std::vector<Mat>* adjoint) {
    os << "t,i";
    for (int j = 0; j < batch.dim; ++j) os << ",x" << j;
    if (adjoint) {
        for (int j = 0; j < batch.dim; ++j) os << ",y" << j;
    }
    os << '\n';
    os.precision(17);
    for (int i = 0; i < batch.n_paths; ++i) {
        for (int k = 0; k < batch.grid.n_points(); ++k) {
            os << batch.grid.time(k) << ',' << i;
            for (int j = 0; j < batch.dim; ++j) os << ',' << batch.states[k](j, i);
            if (adjoint) {
                for (int j = 0; j < batch.dim; ++j) os << ',' << (*adjoint)[k](j, i);
            }
            os << '\n';
        }
    }
}

}  // namespace trbsde
