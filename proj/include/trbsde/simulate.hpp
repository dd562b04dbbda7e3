#pragma once

#include "trbsde/rng.hpp"
#include "trbsde/sde_model.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

namespace trbsde {

/// N sample paths on a shared grid. Storage is step-major: states[k] holds
/// the n x N matrix of all trajectories at grid index k.
struct TrajectoryBatch {
    TimeGrid grid;
    int dim = 0;
    int n_paths = 0;
    std::uint64_t seed = 0;
    std::vector<Mat> states;    // n_steps + 1 entries
    std::vector<Mat> controls;  // n_steps entries
    std::vector<Mat> noises;    // n_steps entries, increments dW over [t_k, t_k+1)

    Vec state(int i, int k) const { return states[k].col(i); }
    const Mat& initial() const { return states.front(); }
    const Mat& terminal() const { return states.back(); }
};

/// Draws one initial state from a per-trajectory stream.
using InitSampler = std::function<Vec(NoiseStream&)>;

InitSampler gaussian_init(const Vec& mean, const Mat& cov);
InitSampler point_init(const Vec& x0);
/// Uniform choice among the columns of `points`.
InitSampler empirical_init(const Mat& points);

/// Euler-Maruyama:
///   X[k+1] = X[k] + f(t_k, X[k]) dt + g(t_k) (k(t_k, X[k]) dt + dW[k]).
/// Trajectory i draws its initial state from stream (seed, i, 0) and its
/// increments from stream (seed, i, 1).
TrajectoryBatch simulate_forward(const SdeModel& model, const InitSampler& init,
                                 const ControlLaw& control, const TimeGrid& grid, int n_paths,
                                 std::uint64_t seed);

/// Same recursion with explicit initial states (one column per trajectory).
/// Increment streams match simulate_forward for the same seed, so two calls
/// with perturbed initial states use common random numbers.
TrajectoryBatch simulate_forward_from(const SdeModel& model, const Mat& initial_states,
                                      const ControlLaw& control, const TimeGrid& grid,
                                      std::uint64_t seed);

/// eta[k] = dX[k]/dX[0] for one trajectory.
struct SensitivityPath {
    std::vector<Mat> eta;
};

/// eta[k+1] = (I + dt J_k) eta[k], eta[0] = I, J_k = df/dx(t_k, X[k]).
std::vector<SensitivityPath> simulate_sensitivity(const SdeModel& model,
                                                  const TrajectoryBatch& batch);

/// Central differences with per-coordinate step 1e-5 (1 + |x_j|).
Mat drift_jacobian_fd(const SdeModel& model, double t, const Vec& x);

/// CSV dump: header "t,i,x0,...[,y0,...]", one row per (trajectory, grid index).
/// `adjoint`, when given, is indexed like batch.states.
void write_batch_csv(std::ostream& os, const TrajectoryBatch& batch,
                     const std::vector<Mat>* adjoint = nullptr);

}  // namespace trbsde
