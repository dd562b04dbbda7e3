#pragma once

#include "trbsde/oracles.hpp"
#include "trbsde/tr_bsde.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace trbsde {

/// q0 = (1/N) sum_i delta_{theta_i}; each column of `points` is one support point.
struct EmpiricalInit {
    Mat points;
    std::vector<bool> frozen;

    int size() const { return static_cast<int>(points.cols()); }
    int frozen_count() const;
};

/// Points drawn uniformly over the cost-map rectangle.
EmpiricalInit uniform_points(int n, const CostMapSpec& box, std::uint64_t seed);

enum class GradientMethod { TrBsde, Pnaa, Pathwise };

std::string_view method_name(GradientMethod m);
GradientMethod parse_method(std::string_view name);

struct SupportOptConfig {
    int iterations = 15000;
    double step = 1e-3;
    int refresh_every = 500;      // phi refresh cadence for trbsde / pnaa
    int log_every = 100;
    int log_rollouts = 32;
    int pathwise_rollouts = 4;
    double freeze_radius = 50.0;
    int snapshot_every = 0;       // 0 keeps only the initial and final clouds
    SolvePhiConfig phi;           // horizon, grid, networks, budgets; pnaa uses the same total steps
    std::uint64_t seed = 0;
};

struct SupportSnapshot {
    int iteration;
    Mat points;
};

struct SupportOptResult {
    EmpiricalInit points;
    std::vector<std::pair<int, double>> mean_cost;  // (iteration, MC mean cost)
    std::vector<SupportSnapshot> snapshots;
    int iterations_to_half_cost = -1;               // first logged iteration with cost <= 0.5 x initial
};

/// Mean over the active points of the Monte-Carlo expected terminal cost.
double mean_point_cost(const SdeModel& model, const TerminalCost& cost, const EmpiricalInit& q0, double horizon,
                       int n_steps, int rollouts, std::uint64_t seed);

/// Gradient descent theta_i <- theta_i - step * grad_i, where grad_i is phi(0, theta_i)
/// (trbsde / pnaa, phi refreshed every refresh_every iterations) or a fresh-noise
/// average of discrete pathwise gradients. Points leaving the freeze radius stop moving.
SupportOptResult optimize_support(GradientMethod method, const SdeModel& model, const TerminalCost& cost,
                                  const EmpiricalInit& points0, const SupportOptConfig& cfg);

}  // namespace trbsde
