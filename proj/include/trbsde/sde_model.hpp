#pragma once

#include "trbsde/types.hpp"

#include <functional>
#include <memory>
#include <string>

namespace trbsde {

/// Uniform grid t_k = t0 + k dt, k = 0..n_steps, shared by every path of a batch.
struct TimeGrid {
    double t0 = 0.0;
    double horizon = 1.0;
    int n_steps = 100;

    TimeGrid() = default;
    TimeGrid(double t0_, double horizon_, int n_steps_);

    double dt() const { return (horizon - t0) / n_steps; }
    double time(int k) const { return t0 + k * dt(); }
    int n_points() const { return n_steps + 1; }
};

/// dX = f(t, X) dt + g(t) (U dt + dW) with state-independent diffusion g(t).
struct SdeModel {
    using Drift = std::function<Vec(double, const Vec&)>;
    using Diffusion = std::function<Mat(double)>;
    using DriftJacobian = std::function<Mat(double, const Vec&)>;

    int dim = 0;
    Drift drift;
    Diffusion diffusion;
    DriftJacobian drift_jacobian;
    std::string name;

    /// G(t) = g(t) g(t)^T.
    Mat diffusion_outer(double t) const {
        const Mat g = diffusion(t);
        return g * g.transpose();
    }
};

/// Feedback control U_t = k(t, X_t), evaluated on a whole batch of states
/// (one column per trajectory).
class ControlLaw {
public:
    using BatchFn = std::function<Mat(double, const Mat&)>;

    static ControlLaw zero(int dim) { return ControlLaw(dim, nullptr); }
    static ControlLaw from_batch(int dim, BatchFn fn) { return ControlLaw(dim, std::move(fn)); }

    int dim() const { return dim_; }
    bool is_zero() const { return !fn_; }

    Mat evaluate(double t, const Mat& states) const {
        if (!fn_) return Mat::Zero(dim_, states.cols());
        return fn_(t, states);
    }
    Vec evaluate(double t, const Vec& x) const {
        const Mat u = evaluate(t, Mat(x));
        return u.col(0);
    }

private:
    ControlLaw(int dim, BatchFn fn) : dim_(dim), fn_(std::move(fn)) {}

    int dim_;
    BatchFn fn_;
};

// Models used by the experiments and tests.

/// dX = A X dt + g dW.
SdeModel linear_model(const Mat& A, const Mat& g);

/// Inverted pendulum f = (x2, sin x1 - damping x2), noise entering the
/// angular velocity only with strength `noise`.
SdeModel pendulum_model(double damping = 0.01, double noise = 0.5);

/// dX = -rate X dt + sigma dW in one dimension.
SdeModel ou_model(double rate, double sigma);

/// f = c, g = sigma I.
SdeModel constant_drift_model(const Vec& c, double sigma);

}  // namespace trbsde
