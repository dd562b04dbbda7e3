#pragma once

#include "trbsde/types.hpp"

namespace trbsde {

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    Vec m;
    Vec v;
    long step = 0;

    AdamState() = default;
    explicit AdamState(Eigen::Index n_params, double lr_ = 1e-3) : lr(lr_), m(Vec::Zero(n_params)), v(Vec::Zero(n_params)) {}
};

/// One bias-corrected ADAM update of `params` in place. Throws NonFiniteValue
/// and leaves both params and state untouched when `grads` is not finite.
void adam_step(Vec& params, const Vec& grads, AdamState& state);

}  // namespace trbsde
