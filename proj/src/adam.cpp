#include "trbsde/adam.hpp"

#include <cmath>

namespace trbsde {

void adam_step(Vec& params, const Vec& grads, AdamState& state) {
    if (grads.size() != params.size()) throw DimensionMismatch("adam_step: gradient size");
    if (state.m.size() == 0) {
        state.m = Vec::Zero(params.size());
        state.v = Vec::Zero(params.size());
    }
    if (state.m.size() != params.size()) throw DimensionMismatch("adam_step: optimizer state size");
    if (!grads.allFinite()) throw NonFiniteValue("adam_step: non-finite gradient, step rejected");

    ++state.step;
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.cwiseAbs2();
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    params.array() -= state.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

}  // namespace trbsde
