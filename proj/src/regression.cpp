#include "trbsde/regression.hpp"

#include "trbsde/rng.hpp"

#include <algorithm>
#include <numeric>

namespace trbsde {

RegressionData RegressionData::subset(const std::vector<Eigen::Index>& idx) const {
    RegressionData out;
    const auto m = static_cast<Eigen::Index>(idx.size());
    out.t.resize(m);
    out.X.resize(X.rows(), m);
    out.Y.resize(Y.rows(), m);
    for (Eigen::Index c = 0; c < m; ++c) {
        out.t(c) = t(idx[c]);
        out.X.col(c) = X.col(idx[c]);
        out.Y.col(c) = Y.col(idx[c]);
    }
    return out;
}

double regression_mse(const Mlp& net, const RegressionData& data) {
    if (data.size() == 0) return 0.0;
    const Mat r = net.forward(data.t, data.X) - data.Y;
    return r.colwise().squaredNorm().mean();
}

double regression_loss_grad(const Mlp& net, const RegressionData& batch, Vec& grad) {
    const Mlp::Tape tape = net.record(batch.t, batch.X, false);
    const Mat r = tape.value - batch.Y;
    const auto B = static_cast<double>(batch.size());
    grad = net.backward(tape, (2.0 / B) * r, nullptr);
    return r.colwise().squaredNorm().sum() / B;
}

void ParamAverage::update(const Vec& p) {
    if (acc_.size() == 0) acc_ = Vec::Zero(p.size());
    acc_ = decay_ * acc_ + (1.0 - decay_) * p;
    weight_ = decay_ * weight_ + (1.0 - decay_);
}

Vec ParamAverage::value() const { return acc_ / weight_; }

RegressionReport train_regression(Mlp& net, const RegressionData& data, const TrainOptions& opts,
                                  AdamState& state) {
    if (data.size() == 0) throw std::invalid_argument("train_regression: empty dataset");
    if (data.Y.rows() != net.config().out_dim || data.X.rows() != net.config().state_dim)
        throw DimensionMismatch("train_regression: dataset shape does not match network");

    const Eigen::Index M = data.size();
    std::vector<Eigen::Index> order(M);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    NoiseStream rng(domain_seed(opts.seed, SeedDomain::Regression), 0);
    for (Eigen::Index i = M - 1; i > 0; --i)
        std::swap(order[i], order[rng.next_bits() % static_cast<std::uint64_t>(i + 1)]);

    auto n_hold = static_cast<Eigen::Index>(opts.holdout_fraction * static_cast<double>(M));
    if (M < 10) n_hold = 0;
    n_hold = std::min<Eigen::Index>(n_hold, opts.max_eval_samples);
    const std::vector<Eigen::Index> hold_idx(order.begin(), order.begin() + n_hold);
    const std::vector<Eigen::Index> train_idx(order.begin() + n_hold, order.end());
    const RegressionData holdout = n_hold > 0 ? data.subset(hold_idx) : data;

    if (state.m.size() == 0) state = AdamState(net.n_params(), state.lr);

    RegressionReport report;
    const auto n_train = static_cast<std::uint64_t>(train_idx.size());
    const int B = std::max(1, opts.batch_size);
    std::vector<Eigen::Index> pick(B);
    Vec grad;
    ParamAverage avg(opts.ema_decay);
    double window = 0.0;
    int window_count = 0;
    for (int step = 1; step <= opts.steps; ++step) {
        for (int b = 0; b < B; ++b) pick[b] = train_idx[rng.next_bits() % n_train];
        window += regression_loss_grad(net, data.subset(pick), grad);
        ++window_count;
        adam_step(net.params(), grad, state);
        if (avg.enabled()) avg.update(net.params());
        if (step % std::max(1, opts.eval_every) == 0 || step == opts.steps) {
            report.train_loss.push_back(window / window_count);
            report.holdout_loss.push_back(regression_mse(net, holdout));
            window = 0.0;
            window_count = 0;
        }
    }
    if (avg.enabled() && opts.steps > 0) {
        net.params() = avg.value();
        if (!report.holdout_loss.empty()) report.holdout_loss.back() = regression_mse(net, holdout);
    }
    report.final_holdout = report.holdout_loss.empty() ? regression_mse(net, holdout) : report.holdout_loss.back();
    return report;
}

}  // namespace trbsde
