#pragma once

#include "trbsde/adam.hpp"
#include "trbsde/mlp.hpp"

#include <cstdint>
#include <vector>

namespace trbsde {

/// Pairs ((t, x) -> y), one column per sample.
struct RegressionData {
    RowVec t;
    Mat X;
    Mat Y;

    Eigen::Index size() const { return X.cols(); }
    RegressionData subset(const std::vector<Eigen::Index>& idx) const;
};

struct TrainOptions {
    int steps = 2000;
    int batch_size = 128;
    double holdout_fraction = 0.1;
    int eval_every = 100;
    int max_eval_samples = 4096;
    std::uint64_t seed = 0;
    /// When in (0, 1), the trained parameters are replaced at the end by their
    /// bias-corrected exponential moving average over this run's steps.
    double ema_decay = 0.0;
};

/// Bias-corrected exponential moving average of a parameter vector.
class ParamAverage {
public:
    explicit ParamAverage(double decay) : decay_(decay) {}
    bool enabled() const { return decay_ > 0.0 && decay_ < 1.0; }
    void update(const Vec& p);
    Vec value() const;

private:
    double decay_;
    Vec acc_;
    double weight_ = 0.0;
};

struct RegressionReport {
    std::vector<double> train_loss;    // mean mini-batch loss per evaluation window
    std::vector<double> holdout_loss;  // held-out MSE at each evaluation
    double final_holdout = 0.0;
};

/// Mean over samples of ||net(t, x) - y||^2.
double regression_mse(const Mlp& net, const RegressionData& data);

/// Mini-batch ADAM on the mean squared error, warm-started from the current
/// parameters. A fraction of the samples is held out to monitor the loss.
RegressionReport train_regression(Mlp& net, const RegressionData& data, const TrainOptions& opts,
                                  AdamState& state);

/// Loss and parameter gradient of the mean squared error on one batch.
double regression_loss_grad(const Mlp& net, const RegressionData& batch, Vec& grad);

}  // namespace trbsde
