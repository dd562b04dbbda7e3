#pragma once

#include "trbsde/adam.hpp"
#include "trbsde/mlp.hpp"
#include "trbsde/regression.hpp"
#include "trbsde/rng.hpp"
#include "trbsde/simulate.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace trbsde {

/// sum_k w_k N(m_k, v_k) on the real line.
struct GaussianMixture1D {
    std::vector<double> weights;
    std::vector<double> means;
    std::vector<double> variances;

    GaussianMixture1D() = default;
    GaussianMixture1D(std::vector<double> w, std::vector<double> m, std::vector<double> v);

    std::size_t size() const { return weights.size(); }
    void validate() const;

    double log_density(double x) const;
    double density(double x) const;
    double cdf(double x) const;
    /// d/dx log p(x), evaluated with log-sum-exp responsibilities.
    double log_density_grad(double x) const;
    /// d^2/dx^2 log p(x).
    double log_density_hess(double x) const;
    double mean() const;
    double variance() const;
    double sample(NoiseStream& s) const;
};

/// G * d/dx log p(x) for a 1-D mixture. Finite for every finite x.
double analytic_mixture_score(const GaussianMixture1D& mix, double G, double x);

/// s(t, x) on a batch of states, backed either by a trained network or by a
/// closed form.
class ScoreField {
public:
    using BatchFn = std::function<Mat(double, const Mat&)>;

    static ScoreField from_net(Mlp net);
    static ScoreField analytic(BatchFn fn);

    Mat evaluate(double t, const Mat& X) const;
    Vec evaluate(double t, const Vec& x) const { return evaluate(t, Mat(x)).col(0); }
    const Mlp* net() const { return net_.get(); }

private:
    std::shared_ptr<const Mlp> net_;
    BatchFn fn_;
};

using DiffusionOuter = std::function<Mat(double)>;

/// Samples (t, x) for implicit score matching.
struct ScoreData {
    RowVec t;
    Mat X;
    Eigen::Index size() const { return X.cols(); }
};

/// Every (t_k, X[i][k]) for k >= first_index.
ScoreData score_data_from_batch(const TrajectoryBatch& batch, int first_index = 1);

/// Mean of 1/2 ||psi(t, x)||^2 + sum_ij G_ij(t) d psi_i / d x_j over the samples.
double ism_loss(const Mlp& psi, const ScoreData& data, const DiffusionOuter& G);
/// ism_loss over every grid point of a batch (including k = 0).
double ism_loss(const Mlp& psi, const TrajectoryBatch& batch, const DiffusionOuter& G);

/// Loss and parameter gradient on one mini-batch.
double ism_loss_grad(const Mlp& psi, const ScoreData& batch, const DiffusionOuter& G, Vec& grad);

struct ScoreTrainReport {
    std::vector<double> loss;  // mean mini-batch loss per evaluation window
};

/// Relative weighted L2 error of a scalar score net against G d/dx log p_t:
/// sqrt(int p (psi - s)^2 / int p s^2) over the central `mass` of p_t.
double weighted_score_error(const Mlp& psi, double t, const GaussianMixture1D& p_t, double G, double mass = 0.95,
                            int n_quad = 2000);

/// Trains psi in place by ADAM on the implicit score matching objective.
/// Throws TrainingDiverged if a window loss exceeds 10 max(|first window|, 1).
ScoreTrainReport train_score(Mlp& psi, const ScoreData& data, const DiffusionOuter& G,
                             const TrainOptions& opts, AdamState& state);

}  // namespace trbsde
