#include "trbsde/score.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace trbsde {

GaussianMixture1D::GaussianMixture1D(std::vector<double> w, std::vector<double> m, std::vector<double> v)
    : weights(std::move(w)), means(std::move(m)), variances(std::move(v)) {
    validate();
}

void GaussianMixture1D::validate() const {
    if (weights.empty() || weights.size() != means.size() || weights.size() != variances.size())
        throw std::invalid_argument("GaussianMixture1D: component arrays must be nonempty and equal length");
    double total = 0.0;
    for (std::size_t k = 0; k < size(); ++k) {
        if (!(weights[k] >= 0.0)) throw std::invalid_argument("GaussianMixture1D: negative weight");
        if (!(variances[k] > 0.0)) throw std::invalid_argument("GaussianMixture1D: variance must be positive");
        total += weights[k];
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("GaussianMixture1D: weights must sum to 1");
}

namespace {

// log(w_k N(x; m_k, v_k)) for every component and their log-sum-exp.
struct Responsibilities {
    std::vector<double> r;
    double log_total;
};

Responsibilities responsibilities(const GaussianMixture1D& mix, double x) {
    const std::size_t K = mix.size();
    std::vector<double> l(K);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
        const double d = x - mix.means[k];
        l[k] = (mix.weights[k] > 0.0 ? std::log(mix.weights[k]) : -std::numeric_limits<double>::infinity()) -
               0.5 * std::log(2.0 * std::numbers::pi * mix.variances[k]) - 0.5 * d * d / mix.variances[k];
        top = std::max(top, l[k]);
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < K; ++k) acc += std::exp(l[k] - top);
    const double log_total = top + std::log(acc);
    for (std::size_t k = 0; k < K; ++k) l[k] = std::exp(l[k] - log_total);
    return {std::move(l), log_total};
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

double GaussianMixture1D::log_density(double x) const { return responsibilities(*this, x).log_total; }

double GaussianMixture1D::density(double x) const { return std::exp(log_density(x)); }

double GaussianMixture1D::cdf(double x) const {
    double c = 0.0;
    for (std::size_t k = 0; k < size(); ++k) c += weights[k] * normal_cdf((x - means[k]) / std::sqrt(variances[k]));
    return c;
}

double GaussianMixture1D::log_density_grad(double x) const {
    const auto res = responsibilities(*this, x);
    double g = 0.0;
    for (std::size_t k = 0; k < size(); ++k) g += res.r[k] * (means[k] - x) / variances[k];
    return g;
}

double GaussianMixture1D::log_density_hess(double x) const {
    const auto res = responsibilities(*this, x);
    double first = 0.0, second = 0.0, curvature = 0.0;
    for (std::size_t k = 0; k < size(); ++k) {
        const double a = (means[k] - x) / variances[k];
        first += res.r[k] * a;
        second += res.r[k] * a * a;
        curvature -= res.r[k] / variances[k];
    }
    return curvature + second - first * first;
}

double GaussianMixture1D::mean() const {
    double m = 0.0;
    for (std::size_t k = 0; k < size(); ++k) m += weights[k] * means[k];
    return m;
}

double GaussianMixture1D::variance() const {
    const double m = mean();
    double v = 0.0;
    for (std::size_t k = 0; k < size(); ++k) v += weights[k] * (variances[k] + (means[k] - m) * (means[k] - m));
    return v;
}

double GaussianMixture1D::sample(NoiseStream& s) const {
    const double u = s.uniform();
    std::size_t k = 0;
    double acc = weights[0];
    while (u >= acc && k + 1 < size()) acc += weights[++k];
    return means[k] + std::sqrt(variances[k]) * s.normal();
}

double analytic_mixture_score(const GaussianMixture1D& mix, double G, double x) {
    if (!(G >= 0.0)) throw std::invalid_argument("analytic_mixture_score: G must be nonnegative");
    return G * mix.log_density_grad(x);
}

ScoreField ScoreField::from_net(Mlp net) {
    ScoreField s;
    s.net_ = std::make_shared<const Mlp>(std::move(net));
    return s;
}

ScoreField ScoreField::analytic(BatchFn fn) {
    ScoreField s;
    s.fn_ = std::move(fn);
    return s;
}

Mat ScoreField::evaluate(double t, const Mat& X) const {
    if (net_) return net_->forward(t, X);
    if (fn_) return fn_(t, X);
    return Mat::Zero(X.rows(), X.cols());
}

ScoreData score_data_from_batch(const TrajectoryBatch& batch, int first_index) {
    const int K = batch.grid.n_points() - first_index;
    const int N = batch.n_paths;
    ScoreData d;
    d.t.resize(static_cast<Eigen::Index>(K) * N);
    d.X.resize(batch.dim, static_cast<Eigen::Index>(K) * N);
    for (int k = 0; k < K; ++k) {
        const int idx = k + first_index;
        d.t.segment(static_cast<Eigen::Index>(k) * N, N).setConstant(batch.grid.time(idx));
        d.X.middleCols(static_cast<Eigen::Index>(k) * N, N) = batch.states[idx];
    }
    return d;
}

namespace {

// Per-sample seeds of the Jacobian term: d loss / d jac_cols[j](:, b) = G(t_b)(:, j) / B.
std::vector<Mat> divergence_seeds(const RowVec& t, int n, const DiffusionOuter& G, double inv_batch) {
    std::vector<Mat> seeds(n, Mat(n, t.size()));
    double cached_t = std::numeric_limits<double>::quiet_NaN();
    Mat Gt;
    for (Eigen::Index b = 0; b < t.size(); ++b) {
        if (t(b) != cached_t) {
            Gt = G(t(b));
            cached_t = t(b);
        }
        for (int j = 0; j < n; ++j) seeds[j].col(b) = inv_batch * Gt.col(j);
    }
    return seeds;
}

double ism_value(const Mlp::Tape& tape, const std::vector<Mat>& seeds) {
    double total = 0.5 * tape.value.squaredNorm() / static_cast<double>(tape.value.cols());
    for (std::size_t j = 0; j < seeds.size(); ++j) total += seeds[j].cwiseProduct(tape.jac_cols[j]).sum();
    return total;
}

}  // namespace

double ism_loss_grad(const Mlp& psi, const ScoreData& batch, const DiffusionOuter& G, Vec& grad) {
    if (batch.size() == 0) throw std::invalid_argument("ism_loss: empty batch");
    const int n = psi.config().state_dim;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const Mlp::Tape tape = psi.record(batch.t, batch.X, true);
    const std::vector<Mat> seeds = divergence_seeds(batch.t, n, G, inv_b);
    grad = psi.backward(tape, inv_b * tape.value, &seeds);
    const double loss = ism_value(tape, seeds);
    if (!std::isfinite(loss)) throw NonFiniteValue("ism_loss: non-finite loss");
    return loss;
}

double ism_loss(const Mlp& psi, const ScoreData& data, const DiffusionOuter& G) {
    if (data.size() == 0) throw std::invalid_argument("ism_loss: empty batch");
    const int n = psi.config().state_dim;
    const Eigen::Index chunk = 8192;
    double total = 0.0;
    for (Eigen::Index start = 0; start < data.size(); start += chunk) {
        const Eigen::Index len = std::min(chunk, data.size() - start);
        const RowVec t = data.t.segment(start, len);
        const Mlp::Tape tape = psi.record(t, data.X.middleCols(start, len), true);
        const std::vector<Mat> seeds = divergence_seeds(t, n, G, 1.0);
        total += 0.5 * tape.value.squaredNorm();
        for (int j = 0; j < n; ++j) total += seeds[j].cwiseProduct(tape.jac_cols[j]).sum();
    }
    const double loss = total / static_cast<double>(data.size());
    if (!std::isfinite(loss)) throw NonFiniteValue("ism_loss: non-finite loss");
    return loss;
}

double ism_loss(const Mlp& psi, const TrajectoryBatch& batch, const DiffusionOuter& G) {
    return ism_loss(psi, score_data_from_batch(batch, 0), G);
}

double weighted_score_error(const Mlp& psi, double t, const GaussianMixture1D& p_t, double G, double mass,
                            int n_quad) {
    if (psi.config().state_dim != 1 || psi.config().out_dim != 1)
        throw DimensionMismatch("weighted_score_error: scalar net required");
    auto quantile = [&](double q) {
        double lo = p_t.mean() - 50.0 * std::sqrt(p_t.variance()), hi = -lo + 2.0 * p_t.mean();
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (p_t.cdf(mid) < q) lo = mid; else hi = mid;
        }
        return 0.5 * (lo + hi);
    };
    const double a = quantile(0.5 * (1.0 - mass)), b = quantile(0.5 * (1.0 + mass));
    Mat X(1, n_quad);
    for (int i = 0; i < n_quad; ++i) X(0, i) = a + (b - a) * (i + 0.5) / n_quad;
    const Mat pred = psi.forward(t, X);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < n_quad; ++i) {
        const double w = p_t.density(X(0, i));
        const double s = analytic_mixture_score(p_t, G, X(0, i));
        num += w * (pred(0, i) - s) * (pred(0, i) - s);
        den += w * s * s;
    }
    return std::sqrt(num / den);
}

ScoreTrainReport train_score(Mlp& psi, const ScoreData& data, const DiffusionOuter& G,
                             const TrainOptions& opts, AdamState& state) {
    if (data.size() == 0) throw std::invalid_argument("train_score: empty dataset");
    if (state.m.size() == 0) state = AdamState(psi.n_params(), state.lr);
    NoiseStream rng(domain_seed(opts.seed, SeedDomain::Score), 0);
    const auto M = static_cast<std::uint64_t>(data.size());
    const int B = std::max(1, opts.batch_size);
    ScoreData batch;
    batch.t.resize(B);
    batch.X.resize(data.X.rows(), B);
    Vec grad;
    ParamAverage avg(opts.ema_decay);
    ScoreTrainReport report;
    double window = 0.0;
    int count = 0;
    double reference = std::numeric_limits<double>::quiet_NaN();
    for (int step = 1; step <= opts.steps; ++step) {
        for (int b = 0; b < B; ++b) {
            const auto j = static_cast<Eigen::Index>(rng.next_bits() % M);
            batch.t(b) = data.t(j);
            batch.X.col(b) = data.X.col(j);
        }
        window += ism_loss_grad(psi, batch, G, grad);
        ++count;
        adam_step(psi.params(), grad, state);
        if (avg.enabled()) avg.update(psi.params());
        if (step % std::max(1, opts.eval_every) == 0 || step == opts.steps) {
            const double mean = window / count;
            report.loss.push_back(mean);
            if (std::isnan(reference)) reference = mean;
            if (mean > 10.0 * std::max(std::abs(reference), 1.0)) {
                std::ostringstream msg;
                msg << "train_score: loss " << mean << " at step " << step << " exceeds 10x the initial level "
                    << reference;
                throw TrainingDiverged(msg.str());
            }
            window = 0.0;
            count = 0;
        }
    }
    if (avg.enabled() && opts.steps > 0) psi.params() = avg.value();
    return report;
}

}  // namespace trbsde
