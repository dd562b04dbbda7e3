#include "trbsde/oracles.hpp"

#include "trbsde/rng.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace trbsde {

LinearModelConfig LinearModelConfig::standard(double epsilon) {
    LinearModelConfig cfg;
    cfg.A.resize(2, 2);
    cfg.A << 0.0, 1.0, -1.0, -0.5;
    cfg.B = Mat::Identity(2, 2);
    cfg.Qf = Mat::Identity(2, 2);
    cfg.epsilon = epsilon;
    cfg.horizon = 2.0;
    return cfg;
}

SdeModel LinearModelConfig::model() const { return linear_model(A, epsilon * B); }

TerminalCost LinearModelConfig::cost() const { return TerminalCost::quadratic(Qf, Vec::Zero(A.rows())); }

Mat expm(const Mat& M) { return M.exp(); }

Mat lyapunov_gain(const LinearModelConfig& cfg, double t) {
    const Mat E = expm(cfg.A * (cfg.horizon - t));
    return E.transpose() * cfg.Qf * E;
}

Mat lyapunov_gain_ode(const LinearModelConfig& cfg, double t, int steps) {
    // Integrate in tau = T - t: dG/dtau = A^T G + G A.
    const double span = cfg.horizon - t;
    Mat G = cfg.Qf;
    if (span <= 0.0) return G;
    const double h = span / steps;
    const Mat& A = cfg.A;
    auto rhs = [&A](const Mat& X) -> Mat { return A.transpose() * X + X * A; };
    for (int s = 0; s < steps; ++s) {
        const Mat k1 = rhs(G);
        const Mat k2 = rhs(G + 0.5 * h * k1);
        const Mat k3 = rhs(G + 0.5 * h * k2);
        const Mat k4 = rhs(G + h * k3);
        G += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return G;
}

GaussianMoments linear_gaussian_marginal(const Mat& A, const Mat& g, const Vec& m0, const Mat& S0, double t) {
    const Eigen::Index n = A.rows();
    // Van Loan: exp([[-A, g g^T], [0, A^T]] t) carries the noise Gramian.
    Mat M = Mat::Zero(2 * n, 2 * n);
    M.topLeftCorner(n, n) = -A;
    M.topRightCorner(n, n) = g * g.transpose();
    M.bottomRightCorner(n, n) = A.transpose();
    const Mat E = expm(M * t);
    const Mat F22 = E.bottomRightCorner(n, n);
    const Mat gram = F22.transpose() * E.topRightCorner(n, n);
    const Mat eA = F22.transpose();
    return {eA * m0, eA * S0 * eA.transpose() + 0.5 * (gram + gram.transpose())};
}

ScoreField linear_gaussian_score(const Mat& A, const Mat& g, const Vec& m0, const Mat& S0) {
    const Mat G = g * g.transpose();
    return ScoreField::analytic([=](double t, const Mat& X) -> Mat {
        const GaussianMoments mom = linear_gaussian_marginal(A, g, m0, S0, t);
        return -G * mom.cov.ldlt().solve(X.colwise() - mom.mean);
    });
}

PhiDerivatives lyapunov_phi(const LinearModelConfig& cfg) {
    return [cfg](double t, const Mat& X, const Mat&) {
        const Mat gain = lyapunov_gain(cfg, t);
        Mlp::BatchDerivatives d;
        d.value = gain * X;
        for (Eigen::Index j = 0; j < X.rows(); ++j) d.jac_cols.push_back(gain.col(j).replicate(1, X.cols()));
        d.g_hess_trace = Mat::Zero(X.rows(), X.cols());
        return d;
    };
}

GaussianMixture1D tilted_mixture(const GaussianMixture1D& target, double beta, double center) {
    if (!(beta >= 0.0)) throw std::invalid_argument("tilted_mixture: beta must be nonnegative");
    target.validate();
    if (beta == 0.0) return target;
    const std::size_t K = target.size();
    std::vector<double> logw(K), means(K), vars(K);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
        const double m = target.means[k], v = target.variances[k];
        const double prec = 1.0 / v + beta;
        means[k] = (m / v + beta * center) / prec;
        vars[k] = 1.0 / prec;
        const double s2 = v + 1.0 / beta;
        logw[k] = std::log(target.weights[k]) - 0.5 * std::log(2.0 * std::numbers::pi * s2) -
                  0.5 * (center - m) * (center - m) / s2;
        top = std::max(top, logw[k]);
    }
    double total = 0.0;
    for (double& l : logw) total += (l = std::exp(l - top));
    for (double& l : logw) l /= total;
    return GaussianMixture1D(std::move(logw), std::move(means), std::move(vars));
}

double mse_vs_oracle(const Mlp& phi, const LinearModelConfig& cfg, int n_eval, std::uint64_t seed) {
    const Eigen::Index n = cfg.A.rows();
    NoiseStream s(domain_seed(seed, SeedDomain::Evaluation), 0);
    Mat xi(n, n_eval);
    for (int i = 0; i < n_eval; ++i)
        for (Eigen::Index j = 0; j < n; ++j) xi(j, i) = s.normal();
    const Mat G0 = lyapunov_gain(cfg, 0.0);
    const Mat err = G0 * xi - phi.forward(0.0, xi);
    return err.colwise().squaredNorm().mean();
}

double w1_distance(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("w1_distance: empty sample set");
    std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    if (x.size() == y.size()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) acc += std::abs(x[i] - y[i]);
        return acc / static_cast<double>(x.size());
    }
    // Sweep the merged support; between consecutive atoms both CDFs are flat.
    const double wa = 1.0 / static_cast<double>(x.size());
    const double wb = 1.0 / static_cast<double>(y.size());
    std::size_t i = 0, j = 0;
    double Fa = 0.0, Fb = 0.0, acc = 0.0;
    double prev = std::min(x.front(), y.front());
    while (i < x.size() || j < y.size()) {
        const double next = (j >= y.size() || (i < x.size() && x[i] <= y[j])) ? x[i] : y[j];
        acc += std::abs(Fa - Fb) * (next - prev);
        while (i < x.size() && x[i] == next) {
            Fa += wa;
            ++i;
        }
        while (j < y.size() && y[j] == next) {
            Fb += wb;
            ++j;
        }
        prev = next;
    }
    return acc;
}

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

// Antiderivative of the mixture CDF vanishing at -infinity.
double cdf_integral(const GaussianMixture1D& mix, double x) {
    double acc = 0.0;
    for (std::size_t k = 0; k < mix.size(); ++k) {
        const double s = std::sqrt(mix.variances[k]);
        const double z = (x - mix.means[k]) / s;
        acc += mix.weights[k] * ((x - mix.means[k]) * normal_cdf(z) + s * normal_pdf(z));
    }
    return acc;
}

// int_b^inf (1 - F(x)) dx.
double upper_tail_integral(const GaussianMixture1D& mix, double b) {
    double acc = 0.0;
    for (std::size_t k = 0; k < mix.size(); ++k) {
        const double s = std::sqrt(mix.variances[k]);
        const double z = (b - mix.means[k]) / s;
        acc += mix.weights[k] * (s * normal_pdf(z) - (b - mix.means[k]) * normal_cdf(-z));
    }
    return acc;
}

// Point in [a, b] where F crosses level c (F monotone).
double crossing(const GaussianMixture1D& mix, double a, double b, double c) {
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (a + b);
        if (mix.cdf(mid) < c) a = mid; else b = mid;
        if (b - a < 1e-14 * (1.0 + std::abs(a))) break;
    }
    return 0.5 * (a + b);
}

}  // namespace

double w1_to_mixture(std::span<const double> samples, const GaussianMixture1D& mix) {
    if (samples.empty()) throw std::invalid_argument("w1_to_mixture: empty sample set");
    std::vector<double> x(samples.begin(), samples.end());
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double acc = cdf_integral(mix, x.front()) + upper_tail_integral(mix, x.back());
    for (std::size_t i = 0; i + 1 < x.size(); ++i) {
        const double a = x[i], b = x[i + 1];
        if (b <= a) continue;
        const double c = static_cast<double>(i + 1) / n;
        // |c - F| on [a, b]; F increases, so the sign flips at most once.
        const double Fa = mix.cdf(a), Fb = mix.cdf(b);
        auto signed_part = [&](double lo, double hi) {
            return c * (hi - lo) - (cdf_integral(mix, hi) - cdf_integral(mix, lo));
        };
        if (Fb <= c) {
            acc += signed_part(a, b);
        } else if (Fa >= c) {
            acc -= signed_part(a, b);
        } else {
            const double m = crossing(mix, a, b, c);
            acc += signed_part(a, m) - signed_part(m, b);
        }
    }
    return acc;
}

CostMap mc_cost_map(const SdeModel& model, const TerminalCost& cost, const CostMapSpec& spec) {
    if (spec.resolution < 2) throw std::invalid_argument("mc_cost_map: resolution must be >= 2");
    if (model.dim != 2) throw DimensionMismatch("mc_cost_map: model must be two-dimensional");
    const int r = spec.resolution;
    const int R = spec.rollouts;
    CostMap map;
    map.theta = Vec::LinSpaced(r, spec.theta_min, spec.theta_max);
    map.omega = Vec::LinSpaced(r, spec.omega_min, spec.omega_max);
    map.cost = Mat::Zero(r, r);
    const TimeGrid grid(0.0, spec.horizon, spec.n_steps);
    const ControlLaw zero = ControlLaw::zero(2);
    for (int i = 0; i < r; ++i) {
        Mat x0(2, static_cast<Eigen::Index>(r) * R);
        for (int j = 0; j < r; ++j)
            for (int q = 0; q < R; ++q) x0.col(static_cast<Eigen::Index>(j) * R + q) << map.theta(i), map.omega(j);
        const TrajectoryBatch batch =
            simulate_forward_from(model, x0, zero, grid, derive_seed(spec.seed, static_cast<std::uint64_t>(i)));
        for (int j = 0; j < r; ++j) {
            double acc = 0.0;
            for (int q = 0; q < R; ++q) acc += cost.value(batch.terminal().col(static_cast<Eigen::Index>(j) * R + q));
            map.cost(i, j) = acc / R;
        }
    }
    return map;
}

}  // namespace trbsde
