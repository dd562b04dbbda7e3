#include "trbsde/sde_model.hpp"

#include <cmath>

namespace trbsde {

TimeGrid::TimeGrid(double t0_, double horizon_, int n_steps_)
    : t0(t0_), horizon(horizon_), n_steps(n_steps_) {
    if (n_steps <= 0) throw std::invalid_argument("TimeGrid: n_steps must be positive");
    if (!(horizon > t0)) throw std::invalid_argument("TimeGrid: horizon must exceed t0");
}

SdeModel linear_model(const Mat& A, const Mat& g) {
    if (A.rows() != A.cols() || g.rows() != A.rows() || g.cols() != A.rows())
        throw DimensionMismatch("linear_model: A and g must be square of equal size");
    SdeModel m;
    m.dim = static_cast<int>(A.rows());
    m.name = "linear";
    m.drift = [A](double, const Vec& x) -> Vec { return A * x; };
    m.diffusion = [g](double) -> Mat { return g; };
    m.drift_jacobian = [A](double, const Vec&) -> Mat { return A; };
    return m;
}

SdeModel pendulum_model(double damping, double noise) {
    SdeModel m;
    m.dim = 2;
    m.name = "pendulum";
    m.drift = [damping](double, const Vec& x) -> Vec {
        Vec f(2);
        f << x(1), std::sin(x(0)) - damping * x(1);
        return f;
    };
    Mat g = Mat::Zero(2, 2);
    g(1, 1) = noise;
    m.diffusion = [g](double) -> Mat { return g; };
    m.drift_jacobian = [damping](double, const Vec& x) -> Mat {
        Mat J(2, 2);
        J << 0.0, 1.0, std::cos(x(0)), -damping;
        return J;
    };
    return m;
}

SdeModel ou_model(double rate, double sigma) {
    Mat A(1, 1);
    A(0, 0) = -rate;
    Mat g(1, 1);
    g(0, 0) = sigma;
    SdeModel m = linear_model(A, g);
    m.name = "ou";
    return m;
}

SdeModel constant_drift_model(const Vec& c, double sigma) {
    SdeModel m;
    m.dim = static_cast<int>(c.size());
    m.name = "constant";
    const int n = m.dim;
    m.drift = [c](double, const Vec&) -> Vec { return c; };
    m.diffusion = [n, sigma](double) -> Mat { return sigma * Mat::Identity(n, n); };
    m.drift_jacobian = [n](double, const Vec&) -> Mat { return Mat::Zero(n, n); };
    return m;
}

}  // namespace trbsde
