#include "trbsde/mlp.hpp"

#include "trbsde/rng.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

namespace trbsde {

namespace {

constexpr char kSnapshotMagic[8] = {'T', 'R', 'B', 'M', 'L', 'P', '0', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("Mlp::load: truncated snapshot");
    return v;
}

}  // namespace

Mlp::Mlp(const Config& cfg) : cfg_(cfg) {
    if (cfg_.activation != Activation::Tanh)
        throw std::invalid_argument("Mlp: only smooth (tanh) activations are supported");
    if (cfg_.state_dim < 1 || cfg_.out_dim < 1 || cfg_.hidden < 1 || cfg_.depth < 1)
        throw std::invalid_argument("Mlp: dimensions must be positive");
    if (!(cfg_.horizon > 0.0)) throw std::invalid_argument("Mlp: horizon must be positive");

    Eigen::Index total = 0;
    for (int l = 0; l <= cfg_.depth; ++l) {
        offsets_.push_back(total);
        total += layer_out(l) * layer_in(l) + layer_out(l);
    }
    params_ = Vec::Zero(total);

    // LeCun-normal hidden weights, zero biases, zero output layer.
    NoiseStream stream(domain_seed(cfg_.seed, SeedDomain::Network), 0);
    for (int l = 0; l < cfg_.depth; ++l) {
        const double sd = 1.0 / std::sqrt(static_cast<double>(layer_in(l)));
        const Eigen::Index count = layer_out(l) * layer_in(l);
        for (Eigen::Index p = 0; p < count; ++p) params_(offsets_[l] + p) = sd * stream.normal();
    }
}

int Mlp::layer_in(int l) const { return l == 0 ? 1 + cfg_.state_dim : cfg_.hidden; }
int Mlp::layer_out(int l) const { return l == cfg_.depth ? cfg_.out_dim : cfg_.hidden; }

Eigen::Map<const Mat> Mlp::weight(int l) const {
    return {params_.data() + weight_offset(l), layer_out(l), layer_in(l)};
}

Eigen::Map<const Vec> Mlp::bias(int l) const {
    return {params_.data() + bias_offset(l), layer_out(l)};
}

void Mlp::check_finite() const {
    if (!params_.allFinite()) throw NonFiniteValue("Mlp: non-finite parameters");
}

Mat Mlp::make_input(const RowVec& t, const Mat& X) const {
    if (X.rows() != cfg_.state_dim) throw DimensionMismatch("Mlp: state dimension mismatch");
    if (t.size() != X.cols()) throw DimensionMismatch("Mlp: time/state batch size mismatch");
    Mat input(1 + cfg_.state_dim, X.cols());
    input.row(0) = t / cfg_.horizon;
    input.bottomRows(cfg_.state_dim) = X;
    return input;
}

Vec Mlp::operator()(double t, const Vec& x) const { return forward(t, Mat(x)).col(0); }

Mat Mlp::forward(double t, const Mat& X) const {
    return forward(RowVec::Constant(X.cols(), t), X);
}

Mat Mlp::forward(const RowVec& t, const Mat& X) const {
    check_finite();
    Mat z = make_input(t, X);
    for (int l = 0; l < cfg_.depth; ++l) {
        Mat a = weight(l) * z;
        a.colwise() += bias(l);
        z = a.array().tanh().matrix();
    }
    Mat y = weight(cfg_.depth) * z;
    y.colwise() += bias(cfg_.depth);
    return cfg_.output_scale * y;
}

Mlp::PointDerivatives Mlp::derivatives(double t, const Vec& x, const Mat& G) const {
    const BatchDerivatives b = derivatives(t, Mat(x), G, true);
    return {b.value.col(0), b.jacobian(0), b.g_hess_trace.col(0)};
}

Mat Mlp::BatchDerivatives::jacobian(Eigen::Index sample) const {
    Mat J(value.rows(), static_cast<Eigen::Index>(jac_cols.size()));
    for (std::size_t j = 0; j < jac_cols.size(); ++j) J.col(static_cast<Eigen::Index>(j)) = jac_cols[j].col(sample);
    return J;
}

Mlp::BatchDerivatives Mlp::derivatives(double t, const Mat& X, const Mat& G, bool with_hessian) const {
    check_finite();
    const int n = cfg_.state_dim;
    const Eigen::Index B = X.cols();
    if (with_hessian && (G.rows() != n || G.cols() != n))
        throw DimensionMismatch("Mlp::derivatives: G must be n x n");

    Mat z = make_input(RowVec::Constant(B, t), X);
    std::vector<Mat> dz(n);  // tangents of the layer input
    Mat r;                   // sum_jk G_jk d2 h / dx_j dx_k
    for (int l = 0; l < cfg_.depth; ++l) {
        const auto W = weight(l);
        Mat a = W * z;
        a.colwise() += bias(l);
        const Mat h = a.array().tanh().matrix();
        const Mat s = (1.0 - h.array().square()).matrix();

        std::vector<Mat> da(n), dh(n);
        for (int j = 0; j < n; ++j) {
            da[j] = (l == 0) ? Mat(W.col(1 + j).replicate(1, B)) : Mat(W * dz[j]);
            dh[j] = (s.array() * da[j].array()).matrix();
        }
        if (with_hessian) {
            Mat q = (l == 0) ? Mat::Zero(cfg_.hidden, B) : Mat(W * r);
            Mat cross = Mat::Zero(cfg_.hidden, B);
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                    if (G(j, k) != 0.0) cross.array() += G(j, k) * dh[k].array() * da[j].array();
            r = (s.array() * q.array() - 2.0 * h.array() * cross.array()).matrix();
        }
        z = h;
        dz = std::move(dh);
    }

    const auto Wout = weight(cfg_.depth);
    const double scale = cfg_.output_scale;
    BatchDerivatives out;
    out.value = Wout * z;
    out.value.colwise() += bias(cfg_.depth);
    out.value *= scale;
    out.jac_cols.resize(n);
    for (int j = 0; j < n; ++j) out.jac_cols[j] = scale * (Wout * dz[j]);
    if (with_hessian) out.g_hess_trace = scale * (Wout * r);
    return out;
}

Mlp::Tape Mlp::record(const RowVec& t, const Mat& X, bool with_tangents) const {
    check_finite();
    const int n = cfg_.state_dim;
    const Eigen::Index B = X.cols();
    Tape tape;
    tape.input = make_input(t, X);
    if (with_tangents) {
        tape.da.resize(cfg_.depth);
        tape.dh.resize(cfg_.depth);
    }
    const Mat* z = &tape.input;
    for (int l = 0; l < cfg_.depth; ++l) {
        const auto W = weight(l);
        Mat a = W * (*z);
        a.colwise() += bias(l);
        tape.h.push_back(a.array().tanh().matrix());
        if (with_tangents) {
            const Mat& h = tape.h.back();
            const Mat s = (1.0 - h.array().square()).matrix();
            for (int j = 0; j < n; ++j) {
                Mat da = (l == 0) ? Mat(W.col(1 + j).replicate(1, B)) : Mat(W * tape.dh[l - 1][j]);
                tape.dh[l].push_back((s.array() * da.array()).matrix());
                tape.da[l].push_back(std::move(da));
            }
        }
        z = &tape.h.back();
    }
    const auto Wout = weight(cfg_.depth);
    const double scale = cfg_.output_scale;
    tape.value = Wout * (*z);
    tape.value.colwise() += bias(cfg_.depth);
    tape.value *= scale;
    if (with_tangents) {
        for (int j = 0; j < n; ++j) tape.jac_cols.push_back(scale * (Wout * tape.dh[cfg_.depth - 1][j]));
    }
    return tape;
}

Vec Mlp::backward(const Tape& tape, const Mat& d_value, const std::vector<Mat>* d_jac) const {
    const int n = cfg_.state_dim;
    const int D = cfg_.depth;
    const bool tangents = d_jac != nullptr;
    if (tangents && (tape.dh.empty() || static_cast<int>(d_jac->size()) != n))
        throw std::invalid_argument("Mlp::backward: Jacobian seeds need a tape with tangents");

    Vec grad = Vec::Zero(params_.size());
    auto gW = [&](int l) {
        return Eigen::Map<Mat>(grad.data() + weight_offset(l), layer_out(l), layer_in(l));
    };
    auto gb = [&](int l) { return Eigen::Map<Vec>(grad.data() + bias_offset(l), layer_out(l)); };

    const double scale = cfg_.output_scale;
    const Mat g = scale * d_value;
    std::vector<Mat> gj;
    if (tangents)
        for (int j = 0; j < n; ++j) gj.push_back(scale * (*d_jac)[j]);

    const auto Wout = weight(D);
    gW(D).noalias() += g * tape.h[D - 1].transpose();
    gb(D) += g.rowwise().sum();
    Mat hbar = Wout.transpose() * g;
    std::vector<Mat> dhbar(tangents ? n : 0);
    for (int j = 0; tangents && j < n; ++j) {
        gW(D).noalias() += gj[j] * tape.dh[D - 1][j].transpose();
        dhbar[j] = Wout.transpose() * gj[j];
    }

    for (int l = D - 1; l >= 0; --l) {
        const Mat& h = tape.h[l];
        const Mat& z = (l == 0) ? tape.input : tape.h[l - 1];
        const Mat s = (1.0 - h.array().square()).matrix();
        std::vector<Mat> dabar(tangents ? n : 0);
        if (tangents) {
            Mat sbar = Mat::Zero(h.rows(), h.cols());
            for (int j = 0; j < n; ++j) {
                sbar.array() += dhbar[j].array() * tape.da[l][j].array();
                dabar[j] = (s.array() * dhbar[j].array()).matrix();
            }
            hbar.array() -= 2.0 * h.array() * sbar.array();
        }
        const Mat abar = (s.array() * hbar.array()).matrix();
        gW(l).noalias() += abar * z.transpose();
        gb(l) += abar.rowwise().sum();
        const auto W = weight(l);
        if (tangents) {
            for (int j = 0; j < n; ++j) {
                if (l == 0) {
                    gW(0).col(1 + j) += dabar[j].rowwise().sum();
                } else {
                    gW(l).noalias() += dabar[j] * tape.dh[l - 1][j].transpose();
                    dhbar[j] = W.transpose() * dabar[j];
                }
            }
        }
        if (l > 0) hbar = W.transpose() * abar;
    }
    return grad;
}

void Mlp::save(std::ostream& os) const {
    os.write(kSnapshotMagic, sizeof(kSnapshotMagic));
    write_pod<std::int32_t>(os, cfg_.state_dim);
    write_pod<std::int32_t>(os, cfg_.out_dim);
    write_pod<std::int32_t>(os, cfg_.hidden);
    write_pod<std::int32_t>(os, cfg_.depth);
    write_pod<double>(os, cfg_.horizon);
    write_pod<double>(os, cfg_.output_scale);
    write_pod<std::uint64_t>(os, cfg_.seed);
    write_pod<std::int64_t>(os, params_.size());
    os.write(reinterpret_cast<const char*>(params_.data()),
             static_cast<std::streamsize>(params_.size() * sizeof(double)));
}

Mlp Mlp::load(std::istream& is) {
    char magic[sizeof(kSnapshotMagic)];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kSnapshotMagic, sizeof(magic)) != 0)
        throw std::runtime_error("Mlp::load: not a network snapshot");
    Config cfg;
    cfg.state_dim = read_pod<std::int32_t>(is);
    cfg.out_dim = read_pod<std::int32_t>(is);
    cfg.hidden = read_pod<std::int32_t>(is);
    cfg.depth = read_pod<std::int32_t>(is);
    cfg.horizon = read_pod<double>(is);
    cfg.output_scale = read_pod<double>(is);
    cfg.seed = read_pod<std::uint64_t>(is);
    const auto count = read_pod<std::int64_t>(is);
    Mlp net(cfg);
    if (count != net.n_params()) throw std::runtime_error("Mlp::load: parameter count does not match header");
    is.read(reinterpret_cast<char*>(net.params_.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (!is) throw std::runtime_error("Mlp::load: truncated snapshot");
    return net;
}

}  // namespace trbsde
