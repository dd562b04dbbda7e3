#pragma once

#include "trbsde/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace trbsde {

enum class Activation { Tanh, Relu };

/// Fully connected network (t, x) -> R^out with tanh hidden layers.
///
/// Input is the column [t / horizon; x]. Output is
/// output_scale * (W_D h_{D-1} + b_D), where output_scale is a fixed
/// (untrained) constant. The output layer starts at zero, so a fresh net is
/// identically zero.
///
/// Besides the value, the net propagates exact first and second directional
/// derivatives in x (forward mode), which is all that is needed for the
/// divergence term of score matching and the trace term of the reversed
/// adjoint drift. Parameter gradients of losses that depend on both the value
/// and the x-Jacobian are obtained by reverse accumulation through that same
/// forward-mode computation.
class Mlp {
public:
    struct Config {
        int state_dim = 1;
        int out_dim = 1;
        int hidden = 64;
        int depth = 2;
        double horizon = 1.0;
        double output_scale = 1.0;
        std::uint64_t seed = 0;
        Activation activation = Activation::Tanh;
    };

    explicit Mlp(const Config& cfg);

    const Config& config() const { return cfg_; }
    Eigen::Index n_params() const { return params_.size(); }
    const Vec& params() const { return params_; }
    Vec& params() { return params_; }

    Vec operator()(double t, const Vec& x) const;
    /// Columns of X share the time t.
    Mat forward(double t, const Mat& X) const;
    Mat forward(const RowVec& t, const Mat& X) const;

    struct PointDerivatives {
        Vec value;
        Mat jac;           // jac(i, j) = d out_i / d x_j
        Vec g_hess_trace;  // Tr(G d^2 out_i / dx^2)
    };
    PointDerivatives derivatives(double t, const Vec& x, const Mat& G) const;

    struct BatchDerivatives {
        Mat value;                  // out x B
        std::vector<Mat> jac_cols;  // jac_cols[j] = d value / d x_j, out x B
        Mat g_hess_trace;           // out x B, empty when not requested
        Mat jacobian(Eigen::Index sample) const;
    };
    BatchDerivatives derivatives(double t, const Mat& X, const Mat& G, bool with_hessian = true) const;

    /// Forward pass kept for reverse accumulation.
    struct Tape {
        Mat input;
        std::vector<Mat> h;                // hidden activations
        std::vector<std::vector<Mat>> da;  // [layer][direction] pre-activation tangents
        std::vector<std::vector<Mat>> dh;  // [layer][direction] activation tangents
        Mat value;
        std::vector<Mat> jac_cols;
    };
    Tape record(const RowVec& t, const Mat& X, bool with_tangents) const;

    /// Gradient w.r.t. the flat parameters of sum(d_value .* value) +
    /// sum_j sum(d_jac[j] .* jac_cols[j]). `d_jac` may be null.
    Vec backward(const Tape& tape, const Mat& d_value, const std::vector<Mat>* d_jac) const;

    void save(std::ostream& os) const;
    static Mlp load(std::istream& is);

private:
    int layer_in(int l) const;
    int layer_out(int l) const;
    Eigen::Map<const Mat> weight(int l) const;
    Eigen::Map<const Vec> bias(int l) const;
    Eigen::Index weight_offset(int l) const { return offsets_[l]; }
    Eigen::Index bias_offset(int l) const { return offsets_[l] + layer_out(l) * layer_in(l); }
    Mat make_input(const RowVec& t, const Mat& X) const;
    void check_finite() const;

    Config cfg_;
    std::vector<Eigen::Index> offsets_;
    Vec params_;
};

}  // namespace trbsde
