#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace trbsde {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Vec = VectorX<double>;
using Mat = MatrixX<double>;
using RowVec = RowVectorX<double>;

// Error types. Everything derives from std::runtime_error so callers that do
// not care about the category can catch one type.

class SimulationDiverged : public std::runtime_error {
public:
    SimulationDiverged(const std::string& what, int trajectory, int step)
        : std::runtime_error(what), trajectory_(trajectory), step_(step) {}
    int trajectory() const noexcept { return trajectory_; }
    int step() const noexcept { return step_; }

private:
    int trajectory_;
    int step_;
};

class DimensionMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NonFiniteValue : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return m.allFinite();
}

}  // namespace trbsde
