#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>

namespace mmgl {

// Dense row-major 64-bit matrix. Scalars are carried as 1x1 matrices.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

std::string shape_str(const Matrix& m);
std::string shape_str(Eigen::Index rows, Eigen::Index cols);

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

// Trainable weight with its gradient accumulator.
struct Param {
    std::string name;
    Matrix value;
    Matrix grad;

    Param() = default;
    Param(std::string name, Matrix init);

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
    Eigen::Index size() const { return value.size(); }
};

}  // namespace mmgl
