#pragma once

#include "mmgl/numcore/matrix.hpp"

#include <cmath>
#include <random>

namespace mmgl {

// Uniform in +-sqrt(6 / (fan_in + fan_out)), fan_in = rows, fan_out = cols.
inline Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> u(-limit, limit);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

}  // namespace mmgl
