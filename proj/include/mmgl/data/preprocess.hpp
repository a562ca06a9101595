#pragma once

#include "mmgl/data/dataset.hpp"

#include <optional>
#include <span>

namespace mmgl::data {

// Per-feature means of the observed entries.
struct ImputeStats {
    Eigen::RowVectorXd means;
};

// Means over `rows` (all patients when empty). Throws DataError naming the
// feature if it has no observed value among those rows.
ImputeStats fit_impute(const MultiModalDataset& ds, std::span<const std::size_t> rows = {});
MultiModalDataset apply_impute(const MultiModalDataset& ds, const ImputeStats& stats);
MultiModalDataset impute_mean(const MultiModalDataset& ds, std::span<const std::size_t> rows = {});

struct ZScoreStats {
    Eigen::RowVectorXd mean;
    // Population standard deviation; features below 1e-12 map to 0.
    Eigen::RowVectorXd std;

    Matrix apply(const Matrix& features) const;
};

inline constexpr double kMinFeatureStd = 1e-12;

// Statistics over `rows` (all patients when empty). Requires imputation.
ZScoreStats fit_zscore(const MultiModalDataset& ds, std::span<const std::size_t> rows = {});
MultiModalDataset zscore(const MultiModalDataset& ds, std::span<const std::size_t> rows = {});

}  // namespace mmgl::data
