#include "mmgl/data/preprocess.hpp"

#include "mmgl/error.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numeric>
#include <vector>

namespace mmgl::data {

namespace {

std::vector<std::size_t> rows_or_all(std::span<const std::size_t> rows, std::size_t n) {
    if (!rows.empty()) {
        for (std::size_t r : rows) {
            if (r >= n) throw ParameterError(fmt::format("row index {} out of range ({} rows)", r, n));
        }
        return {rows.begin(), rows.end()};
    }
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
}

std::string feature_label(const MultiModalDataset& ds, Eigen::Index f) {
    if (static_cast<std::size_t>(f) < ds.feature_names.size()) {
        return ds.feature_names[static_cast<std::size_t>(f)];
    }
    return fmt::format("#{}", f);
}

}  // namespace

ImputeStats fit_impute(const MultiModalDataset& ds, std::span<const std::size_t> rows) {
    const auto use = rows_or_all(rows, ds.num_patients());
    const Eigen::Index d = ds.features.cols();
    ImputeStats s;
    s.means.setZero(d);
    for (Eigen::Index f = 0; f < d; ++f) {
        double total = 0.0;
        std::size_t count = 0;
        for (std::size_t r : use) {
            const auto i = static_cast<Eigen::Index>(r);
            if (ds.missing.size() && ds.missing(i, f)) continue;
            total += ds.features(i, f);
            ++count;
        }
        if (count == 0) {
            throw DataError(fmt::format("feature '{}' has no observed values", feature_label(ds, f)));
        }
        s.means(f) = total / static_cast<double>(count);
    }
    return s;
}

MultiModalDataset apply_impute(const MultiModalDataset& ds, const ImputeStats& stats) {
    if (stats.means.size() != ds.features.cols()) {
        throw DimensionError(fmt::format("imputation means for {} features applied to {}",
                                         stats.means.size(), ds.features.cols()));
    }
    MultiModalDataset out = ds;
    for (Eigen::Index i = 0; i < out.features.rows(); ++i) {
        for (Eigen::Index f = 0; f < out.features.cols(); ++f) {
            if (out.missing(i, f)) out.features(i, f) = stats.means(f);
        }
    }
    out.missing.setConstant(false);
    return out;
}

MultiModalDataset impute_mean(const MultiModalDataset& ds, std::span<const std::size_t> rows) {
    if (!ds.has_missing()) return ds;
    return apply_impute(ds, fit_impute(ds, rows));
}

Matrix ZScoreStats::apply(const Matrix& features) const {
    if (features.cols() != mean.size()) {
        throw DimensionError(fmt::format("z-score statistics for {} features applied to {}",
                                         mean.size(), features.cols()));
    }
    Matrix out(features.rows(), features.cols());
    for (Eigen::Index f = 0; f < features.cols(); ++f) {
        if (std[f] < kMinFeatureStd) {
            out.col(f).setZero();
        } else {
            out.col(f) = (features.col(f).array() - mean[f]) / std[f];
        }
    }
    return out;
}

ZScoreStats fit_zscore(const MultiModalDataset& ds, std::span<const std::size_t> rows) {
    if (ds.has_missing()) throw DataError("z-scoring requires imputed data");
    const auto use = rows_or_all(rows, ds.num_patients());
    const Eigen::Index d = ds.features.cols();
    const double n = static_cast<double>(use.size());
    ZScoreStats s;
    s.mean.setZero(d);
    s.std.setZero(d);
    for (Eigen::Index f = 0; f < d; ++f) {
        double total = 0.0;
        for (std::size_t r : use) total += ds.features(static_cast<Eigen::Index>(r), f);
        const double mu = total / n;
        double sq = 0.0;
        for (std::size_t r : use) {
            const double dv = ds.features(static_cast<Eigen::Index>(r), f) - mu;
            sq += dv * dv;
        }
        s.mean(f) = mu;
        s.std(f) = std::sqrt(sq / n);
    }
    return s;
}

MultiModalDataset zscore(const MultiModalDataset& ds, std::span<const std::size_t> rows) {
    const ZScoreStats s = fit_zscore(ds, rows);
    MultiModalDataset out = ds;
    out.features = s.apply(ds.features);
    return out;
}

}  // namespace mmgl::data
