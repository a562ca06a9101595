#include "mmgl/train/metrics.hpp"

#include "mmgl/error.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

namespace mmgl::train {

double auc_binary(std::span<const double> scores, std::span<const int> positive) {
    const std::size_t n = scores.size();
    if (positive.size() != n) {
        throw DimensionError(fmt::format("{} scores but {} labels", n, positive.size()));
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Midranks doubled so that tied groups stay integral: a group occupying
    // ranks r+1..r+g gets doubled rank 2r + g + 1.
    std::int64_t doubled_rank_sum = 0;
    std::int64_t pos = 0;
    for (std::size_t start = 0; start < n;) {
        std::size_t end = start;
        while (end < n && scores[order[end]] == scores[order[start]]) ++end;
        const auto g = static_cast<std::int64_t>(end - start);
        const std::int64_t doubled = 2 * static_cast<std::int64_t>(start) + g + 1;
        for (std::size_t i = start; i < end; ++i) {
            if (positive[order[i]]) {
                doubled_rank_sum += doubled;
                ++pos;
            }
        }
        start = end;
    }
    const std::int64_t neg = static_cast<std::int64_t>(n) - pos;
    if (pos == 0 || neg == 0) throw ParameterError("AUC needs at least one positive and one negative");
    // 2U = 2 * sum(ranks) - P(P+1) counts each won pair twice and each tie once.
    const std::int64_t twice_u = doubled_rank_sum - pos * (pos + 1);
    return static_cast<double>(twice_u) / static_cast<double>(2 * pos * neg);
}

double auc_macro_ovr(const Matrix& scores, std::span<const int> labels) {
    if (static_cast<std::size_t>(scores.rows()) != labels.size()) {
        throw DimensionError(fmt::format("{} score rows but {} labels", scores.rows(), labels.size()));
    }
    double total = 0.0;
    int used = 0;
    std::vector<double> col(labels.size());
    std::vector<int> flag(labels.size());
    for (Eigen::Index c = 0; c < scores.cols(); ++c) {
        std::size_t pos = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            col[i] = scores(static_cast<Eigen::Index>(i), c);
            flag[i] = labels[i] == c ? 1 : 0;
            pos += static_cast<std::size_t>(flag[i]);
        }
        if (pos == 0 || pos == labels.size()) continue;
        total += auc_binary(col, flag);
        ++used;
    }
    if (used == 0) {
        spdlog::warn("AUC undefined: no class has both positives and negatives; reporting 0.5");
        return 0.5;
    }
    return total / used;
}

double auc(const Matrix& scores, std::span<const int> labels) {
    if (scores.cols() == 2) {
        std::vector<double> s(labels.size());
        std::vector<int> flag(labels.size());
        std::size_t pos = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            s[i] = scores(static_cast<Eigen::Index>(i), 1);
            flag[i] = labels[i] == 1 ? 1 : 0;
            pos += static_cast<std::size_t>(flag[i]);
        }
        if (pos == 0 || pos == labels.size()) {
            spdlog::warn("AUC undefined: only one class present; reporting 0.5");
            return 0.5;
        }
        return auc_binary(s, flag);
    }
    return auc_macro_ovr(scores, labels);
}

double accuracy(const Matrix& scores, std::span<const int> labels) {
    if (static_cast<std::size_t>(scores.rows()) != labels.size()) {
        throw DimensionError(fmt::format("{} score rows but {} labels", scores.rows(), labels.size()));
    }
    if (labels.empty()) throw ParameterError("accuracy of an empty set");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        Eigen::Index best = 0;
        scores.row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
        if (best == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

Summary summarize(std::span<const double> values) {
    if (values.empty()) throw ParameterError("summary of an empty list");
    Summary s;
    const auto n = static_cast<double>(values.size());
    for (double v : values) s.mean += v;
    s.mean /= n;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / (n - 1.0));
        s.sem = s.std / std::sqrt(n);
    }
    return s;
}

}  // namespace mmgl::train
