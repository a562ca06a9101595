#include "mmgl/data/split.hpp"

#include "mmgl/error.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <map>
#include <random>

namespace mmgl::data {

SplitPlan stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
    const std::size_t n = labels.size();
    if (k < 2) throw ParameterError(fmt::format("need at least 2 folds, got {}", k));
    if (k > n) throw ParameterError(fmt::format("{} folds requested for {} samples", k, n));

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);

    std::mt19937_64 rng(seed);
    std::vector<std::vector<std::size_t>> tests(k);
    std::size_t cursor = 0;
    for (auto& [cls, members] : by_class) {
        if (members.size() < k) {
            spdlog::warn("class {} has {} members for {} folds; stratification is best-effort",
                         cls, members.size(), k);
        }
        std::shuffle(members.begin(), members.end(), rng);
        for (std::size_t idx : members) {
            tests[cursor % k].push_back(idx);
            ++cursor;
        }
    }

    SplitPlan plan;
    plan.seed = seed;
    plan.folds.resize(k);
    std::vector<char> in_test(n);
    for (std::size_t f = 0; f < k; ++f) {
        Fold& fold = plan.folds[f];
        fold.test = std::move(tests[f]);
        std::sort(fold.test.begin(), fold.test.end());
        std::fill(in_test.begin(), in_test.end(), 0);
        for (std::size_t i : fold.test) in_test[i] = 1;
        for (std::size_t i = 0; i < n; ++i) {
            if (!in_test[i]) fold.train.push_back(i);
        }
    }
    return plan;
}

}  // namespace mmgl::data
