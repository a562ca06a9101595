#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mmgl::data {

struct Fold {
    std::vector<std::size_t> train;  // ascending
    std::vector<std::size_t> test;   // ascending
};

// K disjoint test sets partitioning [0, N), each paired with its complement.
struct SplitPlan {
    std::vector<Fold> folds;
    std::uint64_t seed = 0;
};

// Per class, members are shuffled and dealt round-robin over the folds, so
// every fold receives floor or ceil of n_c / K members of class c. Classes
// with fewer than K members are still dealt (with a warning); some folds then
// miss that class.
SplitPlan stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed);

}  // namespace mmgl::data
