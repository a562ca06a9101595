#pragma once

#include "mmgl/numcore/matrix.hpp"

#include <cstdint>
#include <span>
#include <unordered_map>

namespace mmgl {

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Moment estimates for a set of Params, created lazily on first update.
class AdamState {
public:
    explicit AdamState(AdamOptions options = {}) : options_(options) {}

    const AdamOptions& options() const { return options_; }
    std::uint64_t step_count() const { return steps_; }

    // Moments of `p`, or nullptr if it has never been stepped.
    const Matrix* first_moment(const Param& p) const;
    const Matrix* second_moment(const Param& p) const;

private:
    struct Moments {
        Matrix m;
        Matrix v;
    };

    friend void adam_step(AdamState&, std::span<Param* const>, double);

    AdamOptions options_;
    std::uint64_t steps_ = 0;
    std::unordered_map<const Param*, Moments> moments_;
};

// One bias-corrected Adam update of every Param from its accumulated grad.
void adam_step(AdamState& state, std::span<Param* const> params, double lr);

void zero_grads(std::span<Param* const> params);

}  // namespace mmgl
