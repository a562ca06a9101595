#pragma once

#include "mmgl/numcore/tape.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

namespace mmgl {

// Builds a scalar loss on a fresh tape. Params must be bound with
// tape.param() so their gradients flow back.
using LossBuilder = std::function<Var(Tape&)>;

struct GradCheckOptions {
    double h = 1e-5;
    // Coordinates probed per Param; larger Params are sampled.
    std::size_t max_coords_per_param = 48;
    std::uint64_t seed = 0x5eed;
    // Relative error is |a - n| / max(|a|, |n|, floor).
    double floor = 1e-6;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_grad = 0.0;
    std::size_t coords_checked = 0;
};

// Compares reverse-mode gradients with central differences.
GradCheckReport grad_check_report(const LossBuilder& build, std::span<Param* const> params,
                                  const GradCheckOptions& options = {});

// Worst relative error over the probed coordinates.
double grad_check(const LossBuilder& build, std::span<Param* const> params, double h = 1e-5);

}  // namespace mmgl
