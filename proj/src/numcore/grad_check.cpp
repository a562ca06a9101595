#include "mmgl/numcore/grad_check.hpp"

#include "mmgl/error.hpp"
#include "mmgl/numcore/adam.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace mmgl {

namespace {

double evaluate(const LossBuilder& build) {
    Tape tape;
    return build(tape).scalar();
}

}  // namespace

GradCheckReport grad_check_report(const LossBuilder& build, std::span<Param* const> params,
                                  const GradCheckOptions& options) {
    if (!(options.h > 0.0)) {
        throw ParameterError(fmt::format("finite-difference step must be > 0, got {}", options.h));
    }
    zero_grads(params);
    {
        Tape tape;
        Var loss = build(tape);
        tape.backward(loss);
    }
    std::vector<Matrix> analytic;
    analytic.reserve(params.size());
    for (Param* p : params) analytic.push_back(p->grad);

    std::mt19937_64 rng(options.seed);
    GradCheckReport report;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Param& p = *params[k];
        const auto n = static_cast<std::size_t>(p.value.size());
        std::vector<std::size_t> coords(n);
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (n > options.max_coords_per_param) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(options.max_coords_per_param);
        }
        for (std::size_t c : coords) {
            double& x = p.value.data()[c];
            const double saved = x;
            x = saved + options.h;
            const double up = evaluate(build);
            x = saved - options.h;
            const double down = evaluate(build);
            x = saved;
            const double numeric = (up - down) / (2.0 * options.h);
            const double a = analytic[k].data()[c];
            const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
            report.max_rel_error = std::max(report.max_rel_error, std::abs(a - numeric) / denom);
            report.max_abs_grad = std::max(report.max_abs_grad, std::abs(a));
            ++report.coords_checked;
        }
    }
    return report;
}

double grad_check(const LossBuilder& build, std::span<Param* const> params, double h) {
    GradCheckOptions o;
    o.h = h;
    return grad_check_report(build, params, o).max_rel_error;
}

}  // namespace mmgl
