#include "mmgl/numcore/adam.hpp"

#include "mmgl/error.hpp"

#include <fmt/format.h>

#include <cmath>

namespace mmgl {

const Matrix* AdamState::first_moment(const Param& p) const {
    auto it = moments_.find(&p);
    return it == moments_.end() ? nullptr : &it->second.m;
}

const Matrix* AdamState::second_moment(const Param& p) const {
    auto it = moments_.find(&p);
    return it == moments_.end() ? nullptr : &it->second.v;
}

void adam_step(AdamState& state, std::span<Param* const> params, double lr) {
    if (!(lr > 0.0)) {
        throw ParameterError(fmt::format("learning rate must be > 0, got {}", lr));
    }
    const AdamOptions& o = state.options_;
    ++state.steps_;
    const double t = static_cast<double>(state.steps_);
    const double corr1 = 1.0 - std::pow(o.beta1, t);
    const double corr2 = 1.0 - std::pow(o.beta2, t);

    for (Param* p : params) {
        if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) {
            throw DimensionError(fmt::format("param '{}': grad {} vs value {}", p->name,
                                             shape_str(p->grad), shape_str(p->value)));
        }
        auto [it, inserted] = state.moments_.try_emplace(p);
        AdamState::Moments& mom = it->second;
        if (inserted) {
            mom.m = Matrix::Zero(p->value.rows(), p->value.cols());
            mom.v = Matrix::Zero(p->value.rows(), p->value.cols());
        } else if (mom.m.rows() != p->value.rows() || mom.m.cols() != p->value.cols()) {
            throw DimensionError(fmt::format("param '{}' changed shape between Adam steps",
                                             p->name));
        }
        mom.m = o.beta1 * mom.m + (1.0 - o.beta1) * p->grad;
        mom.v = o.beta2 * mom.v + (1.0 - o.beta2) * p->grad.cwiseProduct(p->grad);
        p->value.array() -=
            lr * (mom.m.array() / corr1) / ((mom.v.array() / corr2).sqrt() + o.eps);
    }
}

void zero_grads(std::span<Param* const> params) {
    for (Param* p : params) p->zero_grad();
}

}  // namespace mmgl
