#include "mmgl/gcn/gcn.hpp"

#include "mmgl/error.hpp"
#include "mmgl/numcore/init.hpp"
#include "mmgl/numcore/ops.hpp"

#include <fmt/format.h>

namespace mmgl::gcn {

GcnParams GcnParams::init(std::size_t d, std::size_t d_h, std::size_t classes, std::uint64_t seed) {
    if (d < 1 || d_h < 1 || classes < 1) throw ParameterError("GCN widths must be >= 1");
    std::mt19937_64 rng(seed);
    GcnParams p;
    p.w0 = Param("gcn.W0", glorot_uniform(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d_h), rng));
    p.w1 = Param("gcn.W1", glorot_uniform(static_cast<Eigen::Index>(d_h), static_cast<Eigen::Index>(classes), rng));
    return p;
}

bool needs_self_loops(const Matrix& a) { return !(a.diagonal().array() == 1.0).all(); }

Matrix normalize_adj(const Matrix& a, bool add_self_loops) {
    Tape t;
    return normalize_adj(t.constant(a), add_self_loops).value();
}

Var normalize_adj(Var a, bool add_self_loops) { return num::normalize_adjacency(a, add_self_loops); }

Var gcn_forward(Tape& tape, Var h, Var a_norm, GcnParams& params, bool trainable,
                const ForwardOptions& options) {
    if (a_norm.rows() != a_norm.cols() || a_norm.rows() != h.rows()) {
        throw DimensionError(fmt::format("propagation matrix {} does not match {} node features",
                                         shape_str(a_norm.value()), shape_str(h.value())));
    }
    if (options.dropout > 0.0 && options.rng == nullptr) {
        throw UsageError("dropout needs a random generator");
    }
    auto bind = [&](Param& p) { return trainable ? tape.param(p) : tape.constant(p.value); };
    auto drop = [&](Var v) { return options.dropout > 0.0 ? num::dropout(v, options.dropout, *options.rng) : v; };
    Var hidden = num::relu(num::matmul(a_norm, num::matmul(drop(h), bind(params.w0))));
    return num::matmul(a_norm, num::matmul(drop(hidden), bind(params.w1)));
}

Matrix gcn_forward(const Matrix& h, const Matrix& a_norm, const GcnParams& params) {
    Tape t;
    return gcn_forward(t, t.constant(h), t.constant(a_norm), const_cast<GcnParams&>(params), false).value();
}

Matrix class_probabilities(const Matrix& logits) { return num::softmax_rows_value(logits, 1.0); }

}  // namespace mmgl::gcn
