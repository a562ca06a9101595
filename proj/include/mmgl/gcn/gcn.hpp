#pragma once

#include "mmgl/numcore/tape.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace mmgl::gcn {

struct GcnParams {
    Param w0{"gcn.W0", Matrix()};  // d x d_h
    Param w1{"gcn.W1", Matrix()};  // d_h x C

    static GcnParams init(std::size_t d, std::size_t d_h, std::size_t classes, std::uint64_t seed);
    std::vector<Param*> params() { return {&w0, &w1}; }
};

// True when `a` lacks a unit diagonal, i.e. when the propagation matrix
// should add I before normalizing.
bool needs_self_loops(const Matrix& a);

// D^{-1/2} (A [+ I]) D^{-1/2}.
Matrix normalize_adj(const Matrix& a, bool add_self_loops);
Var normalize_adj(Var a, bool add_self_loops);

struct ForwardOptions {
    double dropout = 0.0;
    std::mt19937_64* rng = nullptr;  // required when dropout > 0
};

// logits = A_n relu(A_n H W0) W1, with `h` N x d and `a_norm` N x N.
Var gcn_forward(Tape& tape, Var h, Var a_norm, GcnParams& params, bool trainable,
                const ForwardOptions& options = {});
Matrix gcn_forward(const Matrix& h, const Matrix& a_norm, const GcnParams& params);

// Row-wise softmax of logits.
Matrix class_probabilities(const Matrix& logits);

}  // namespace mmgl::gcn
