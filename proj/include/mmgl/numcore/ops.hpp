#pragma once

#include "mmgl/numcore/tape.hpp"

#include <cstddef>
#include <random>
#include <span>
#include <vector>

// Differentiable primitives on a Tape. Every op validates shapes up front
// and throws DimensionError / ParameterError before recording anything.
namespace mmgl::num {

Var matmul(Var a, Var b);
// a * b^T
Var matmul_nt(Var a, Var b);
// a * a^T, exactly symmetric (upper triangle mirrored).
Var gram(Var a);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double c);
// Sum of all entries as a 1x1 node.
Var sum(Var a);
// Weighted sum of 1x1 nodes.
Var combine(std::span<const Var> terms, std::span<const double> weights);

// max(0, x); the subgradient at 0 is 0.
Var relu(Var a);

// out[i][j] = exp(s[i][j]/tau) / sum_i exp(s[i][j]/tau)
Var softmax_columns(Var s, double tau);
// Row-wise counterpart: every row sums to one.
Var softmax_rows(Var s, double tau);

// Per-row inner product of two equally shaped matrices, N x 1.
Var row_dot(Var a, Var b);
// y[i][j] = c[i] * x[i][j] for a column c (N x 1).
Var scale_rows(Var c, Var x);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index width);

// Rows divided by max(||row||, eps).
Var row_normalize(Var a, double eps);
// Copy of a square matrix with a constant diagonal (no gradient there).
Var set_diagonal(Var a, double value);

// D^{-1/2} (A [+ I]) D^{-1/2} with D the row sums of A [+ I].
Var normalize_adjacency(Var a, bool add_self_loops);

// Inverted dropout. p == 0 returns `a` unchanged.
Var dropout(Var a, double p, std::mt19937_64& rng);

// Mean over masked rows of -log softmax(logits)[label].
Var cross_entropy_masked(Var logits, std::span<const int> labels,
                         std::span<const std::size_t> mask);

// (1 / (2 N^2)) sum_ij A_ij ||h_i - h_j||^2 with h_i the rows of `h`.
Var dirichlet_energy(Var h, Var a);
// -(1/N) sum_i log(sum_j A_ij + eps)
Var log_degree_barrier(Var a, double eps);
// sum a_ij^2 / (rows * cols)
Var mean_square(Var a);

// Non-differentiable helpers shared by the value-only code paths.
Matrix softmax_rows_value(const Matrix& s, double tau);
Matrix softmax_columns_value(const Matrix& s, double tau);

}  // namespace mmgl::num
