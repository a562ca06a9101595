#pragma once

#include "mmgl/data/dataset.hpp"
#include "mmgl/numcore/tape.hpp"

#include <cstdint>
#include <string_view>
#include <vector>

namespace mmgl::agl {

// Lower bound on ||z_i|| in the cosine denominator.
inline constexpr double kNormEps = 1e-12;
// Added to each degree inside the connectivity log barrier.
inline constexpr double kDegreeEps = 1e-8;

enum class Provenance { learned, knn, meta, dense };
std::string_view to_string(Provenance p);

struct AglParams {
    Param wa{"agl.W_A", Matrix()};  // d x d_a

    static AglParams init(std::size_t d, std::size_t d_a, std::uint64_t seed);
    std::vector<Param*> params() { return {&wa}; }
};

struct LearnedGraph {
    Matrix a;
    Provenance provenance = Provenance::learned;
    // Cosine similarities before the ReLU (learned graphs only).
    Matrix pre_relu;
};

// A = relu(cos(W_A^T h_i, W_A^T h_j)) with unit diagonal. `h` is N x d.
LearnedGraph learned_graph(const Matrix& h, const AglParams& params);
Var learned_graph(Tape& tape, Var h, AglParams& params, bool trainable);

// Cosine similarity matrix of the rows of z, zero rows giving 0.
Var cosine_similarity(Var z);

Var smoothness_loss(Var h, Var a);
Var connectivity_loss(Var a);
Var sparsity_reg(Var a);

struct GraphLoss {
    Var smooth, con, r, total;
};
GraphLoss graph_loss(Var h, Var a, double alpha, double beta);

struct GraphLossValue {
    double smooth = 0.0, con = 0.0, r = 0.0, total = 0.0;
};
double smoothness_loss(const Matrix& h, const Matrix& a);
double connectivity_loss(const Matrix& a);
double sparsity_reg(const Matrix& a);
GraphLossValue graph_loss(const Matrix& h, const Matrix& a, double alpha, double beta);

// Mean Euclidean distance over distinct row pairs; the automatic RBF width.
double mean_pairwise_distance(const Matrix& h);

// RBF weights, top-k neighbors per node, symmetrized by max, unit diagonal.
LearnedGraph knn_graph_rbf(const Matrix& h, std::size_t k, double sigma);

// Fraction of meta columns two patients agree on, kept when at least
// `threshold` columns agree. Missing codes (-1) never agree.
LearnedGraph meta_graph(const data::MetaMatrix& meta, std::size_t threshold);

// Throws NumericalError / DataError if `a` is not symmetric and non-negative.
void check_graph(const Matrix& a, double tol = 1e-12);

}  // namespace mmgl::agl
