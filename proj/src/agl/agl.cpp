#include "mmgl/agl/agl.hpp"

#include "mmgl/error.hpp"
#include "mmgl/numcore/init.hpp"
#include "mmgl/numcore/ops.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mmgl::agl {

std::string_view to_string(Provenance p) {
    switch (p) {
        case Provenance::learned: return "learned";
        case Provenance::knn: return "knn";
        case Provenance::meta: return "meta";
        case Provenance::dense: return "dense";
    }
    return "unknown";
}

AglParams AglParams::init(std::size_t d, std::size_t d_a, std::uint64_t seed) {
    if (d < 1 || d_a < 1) throw ParameterError("W_A widths must be >= 1");
    std::mt19937_64 rng(seed);
    AglParams p;
    p.wa = Param("agl.W_A", glorot_uniform(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d_a), rng));
    return p;
}

Var cosine_similarity(Var z) {
    Var zn = num::row_normalize(z, kNormEps);
    return num::gram(zn);
}

namespace {

void log_degenerate(const Matrix& z) {
    const Eigen::VectorXd norms = z.rowwise().norm();
    const auto count = (norms.array() < kNormEps).count();
    if (count > 0) spdlog::debug("learned graph: {} node(s) with a vanishing embedding are isolated", count);
}

}  // namespace

Var learned_graph(Tape& tape, Var h, AglParams& params, bool trainable) {
    if (h.cols() != params.wa.value.rows()) {
        throw DimensionError(fmt::format("H is {} but W_A is {}", shape_str(h.value()),
                                         shape_str(params.wa.value)));
    }
    Var wa = trainable ? tape.param(params.wa) : tape.constant(params.wa.value);
    Var z = num::matmul(h, wa);
    log_degenerate(z.value());
    return num::set_diagonal(num::relu(cosine_similarity(z)), 1.0);
}

LearnedGraph learned_graph(const Matrix& h, const AglParams& params) {
    Tape tape;
    Var z = num::matmul(tape.constant(h), tape.constant(params.wa.value));
    log_degenerate(z.value());
    Var s = cosine_similarity(z);
    Var a = num::set_diagonal(num::relu(s), 1.0);
    return {a.value(), Provenance::learned, s.value()};
}

Var smoothness_loss(Var h, Var a) { return num::dirichlet_energy(h, a); }

Var connectivity_loss(Var a) { return num::log_degree_barrier(a, kDegreeEps); }

Var sparsity_reg(Var a) {
    if (a.rows() != a.cols()) {
        throw DimensionError(fmt::format("adjacency must be square, got {}", shape_str(a.value())));
    }
    return num::mean_square(a);
}

GraphLoss graph_loss(Var h, Var a, double alpha, double beta) {
    if (alpha < 0.0 || beta < 0.0) throw ParameterError("alpha and beta must be >= 0");
    GraphLoss g;
    g.smooth = smoothness_loss(h, a);
    g.con = connectivity_loss(a);
    g.r = sparsity_reg(a);
    const Var terms[] = {g.smooth, g.con, g.r};
    const double weights[] = {1.0, alpha, beta};
    g.total = num::combine(terms, weights);
    return g;
}

double smoothness_loss(const Matrix& h, const Matrix& a) {
    Tape t;
    return smoothness_loss(t.constant(h), t.constant(a)).scalar();
}

double connectivity_loss(const Matrix& a) {
    Tape t;
    return connectivity_loss(t.constant(a)).scalar();
}

double sparsity_reg(const Matrix& a) {
    Tape t;
    return sparsity_reg(t.constant(a)).scalar();
}

GraphLossValue graph_loss(const Matrix& h, const Matrix& a, double alpha, double beta) {
    Tape t;
    GraphLoss g = graph_loss(t.constant(h), t.constant(a), alpha, beta);
    return {g.smooth.scalar(), g.con.scalar(), g.r.scalar(), g.total.scalar()};
}

double mean_pairwise_distance(const Matrix& h) {
    const Eigen::Index n = h.rows();
    if (n < 2) throw ParameterError("pairwise distance needs at least two nodes");
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) total += (h.row(i) - h.row(j)).norm();
    }
    return total / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

LearnedGraph knn_graph_rbf(const Matrix& h, std::size_t k, double sigma) {
    const Eigen::Index n = h.rows();
    if (k < 1 || static_cast<Eigen::Index>(k) >= n) {
        throw ParameterError(fmt::format("kNN needs 1 <= k < N, got k = {} with N = {}", k, n));
    }
    if (!(sigma > 0.0)) throw ParameterError(fmt::format("RBF width must be > 0, got {}", sigma));
    Matrix w(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double d2 = (h.row(i) - h.row(j)).squaredNorm();
            w(i, j) = std::exp(-d2 / (2.0 * sigma * sigma));
        }
    }
    Matrix keep = Matrix::Zero(n, n);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n - 1));
    for (Eigen::Index i = 0; i < n; ++i) {
        order.clear();
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j != i) order.push_back(j);
        }
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                          [&](Eigen::Index a, Eigen::Index b) {
                              return w(i, a) > w(i, b) || (w(i, a) == w(i, b) && a < b);
                          });
        for (std::size_t r = 0; r < k; ++r) keep(i, order[r]) = w(i, order[r]);
    }
    LearnedGraph g;
    g.provenance = Provenance::knn;
    g.a = keep.cwiseMax(keep.transpose());
    g.a.diagonal().setOnes();
    return g;
}

LearnedGraph meta_graph(const data::MetaMatrix& meta, std::size_t threshold) {
    const Eigen::Index n = meta.rows();
    const Eigen::Index cols = meta.cols();
    if (cols < 1) throw ParameterError("meta graph needs at least one meta column");
    if (threshold > static_cast<std::size_t>(cols)) {
        throw ParameterError(fmt::format("meta threshold {} exceeds the {} meta columns", threshold, cols));
    }
    LearnedGraph g;
    g.provenance = Provenance::meta;
    g.a = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            std::size_t agree = 0;
            for (Eigen::Index c = 0; c < cols; ++c) {
                if (meta(i, c) >= 0 && meta(i, c) == meta(j, c)) ++agree;
            }
            if (agree >= threshold) {
                g.a(i, j) = g.a(j, i) = static_cast<double>(agree) / static_cast<double>(cols);
            }
        }
        g.a(i, i) = 1.0;
    }
    return g;
}

void check_graph(const Matrix& a, double tol) {
    if (a.rows() != a.cols()) throw DimensionError("adjacency must be square, got " + shape_str(a));
    if (!all_finite(a)) throw NumericalError("adjacency has non-finite entries");
    if ((a - a.transpose()).cwiseAbs().maxCoeff() >= tol) throw NumericalError("adjacency is not symmetric");
    if (a.minCoeff() < 0.0) throw NumericalError("adjacency has negative entries");
}

}  // namespace mmgl::agl
