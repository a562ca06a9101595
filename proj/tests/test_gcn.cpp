#include <doctest.h>

#include "mmgl/error.hpp"
#include "mmgl/gcn/gcn.hpp"
#include "mmgl/numcore/grad_check.hpp"
#include "mmgl/numcore/ops.hpp"

#include "test_util.hpp"

#include <cmath>
#include <numeric>
#include <random>

using namespace mmgl;
using namespace mmgl::gcn;
using mmgl::test::random_matrix;

namespace {

Matrix random_graph(Eigen::Index n, std::uint64_t seed, double density) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix a = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            if (u(rng) < density) a(i, j) = a(j, i) = u(rng);
    return a;
}

double power_iteration_radius(const Matrix& m) {
    Eigen::VectorXd v = Eigen::VectorXd::Ones(m.rows());
    double lambda = 0.0;
    for (int it = 0; it < 2000; ++it) {
        Eigen::VectorXd w = m * v;
        lambda = w.norm() / v.norm();
        v = w / w.norm();
    }
    return lambda;
}

}  // namespace

TEST_CASE("normalize_adj examples") {
    CHECK(normalize_adj(Matrix::Zero(1, 1), true)(0, 0) == 1.0);
    Matrix ones = Matrix::Ones(2, 2);
    CHECK((normalize_adj(ones, false).array() - 0.5).abs().maxCoeff() < 1e-15);
    CHECK(needs_self_loops(Matrix::Zero(3, 3)));
    CHECK_FALSE(needs_self_loops(Matrix::Identity(3, 3)));
}

TEST_CASE("normalize_adj on regular graphs has unit row sums") {
    // Cycles with self-loops added are 3-regular.
    for (Eigen::Index n = 3; n < 12; ++n) {
        Matrix a = Matrix::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i) a(i, (i + 1) % n) = a((i + 1) % n, i) = 1.0;
        Matrix an = normalize_adj(a, true);
        CHECK((an.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("normalize_adj is symmetric with spectral radius at most one") {
    for (std::uint64_t s = 0; s < 30; ++s) {
        const Eigen::Index n = 2 + static_cast<Eigen::Index>(s % 15);
        Matrix a = random_graph(n, s, 0.4);
        for (bool loops : {true, false}) {
            Matrix base = loops ? a : Matrix(a + Matrix::Identity(n, n));
            Matrix an = normalize_adj(base, loops);
            CHECK((an - an.transpose()).cwiseAbs().maxCoeff() < 1e-15);
            CHECK(power_iteration_radius(an) <= 1.0 + 1e-6);
        }
    }
}

TEST_CASE("gcn_forward") {
    GcnParams p = GcnParams::init(5, 4, 3, 1);
    SUBCASE("identity propagation is a per-node MLP") {
        Matrix h = random_matrix(6, 5, 2);
        Matrix logits = gcn_forward(h, Matrix::Identity(6, 6), p);
        Matrix mlp = (h * p.w0.value).cwiseMax(0.0) * p.w1.value;
        CHECK((logits - mlp).cwiseAbs().maxCoeff() < 1e-14);
    }
    SUBCASE("four-node straight-line computation") {
        Matrix h = random_matrix(4, 5, 3);
        Matrix a = random_graph(4, 4, 1.0);
        Matrix an = normalize_adj(a, true);
        Matrix logits = gcn_forward(h, an, p);
        // Scalar loops, independent of the library's matrix products.
        Matrix hw(4, 4), hidden(4, 4), hw1(4, 3), expected(4, 3);
        for (int i = 0; i < 4; ++i)
            for (int c = 0; c < 4; ++c) {
                double s = 0.0;
                for (int f = 0; f < 5; ++f) s += h(i, f) * p.w0.value(f, c);
                hw(i, c) = s;
            }
        for (int i = 0; i < 4; ++i)
            for (int c = 0; c < 4; ++c) {
                double s = 0.0;
                for (int j = 0; j < 4; ++j) s += an(i, j) * hw(j, c);
                hidden(i, c) = s > 0.0 ? s : 0.0;
            }
        for (int i = 0; i < 4; ++i)
            for (int c = 0; c < 3; ++c) {
                double s = 0.0;
                for (int f = 0; f < 4; ++f) s += hidden(i, f) * p.w1.value(f, c);
                hw1(i, c) = s;
            }
        for (int i = 0; i < 4; ++i)
            for (int c = 0; c < 3; ++c) {
                double s = 0.0;
                for (int j = 0; j < 4; ++j) s += an(i, j) * hw1(j, c);
                expected(i, c) = s;
            }
        CHECK((logits - expected).cwiseAbs().maxCoeff() < 1e-13);
    }
    SUBCASE("duplicate nodes get identical logits") {
        Matrix h = random_matrix(5, 5, 5);
        h.row(4) = h.row(1);
        Matrix a = random_graph(5, 6, 1.0);
        a.row(4) = a.row(1);
        a.col(4) = a.col(1);
        a(4, 4) = a(1, 1) = 0.0;
        a(1, 4) = a(4, 1) = 0.7;
        Matrix logits = gcn_forward(h, normalize_adj(a, true), p);
        CHECK((logits.row(1) - logits.row(4)).cwiseAbs().maxCoeff() < 1e-14);
    }
    SUBCASE("permutation equivariance") {
        Matrix h = random_matrix(7, 5, 7);
        Matrix an = normalize_adj(random_graph(7, 8, 0.5), true);
        std::vector<Eigen::Index> perm(7);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), std::mt19937_64(9));
        Matrix hp(7, 5), ap(7, 7);
        for (Eigen::Index i = 0; i < 7; ++i) {
            hp.row(i) = h.row(perm[static_cast<std::size_t>(i)]);
            for (Eigen::Index j = 0; j < 7; ++j) ap(i, j) = an(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
        }
        Matrix l = gcn_forward(h, an, p);
        Matrix lp = gcn_forward(hp, ap, p);
        for (Eigen::Index i = 0; i < 7; ++i) {
            CHECK((lp.row(i) - l.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff() < 1e-13);
        }
    }
    SUBCASE("gradient through the propagation matrix and weights") {
        Matrix h = random_matrix(6, 5, 10);
        Param a("A", random_graph(6, 11, 0.6));
        std::vector<int> labels = {0, 1, 2, 0, 1, 2};
        std::vector<std::size_t> mask = {0, 2, 3, 5};
        std::vector<Param*> ps = {&p.w0, &p.w1, &a};
        auto build = [&](Tape& t) {
            Var an = normalize_adj(t.param(a), true);
            return num::cross_entropy_masked(gcn_forward(t, t.constant(h), an, p, true), labels, mask);
        };
        CHECK(grad_check(build, ps) < 1e-6);
    }
    SUBCASE("shape errors") {
        CHECK_THROWS_AS(gcn_forward(random_matrix(3, 5, 1), Matrix::Identity(4, 4), p), DimensionError);
        CHECK_THROWS_AS(gcn_forward(random_matrix(3, 4, 1), Matrix::Identity(3, 3), p), DimensionError);
    }
}
