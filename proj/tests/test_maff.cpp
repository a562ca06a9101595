#include <doctest.h>

#include "mmgl/error.hpp"
#include "mmgl/maff/maff.hpp"
#include "mmgl/numcore/grad_check.hpp"
#include "mmgl/numcore/ops.hpp"

#include "test_util.hpp"

#include <cmath>
#include <numeric>
#include <random>

using namespace mmgl;
using namespace mmgl::maff;
using mmgl::test::random_matrix;

namespace {

data::ModalitySchema schema3() { return data::ModalitySchema({{"a", 4}, {"b", 3}, {"c", 5}}); }

Eigen::VectorXd random_vec(Eigen::Index n, std::uint64_t seed) {
    Matrix m = random_matrix(n, 1, seed);
    return Eigen::Map<Eigen::VectorXd>(m.data(), n);
}

// Scalar-loop fusion of one patient with a single head, column-normalized.
Eigen::VectorXd straight_line_fuse(const Eigen::VectorXd& x, const MaffParams& p) {
    const std::size_t mc = p.num_modalities();
    const std::size_t df = p.d_f();
    std::vector<std::vector<double>> q(mc, std::vector<double>(df, 0.0)), k = q, v = q;
    std::size_t off = 0;
    for (std::size_t m = 0; m < mc; ++m) {
        const Matrix& wq = p.modalities[m].wq.value;
        const Matrix& wk = p.modalities[m].wk.value;
        const Matrix& wv = p.modalities[m].wv.value;
        for (std::size_t f = 0; f < df; ++f) {
            for (Eigen::Index r = 0; r < wq.rows(); ++r) {
                const double xr = x(static_cast<Eigen::Index>(off) + r);
                q[m][f] += wq(r, static_cast<Eigen::Index>(f)) * xr;
                k[m][f] += wk(r, static_cast<Eigen::Index>(f)) * xr;
                v[m][f] += wv(r, static_cast<Eigen::Index>(f)) * xr;
            }
        }
        off += static_cast<std::size_t>(wq.rows());
    }
    const double tau = std::sqrt(static_cast<double>(df));
    std::vector<std::vector<double>> pmat(mc, std::vector<double>(mc));
    for (std::size_t j = 0; j < mc; ++j) {
        double denom = 0.0;
        std::vector<double> e(mc);
        for (std::size_t i = 0; i < mc; ++i) {
            double s = 0.0;
            for (std::size_t f = 0; f < df; ++f) s += q[i][f] * k[j][f];
            e[i] = std::exp(s / tau);
            denom += e[i];
        }
        for (std::size_t i = 0; i < mc; ++i) pmat[i][j] = e[i] / denom;
    }
    std::vector<double> cat;
    for (std::size_t m = 0; m < mc; ++m) {
        std::vector<double> mixed = v[m];
        for (std::size_t j = 0; j < mc; ++j) {
            for (std::size_t f = 0; f < df; ++f) mixed[f] += pmat[m][j] * v[j][f];
        }
        const Matrix& wm = p.modalities[m].wm.value;
        for (std::size_t c = 0; c < df; ++c) {
            double s = 0.0;
            for (std::size_t f = 0; f < df; ++f) s += wm(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(c)) * mixed[f];
            cat.push_back(s);
        }
    }
    Eigen::VectorXd h = Eigen::VectorXd::Zero(p.wh.value.cols());
    for (Eigen::Index c = 0; c < h.size(); ++c) {
        for (std::size_t r = 0; r < cat.size(); ++r) h(c) += p.wh.value(static_cast<Eigen::Index>(r), c) * cat[r];
    }
    return h;
}

MaffParams make_params(std::size_t d_f, std::size_t heads, std::uint64_t seed,
                       AttentionAxis axis = AttentionAxis::column, std::size_t d = 6) {
    MaffConfig cfg;
    cfg.d_f = d_f;
    cfg.d = d;
    cfg.heads = heads;
    cfg.axis = axis;
    return MaffParams::init(schema3(), cfg, seed);
}

}  // namespace

TEST_CASE("project") {
    MaffParams p = make_params(4, 2, 1);
    SUBCASE("zero input gives zero projections") {
        Projection pr = project(Eigen::VectorXd::Zero(12), p);
        for (std::size_t m = 0; m < 3; ++m) {
            CHECK(pr.q[m].isZero(0.0));
            CHECK(pr.k[m].isZero(0.0));
            CHECK(pr.v[m].isZero(0.0));
        }
    }
    SUBCASE("identity weights return the input") {
        data::ModalitySchema s({{"a", 3}, {"b", 3}});
        MaffConfig cfg;
        cfg.d_f = 3;
        cfg.heads = 1;
        MaffParams ip = MaffParams::init(s, cfg, 2);
        for (auto& w : ip.modalities) w.wq.value = w.wk.value = w.wv.value = Matrix::Identity(3, 3);
        Eigen::VectorXd x = random_vec(6, 3);
        Projection pr = project(x, ip);
        CHECK(pr.q[1] == x.tail(3));
        CHECK(pr.v[0] == x.head(3));
    }
    SUBCASE("matches per-modality matrix-vector products") {
        Eigen::VectorXd x = random_vec(12, 4);
        Projection pr = project(x, p);
        const Eigen::Index offs[] = {0, 4, 7};
        for (std::size_t m = 0; m < 3; ++m) {
            const Matrix& w = p.modalities[m].wk.value;
            for (Eigen::Index f = 0; f < 4; ++f) {
                double s = 0.0;
                for (Eigen::Index r = 0; r < w.rows(); ++r) s += w(r, f) * x(offs[m] + r);
                CHECK(pr.k[m](f) == doctest::Approx(s).epsilon(1e-13));
            }
        }
    }
    SUBCASE("wrong width") { CHECK_THROWS_AS(project(Eigen::VectorXd::Zero(11), p), DimensionError); }
}

TEST_CASE("attention_map") {
    SUBCASE("equal queries and keys give uniform attention") {
        std::vector<Eigen::VectorXd> q(4, random_vec(3, 5));
        Matrix p = attention_map(q, q, 1.7);
        CHECK((p.array() - 0.25).abs().maxCoeff() < 1e-15);
    }
    SUBCASE("hand softmax") {
        Eigen::VectorXd q0(2), q1(2), k0(2), k1(2);
        q0 << std::log(2.0), 0.0;
        q1 << 0.0, 1.0;
        k0 << 1.0, 0.0;
        k1 << 0.0, 0.0;
        Matrix p = attention_map({q0, q1}, {k0, k1}, 1.0);
        CHECK(p(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
        CHECK(p(1, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
        CHECK(p(0, 1) == doctest::Approx(0.5).epsilon(1e-14));
    }
    SUBCASE("columns sum to one; row mode rows sum to one") {
        for (std::uint64_t s = 0; s < 20; ++s) {
            std::vector<Eigen::VectorXd> q, k;
            for (int m = 0; m < 5; ++m) {
                q.push_back(random_vec(4, 100 + s * 10 + m) * 3.0);
                k.push_back(random_vec(4, 200 + s * 10 + m) * 3.0);
            }
            Matrix pc = attention_map(q, k, 0.7);
            Matrix pr = attention_map(q, k, 0.7, AttentionAxis::row);
            CHECK((pc.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
            CHECK((pr.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
            CHECK(pc.minCoeff() >= 0.0);
            CHECK(pc.maxCoeff() <= 1.0);
        }
    }
    SUBCASE("shifting one column's scores leaves it unchanged") {
        // Appending a 1 to every query and c_j to key j adds c_j to column j
        // of S. Dyadic values keep every score exact.
        std::mt19937_64 rng(9);
        std::uniform_int_distribution<int> eighths(-16, 16);
        std::uniform_int_distribution<int> shift(-6, 6);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<Eigen::VectorXd> q, k, q2, k2;
            for (int m = 0; m < 4; ++m) {
                Eigen::VectorXd a(3), b(3);
                for (int f = 0; f < 3; ++f) {
                    a(f) = eighths(rng) / 8.0;
                    b(f) = eighths(rng) / 8.0;
                }
                q.push_back(a);
                k.push_back(b);
                Eigen::VectorXd a2(4), b2(4);
                a2 << a, 1.0;
                b2 << b, static_cast<double>(shift(rng));
                q2.push_back(a2);
                k2.push_back(b2);
            }
            CHECK(attention_map(q, k, 1.0) == attention_map(q2, k2, 1.0));
        }
    }
    SUBCASE("tau must be positive") {
        std::vector<Eigen::VectorXd> q(2, Eigen::VectorXd::Ones(2));
        CHECK_THROWS_AS(attention_map(q, q, 0.0), ParameterError);
    }
}

TEST_CASE("fuse_one") {
    SUBCASE("zero input gives zero output") {
        MaffParams p = make_params(8, 4, 3);
        FuseOneResult r = fuse_one(Eigen::VectorXd::Zero(12), p);
        CHECK(r.h.isZero(0.0));
        CHECK(r.head_maps.size() == 4);
    }
    SUBCASE("one modality doubles v through the residual") {
        data::ModalitySchema s({{"only", 5}});
        for (std::size_t heads : {std::size_t{1}, std::size_t{2}}) {
            MaffConfig cfg;
            cfg.d_f = 4;
            cfg.d = 3;
            cfg.heads = heads;
            MaffParams p = MaffParams::init(s, cfg, 7);
            Eigen::VectorXd x = random_vec(5, 8);
            FuseOneResult r = fuse_one(x, p);
            Eigen::VectorXd v = p.modalities[0].wv.value.transpose() * x;
            Eigen::VectorXd expected = p.wh.value.transpose() * (p.modalities[0].wm.value.transpose() * (2.0 * v));
            CHECK((r.h - expected).cwiseAbs().maxCoeff() < 1e-13);
            CHECK(r.map()(0, 0) == 1.0);
        }
    }
    SUBCASE("matches a straight-line recomputation") {
        for (std::uint64_t s = 0; s < 10; ++s) {
            MaffParams p = make_params(5, 1, 30 + s);
            Eigen::VectorXd x = random_vec(12, 40 + s) * 2.0;
            FuseOneResult r = fuse_one(x, p);
            Eigen::VectorXd oracle = straight_line_fuse(x, p);
            CHECK((r.h - oracle).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("fuse_batch") {
    const Matrix x = random_matrix(9, 12, 11, -2.0, 2.0);
    for (AttentionAxis axis : {AttentionAxis::column, AttentionAxis::row}) {
        CAPTURE(to_string(axis));
        MaffParams p = make_params(8, 4, 12, axis);
        FuseBatchValue fb = fuse_batch(x, p);
        REQUIRE(fb.h.rows() == 9);
        REQUIRE(fb.h.cols() == 6);

        SUBCASE("each row equals fuse_one of that patient") {
            for (Eigen::Index n = 0; n < 9; ++n) {
                FuseOneResult r = fuse_one(x.row(n).transpose(), p);
                CHECK((fb.h.row(n).transpose() - r.h).cwiseAbs().maxCoeff() < 1e-12);
                for (std::size_t h = 0; h < 4; ++h) {
                    CHECK((fb.maps.at(static_cast<std::size_t>(n), h) - r.head_maps[h]).cwiseAbs().maxCoeff() < 1e-14);
                }
            }
        }
        SUBCASE("batch of one equals fuse_one") {
            FuseBatchValue one = fuse_batch(Matrix(x.row(4)), p);
            CHECK((one.h.row(0).transpose() - fuse_one(x.row(4).transpose(), p).h).cwiseAbs().maxCoeff() < 1e-12);
        }
        SUBCASE("permuting patients permutes the output") {
            std::vector<Eigen::Index> perm(9);
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), std::mt19937_64(5));
            Matrix xp(9, 12);
            for (Eigen::Index n = 0; n < 9; ++n) xp.row(n) = x.row(perm[static_cast<std::size_t>(n)]);
            FuseBatchValue fp = fuse_batch(xp, p);
            for (Eigen::Index n = 0; n < 9; ++n) {
                CHECK((fp.h.row(n) - fb.h.row(perm[static_cast<std::size_t>(n)])).cwiseAbs().maxCoeff() < 1e-13);
            }
        }
        SUBCASE("maps are stochastic along the normalized axis") {
            for (std::size_t n = 0; n < 9; ++n) {
                for (std::size_t h = 0; h < 4; ++h) {
                    Matrix pm = fb.maps.at(n, h);
                    Eigen::VectorXd sums = axis == AttentionAxis::column ? Eigen::VectorXd(pm.colwise().sum().transpose())
                                                                         : Eigen::VectorXd(pm.rowwise().sum());
                    CHECK((sums.array() - 1.0).abs().maxCoeff() < 1e-12);
                }
            }
        }
    }
    SUBCASE("gradients pass the finite-difference check") {
        for (AttentionAxis axis : {AttentionAxis::column, AttentionAxis::row}) {
            MaffParams p = make_params(4, 2, 13, axis, 3);
            const Matrix r = random_matrix(9, 3, 14);
            auto build = [&](Tape& t) {
                FuseBatch f = fuse_batch(t, t.constant(x), p, true);
                return num::sum(num::hadamard(num::hadamard(f.h, f.h), t.constant(r)));
            };
            std::vector<Param*> ps = p.params();
            CHECK(grad_check(build, ps) < 1e-6);
        }
    }
    SUBCASE("frozen params receive no gradient") {
        MaffParams p = make_params(4, 2, 15);
        for (Param* q : p.params()) q->zero_grad();
        Tape t;
        FuseBatch f = fuse_batch(t, t.constant(x), p, false);
        t.backward(num::sum(f.h));
        for (Param* q : p.params()) CHECK(q->grad.isZero(0.0));
    }
    SUBCASE("width mismatch") {
        MaffParams p = make_params(4, 2, 15);
        CHECK_THROWS_AS(fuse_batch(Matrix(random_matrix(3, 10, 1)), p), DimensionError);
    }
}

TEST_CASE("global_attention_map") {
    SUBCASE("identical patients") {
        MaffParams p = make_params(8, 4, 16);
        Matrix x(5, 12);
        for (Eigen::Index n = 0; n < 5; ++n) x.row(n) = random_matrix(1, 12, 17);
        FuseBatchValue fb = fuse_batch(x, p);
        Matrix g = global_attention_map(fb.maps);
        CHECK((g - fb.maps.patient_mean(0)).cwiseAbs().maxCoeff() < 1e-15);
    }
    SUBCASE("two-patient hand mean") {
        Matrix a(2, 2), b(2, 2), expected(2, 2);
        a << 0.25, 0.5, 0.75, 0.5;
        b << 0.75, 1.0, 0.25, 0.0;
        expected << 0.5, 0.75, 0.5, 0.25;
        CHECK(global_attention_map(std::vector<Matrix>{a, b}) == expected);
    }
    SUBCASE("column sums stay at one") {
        MaffParams p = make_params(8, 4, 18);
        Matrix g = global_attention_map(fuse_batch(Matrix(random_matrix(30, 12, 19, -3, 3)), p).maps);
        CHECK((g.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    }
    SUBCASE("empty set") {
        CHECK_THROWS_AS(global_attention_map(std::vector<Matrix>{}), ParameterError);
        AttentionMaps empty;
        CHECK_THROWS_AS(global_attention_map(empty), ParameterError);
    }
}

TEST_CASE("MaffParams init") {
    MaffConfig cfg;
    cfg.d_f = 6;
    cfg.heads = 4;
    CHECK_THROWS_AS(MaffParams::init(schema3(), cfg, 1), ParameterError);
    cfg.heads = 3;
    MaffParams a = MaffParams::init(schema3(), cfg, 1);
    MaffParams b = MaffParams::init(schema3(), cfg, 1);
    CHECK(a.wh.value == b.wh.value);
    CHECK(a.modalities[2].wv.value == b.modalities[2].wv.value);
    const double limit = std::sqrt(6.0 / (5.0 + 6.0));
    CHECK(a.modalities[2].wq.value.cwiseAbs().maxCoeff() <= limit);
    CHECK(a.tau() == doctest::Approx(std::sqrt(2.0)));
    CHECK(parse_axis("row") == AttentionAxis::row);
    CHECK_THROWS_AS(parse_axis("diagonal"), ConfigError);
}
