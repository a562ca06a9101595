#include <doctest.h>

#include "mmgl/data/synth.hpp"
#include "mmgl/error.hpp"
#include "mmgl/numcore/ops.hpp"
#include "mmgl/train/cv.hpp"
#include "mmgl/train/metrics.hpp"
#include "mmgl/train/model.hpp"
#include "mmgl/train/trainer.hpp"

#include "test_util.hpp"

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>

using namespace mmgl;
using namespace mmgl::train;
using mmgl::test::random_matrix;

namespace {

// O(n^2) pair count: (2 * wins + ties) / (2 * P * N).
double pair_auc(const std::vector<double>& s, const std::vector<int>& pos) {
    std::int64_t twice = 0, p = 0, n = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (pos[i]) ++p; else ++n;
        if (!pos[i]) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (pos[j]) continue;
            twice += s[i] > s[j] ? 2 : s[i] == s[j] ? 1 : 0;
        }
    }
    return static_cast<double>(twice) / static_cast<double>(2 * p * n);
}

data::MultiModalDataset small_dataset(std::size_t n, std::uint64_t seed, double separation = 2.0) {
    data::SynthConfig cfg = data::synth_preset("complementary");
    cfg.num_patients = n;
    cfg.separation = separation;
    cfg.seed = seed;
    return data::synth_generate(cfg);
}

TrainConfig quick_config() {
    TrainConfig c;
    c.epochs = 30;
    c.d_f = c.d = c.d_a = c.d_h = 8;
    c.heads = 2;
    c.folds = 3;
    c.seed = 4;
    return c;
}

}  // namespace

TEST_CASE("auc examples") {
    std::vector<double> s = {0.1, 0.2, 0.3, 0.4};
    CHECK(auc_binary(s, std::vector<int>{0, 0, 1, 1}) == 1.0);
    CHECK(auc_binary(s, std::vector<int>{1, 1, 0, 0}) == 0.0);
    CHECK(auc_binary(std::vector<double>(6, 0.3), std::vector<int>{0, 1, 0, 1, 1, 0}) == 0.5);
    CHECK_THROWS_AS(auc_binary(s, std::vector<int>{1, 1, 1, 1}), ParameterError);
}

TEST_CASE("auc matches pair enumeration and is rank invariant") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng() % 40;
        std::vector<double> s(n);
        std::vector<int> pos(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng() % 7) / 7.0;
            pos[i] = static_cast<int>(rng() % 2);
        }
        pos[0] = 1;
        pos[1] = 0;
        const double a = auc_binary(s, pos);
        CHECK(a == pair_auc(s, pos));
        std::vector<double> t(n);
        for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(3.0 * s[i]) - 7.0;
        CHECK(auc_binary(t, pos) == a);
    }
}

TEST_CASE("macro one-vs-rest") {
    SUBCASE("two classes reduce to the binary AUC") {
        std::mt19937_64 rng(5);
        Matrix scores(30, 2);
        std::vector<int> labels(30);
        std::vector<double> s1(30);
        std::vector<int> pos(30);
        for (int i = 0; i < 30; ++i) {
            const double p = static_cast<double>(rng() % 16) / 16.0;
            scores(i, 0) = 1.0 - p;
            scores(i, 1) = p;
            labels[static_cast<std::size_t>(i)] = static_cast<int>(rng() % 2);
            s1[static_cast<std::size_t>(i)] = p;
            pos[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(i)];
        }
        CHECK(auc_macro_ovr(scores, labels) == auc_binary(s1, pos));
        CHECK(auc(scores, labels) == auc_binary(s1, pos));
    }
    SUBCASE("absent classes are skipped") {
        Matrix scores(4, 3);
        scores << 0.8, 0.1, 0.1, 0.7, 0.2, 0.1, 0.1, 0.8, 0.1, 0.2, 0.7, 0.1;
        std::vector<int> labels = {0, 0, 1, 1};
        CHECK(auc_macro_ovr(scores, labels) == 1.0);
        CHECK(auc_macro_ovr(scores, std::vector<int>{2, 2, 2, 2}) == 0.5);
    }
}

TEST_CASE("accuracy and summary statistics") {
    Matrix scores(3, 2);
    scores << 0.9, 0.1, 0.4, 0.6, 0.5, 0.5;
    CHECK(accuracy(scores, std::vector<int>{0, 1, 1}) == doctest::Approx(2.0 / 3.0));
    std::vector<double> v = {1.0, 2.0, 3.0, 4.0};
    Summary s = summarize(v);
    CHECK(s.mean == 2.5);
    CHECK(s.std == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(s.sem == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
}

TEST_CASE("config json") {
    TrainConfig c = quick_config();
    c.graph = GraphKind::knn;
    c.phase_a_loss = PhaseALoss::graph_only;
    TrainConfig back = TrainConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(TrainConfig::from_json({{"attention-axis", "row"}}).attention_axis == maff::AttentionAxis::row);
    CHECK(TrainConfig::from_json({{"eval-mode", "inductive"}}).eval_mode == EvalMode::inductive);
    CHECK_THROWS_AS(TrainConfig::from_json({{"learning_rate", 0.1}}), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_json({{"d_f", 10}, {"heads", 4}}), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_json({{"lr", -1.0}}), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_json({{"graph", "star"}}), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_json({{"epochs", "many"}}), ConfigError);
}

TEST_CASE("total_loss matches its terms") {
    const Matrix logits = random_matrix(6, 3, 1, -2, 2);
    const Matrix h = random_matrix(6, 4, 2);
    Matrix a = random_matrix(6, 6, 3, 0, 1);
    a = 0.5 * (a + a.transpose());
    std::vector<int> labels = {0, 2, 1, 1, 0, 2};
    std::vector<std::size_t> mask = {0, 1, 3, 4};

    double ce = 0.0;
    for (std::size_t i : mask) ce += test::cross_entropy_row_oracle(logits.row(static_cast<Eigen::Index>(i)), labels[i]);
    ce /= 4.0;
    double smooth = 0.0, con = 0.0, r = 0.0;
    for (int i = 0; i < 6; ++i) {
        double deg = 0.0;
        for (int j = 0; j < 6; ++j) {
            smooth += a(i, j) * (h.row(i) - h.row(j)).squaredNorm();
            r += a(i, j) * a(i, j);
            deg += a(i, j);
        }
        con -= std::log(deg + agl::kDegreeEps);
    }
    smooth /= 72.0;
    con /= 6.0;
    r /= 36.0;

    for (double lambda : {0.0, 0.7, 2.0}) {
        Tape t;
        LossTerms terms = total_loss(t.constant(logits), labels, mask, t.constant(h), t.constant(a), lambda, 0.3, 0.9);
        CHECK(terms.task.scalar() == doctest::Approx(ce).epsilon(1e-12));
        CHECK(terms.smooth.scalar() == doctest::Approx(smooth).epsilon(1e-12));
        CHECK(terms.con.scalar() == doctest::Approx(con).epsilon(1e-12));
        CHECK(terms.r.scalar() == doctest::Approx(r).epsilon(1e-12));
        const double recomposed = terms.task.scalar() +
                                  lambda * (terms.smooth.scalar() + 0.3 * terms.con.scalar() + 0.9 * terms.r.scalar());
        CHECK(std::abs(terms.total.scalar() - recomposed) < 1e-10);
        if (lambda == 0.0) CHECK(terms.total.scalar() == terms.task.scalar());
    }

    Matrix confident = Matrix::Zero(6, 3);
    for (int i = 0; i < 6; ++i) confident(i, labels[static_cast<std::size_t>(i)]) = 50.0;
    Tape t;
    CHECK(total_loss(t.constant(confident), labels, mask, t.constant(h), t.constant(a), 0.0, 0.5, 0.5).total.scalar() < 1e-20);
}

TEST_CASE("train_epoch updates both phases and stays finite") {
    data::MultiModalDataset ds = train::Preprocessing::fit(small_dataset(60, 1)).apply(small_dataset(60, 1));
    TrainConfig cfg = quick_config();
    for (PhaseALoss pa : {PhaseALoss::total, PhaseALoss::graph_only}) {
        cfg.phase_a_loss = pa;
        Model m(ds.schema.modalities, 3, cfg, 7);
        GraphBatch batch{ds.features, ds.meta};
        std::vector<std::size_t> mask(40);
        std::iota(mask.begin(), mask.end(), std::size_t{0});
        std::vector<Matrix> before;
        for (Param* p : m.all_params()) before.push_back(p->value);
        EpochLosses first = train_epoch(m, batch, ds.labels, mask);
        std::vector<Param*> ps = m.all_params();
        for (std::size_t i = 0; i < ps.size(); ++i) CHECK(ps[i]->value != before[i]);
        CHECK(m.adam_a.step_count() == 1);
        CHECK(m.adam_b.step_count() == 1);
        EpochLosses last = first;
        for (int e = 0; e < 40; ++e) last = train_epoch(m, batch, ds.labels, mask);
        CHECK(std::isfinite(last.total));
        CHECK(last.task < first.task);
    }
}

TEST_CASE("a non-finite weight aborts training naming the term") {
    data::MultiModalDataset ds = train::Preprocessing::fit(small_dataset(30, 2)).apply(small_dataset(30, 2));
    Model m(ds.schema.modalities, 3, quick_config(), 1);
    m.gcn.w1.value(0, 0) = std::nan("");
    std::vector<std::size_t> mask = {0, 1, 2, 3};
    try {
        train_epoch(m, GraphBatch{ds.features, ds.meta}, ds.labels, mask);
        FAIL("expected divergence");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("L_t") != std::string::npos);
    }
}

TEST_CASE("overfit: no graph regularization, identity graph") {
    data::SynthConfig sc = data::synth_preset("default");
    sc.num_patients = 30;
    sc.seed = 3;
    data::MultiModalDataset ds = train::Preprocessing::fit(data::synth_generate(sc)).apply(data::synth_generate(sc));
    TrainConfig cfg;
    cfg.lambda = 0.0;
    cfg.graph = GraphKind::identity;
    cfg.epochs = 200;
    std::vector<std::size_t> all(30);
    std::iota(all.begin(), all.end(), std::size_t{0});
    FitResult fr = fit(ds, all, cfg, 11);
    CHECK(accuracy(fr.model->predict_proba(fr.batch), ds.labels) == 1.0);
}

TEST_CASE("fit is deterministic") {
    data::MultiModalDataset ds = train::Preprocessing::fit(small_dataset(45, 5)).apply(small_dataset(45, 5));
    std::vector<std::size_t> train(30);
    std::iota(train.begin(), train.end(), std::size_t{0});
    FitResult a = fit(ds, train, quick_config(), 9);
    FitResult b = fit(ds, train, quick_config(), 9);
    std::vector<Param*> pa = a.model->all_params(), pb = b.model->all_params();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
    CHECK(a.history.back().total == b.history.back().total);
}

TEST_CASE("early stopping restores the best epoch") {
    data::MultiModalDataset ds = train::Preprocessing::fit(small_dataset(60, 6)).apply(small_dataset(60, 6));
    std::vector<std::size_t> train(50);
    std::iota(train.begin(), train.end(), std::size_t{0});
    TrainConfig cfg = quick_config();
    cfg.epochs = 200;
    cfg.patience = 5;
    FitResult fr = fit(ds, train, cfg, 2);
    CHECK(fr.history.size() <= 200);
    CHECK(fr.best_epoch < fr.history.size());
    CHECK(fr.mask.size() < 50);
}

TEST_CASE("inductive prediction") {
    data::MultiModalDataset ds = train::Preprocessing::fit(small_dataset(60, 8)).apply(small_dataset(60, 8));
    TrainConfig cfg = quick_config();
    cfg.eval_mode = EvalMode::inductive;
    std::vector<std::size_t> train(50);
    std::iota(train.begin(), train.end(), std::size_t{0});
    FitResult fr = fit(ds, train, cfg, 3);
    CHECK(fr.batch.size() == 50);
    const Matrix h = training_embeddings(fr);
    const Matrix trans = fr.model->predict_proba(fr.batch);

    SUBCASE("a duplicated training patient keeps its prediction") {
        for (Eigen::Index i : {0, 7, 33}) {
            Eigen::RowVectorXd p = predict_inductive(*fr.model, h, fr.batch.meta, ds.features.row(i), ds.meta.row(i));
            CHECK(0.5 * (p - trans.row(i)).cwiseAbs().sum() <= 0.05);
        }
    }
    SUBCASE("batch evaluation equals one-at-a-time prediction") {
        std::vector<std::size_t> test = {50, 51, 52, 53};
        EvalResult er = evaluate(fr, ds, test);
        for (std::size_t k = 0; k < test.size(); ++k) {
            const auto r = static_cast<Eigen::Index>(test[k]);
            Eigen::RowVectorXd p = predict_inductive(*fr.model, h, fr.batch.meta, ds.features.row(r), ds.meta.row(r));
            CHECK(er.probs.row(static_cast<Eigen::Index>(k)) == p);
        }
    }
    SUBCASE("a vanishing embedding is predicted from its own features") {
        Eigen::RowVectorXd zero = Eigen::RowVectorXd::Zero(ds.features.cols());
        Eigen::RowVectorXd p = predict_inductive(*fr.model, h, fr.batch.meta, zero, ds.meta.row(0));
        // With no bias terms, zero features give zero logits.
        CHECK((p.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-12);
    }
    SUBCASE("schema mismatch") {
        CHECK_THROWS_AS(predict_inductive(*fr.model, h, fr.batch.meta, Eigen::RowVectorXd::Zero(3), ds.meta.row(0)),
                        DimensionError);
    }
}

TEST_CASE("run_cv") {
    data::MultiModalDataset raw = small_dataset(60, 10);
    TrainConfig cfg = quick_config();
    cfg.epochs = 10;
    CvResult a = run_cv(raw, cfg, {1, {}});
    REQUIRE(a.folds.size() == 3);
    for (std::size_t c : a.coverage) CHECK(c == 1);
    for (const FoldReport& f : a.folds) {
        CHECK(f.acc >= 0.0);
        CHECK(f.acc <= 1.0);
        CHECK(f.auc >= 0.0);
        CHECK(f.auc <= 1.0);
    }
    CvResult b = run_cv(raw, cfg, {3, {}});
    for (std::size_t f = 0; f < 3; ++f) {
        CHECK(a.folds[f].acc == b.folds[f].acc);
        CHECK(a.folds[f].auc == b.folds[f].auc);
        CHECK(a.folds[f].last.total == b.folds[f].last.total);
    }
    CHECK(a.oof_probs == b.oof_probs);

    SUBCASE("per-fold preprocessing and inductive mode run") {
        cfg.impute = ImputeMode::per_fold;
        cfg.eval_mode = EvalMode::inductive;
        CvResult c = run_cv(raw, cfg);
        for (std::size_t n : c.coverage) CHECK(n == 1);
    }
    SUBCASE("ablation cell equals the plain run") {
        std::vector<AblationRow> rows = run_ablation(raw, cfg, parse_grid("maff:learned"));
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].result.acc.mean == a.acc.mean);
        CHECK(rows[0].result.oof_probs == a.oof_probs);
    }
}

TEST_CASE("every fusion and graph variant trains") {
    data::MultiModalDataset raw = small_dataset(45, 12);
    TrainConfig cfg = quick_config();
    cfg.epochs = 5;
    std::vector<AblationCell> grid = default_grid();
    grid.push_back({FusionKind::mlp, GraphKind::identity});
    REQUIRE(default_grid().size() == 9);
    std::vector<AblationRow> rows = run_ablation(raw, cfg, grid);
    CHECK(rows.size() == 10);
    for (const AblationRow& r : rows) CHECK(std::isfinite(r.result.acc.mean));
    CHECK_THROWS_AS(parse_grid("maff"), ConfigError);
    CHECK(parse_grid("concat:knn,mlp:meta").size() == 2);
}
