#include "mmgl/train/trainer.hpp"

#include "mmgl/data/split.hpp"
#include "mmgl/error.hpp"
#include "mmgl/train/metrics.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mmgl::train {

Preprocessing Preprocessing::fit(const data::MultiModalDataset& raw, std::span<const std::size_t> rows) {
    Preprocessing p;
    p.impute = data::fit_impute(raw, rows);
    p.zscore = data::fit_zscore(data::apply_impute(raw, p.impute), rows);
    return p;
}

Matrix Preprocessing::apply(const Matrix& features, const data::Mask& missing) const {
    if (features.cols() != impute.means.size()) {
        throw DimensionError(fmt::format("{} feature columns, preprocessing was fitted on {}", features.cols(),
                                         impute.means.size()));
    }
    Matrix x = features;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index f = 0; f < x.cols(); ++f) {
            if ((missing.size() > 0 && missing(i, f)) || std::isnan(x(i, f))) x(i, f) = impute.means(f);
        }
    }
    return zscore.apply(x);
}

data::MultiModalDataset Preprocessing::apply(const data::MultiModalDataset& raw) const {
    data::MultiModalDataset out = raw;
    out.features = apply(raw.features, raw.missing);
    out.missing = data::Mask::Constant(raw.features.rows(), raw.features.cols(), false);
    return out;
}

namespace {

std::vector<int> gather(std::span<const int> labels, std::span<const std::size_t> rows) {
    std::vector<int> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(labels[r]);
    return out;
}

GraphBatch full_batch(const data::MultiModalDataset& ds) { return {ds.features, ds.meta}; }

Matrix eval_probs(const FitResult& fr, const data::MultiModalDataset& ds, std::span<const std::size_t> rows,
                  const Matrix* h_cache) {
    const Model& model = *fr.model;
    if (model.config().eval_mode == EvalMode::transductive) {
        const Matrix probs = model.predict_proba(fr.batch);
        // Dataset row -> batch row (identity for transductive fits).
        Matrix out(static_cast<Eigen::Index>(rows.size()), probs.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            out.row(static_cast<Eigen::Index>(i)) = probs.row(static_cast<Eigen::Index>(rows[i]));
        }
        return out;
    }
    const Matrix h = h_cache ? *h_cache : training_embeddings(fr);
    Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(model.num_classes()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(rows[i]);
        Eigen::RowVectorXi meta = ds.meta.cols() > 0 ? Eigen::RowVectorXi(ds.meta.row(r)) : Eigen::RowVectorXi();
        out.row(static_cast<Eigen::Index>(i)) =
            predict_inductive(model, h, fr.batch.meta, ds.features.row(r), meta);
    }
    return out;
}

}  // namespace

Matrix training_embeddings(const FitResult& fit) { return fit.model->fuse(fit.batch.x); }

FitResult fit(const data::MultiModalDataset& ds, std::span<const std::size_t> train, const TrainConfig& config,
              std::uint64_t seed) {
    config.validate();
    if (train.empty()) throw ParameterError("cannot fit on an empty training set");
    if (ds.has_missing()) throw DataError("dataset must be imputed before training");

    std::vector<std::size_t> fit_rows(train.begin(), train.end());
    std::vector<std::size_t> val_rows;
    if (config.patience > 0) {
        const auto k = static_cast<std::size_t>(std::max(2.0, std::round(1.0 / config.validation_fraction)));
        const std::vector<int> train_labels = gather(ds.labels, train);
        data::SplitPlan plan = data::stratified_kfold(train_labels, std::min(k, train.size()), derive_seed(seed, 5));
        val_rows.clear();
        fit_rows.clear();
        for (std::size_t i : plan.folds[0].test) val_rows.push_back(train[i]);
        for (std::size_t i : plan.folds[0].train) fit_rows.push_back(train[i]);
    }

    FitResult fr;
    fr.model = std::make_unique<Model>(ds.schema.modalities, ds.num_classes(), config, seed);
    if (config.eval_mode == EvalMode::transductive) {
        fr.graph_rows.resize(ds.num_patients());
        std::iota(fr.graph_rows.begin(), fr.graph_rows.end(), std::size_t{0});
        fr.batch = full_batch(ds);
        fr.labels = ds.labels;
        fr.mask = fit_rows;
    } else {
        fr.graph_rows = fit_rows;
        fr.batch = full_batch(ds).subset(fit_rows);
        fr.labels = gather(ds.labels, fit_rows);
        fr.mask.resize(fit_rows.size());
        std::iota(fr.mask.begin(), fr.mask.end(), std::size_t{0});
    }

    Model& model = *fr.model;
    std::vector<Param*> params = model.all_params();
    std::vector<Matrix> best;
    double best_acc = -1.0;
    std::size_t since_best = 0;
    const std::vector<int> val_labels = gather(ds.labels, val_rows);
    for (std::size_t e = 0; e < config.epochs; ++e) {
        fr.history.push_back(train_epoch(model, fr.batch, fr.labels, fr.mask));
        if (val_rows.empty()) continue;
        const double acc = accuracy(eval_probs(fr, ds, val_rows, nullptr), val_labels);
        if (acc > best_acc) {
            best_acc = acc;
            fr.best_epoch = e;
            since_best = 0;
            best.clear();
            for (const Param* p : params) best.push_back(p->value);
        } else if (++since_best >= config.patience) {
            spdlog::debug("early stop after epoch {} (best {} at epoch {})", e + 1, best_acc, fr.best_epoch + 1);
            break;
        }
    }
    if (!best.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
    } else {
        fr.best_epoch = config.epochs - 1;
    }
    return fr;
}

EvalResult evaluate(const FitResult& fr, const data::MultiModalDataset& ds, std::span<const std::size_t> test) {
    if (test.empty()) throw ParameterError("cannot evaluate on an empty test set");
    EvalResult r;
    r.probs = eval_probs(fr, ds, test, nullptr);
    r.labels = gather(ds.labels, test);
    r.acc = accuracy(r.probs, r.labels);
    r.auc = auc(r.probs, r.labels);
    return r;
}

}  // namespace mmgl::train
