#pragma once

#include "mmgl/data/dataset.hpp"
#include "mmgl/data/preprocess.hpp"
#include "mmgl/train/model.hpp"

#include <memory>
#include <span>
#include <vector>

namespace mmgl::train {

// Imputation and standardization fitted on a set of rows and replayable on
// new patients.
struct Preprocessing {
    data::ImputeStats impute;
    data::ZScoreStats zscore;

    static Preprocessing fit(const data::MultiModalDataset& raw, std::span<const std::size_t> rows = {});
    Matrix apply(const Matrix& features, const data::Mask& missing) const;
    data::MultiModalDataset apply(const data::MultiModalDataset& raw) const;
};

struct FitResult {
    std::unique_ptr<Model> model;
    std::vector<EpochLosses> history;
    // Nodes of the training graph, as dataset rows and as a batch.
    std::vector<std::size_t> graph_rows;
    GraphBatch batch;
    // Batch-local labels and the labelled nodes the loss was masked to.
    std::vector<int> labels;
    std::vector<std::size_t> mask;
    std::size_t best_epoch = 0;
};

// Trains on `train` rows of a preprocessed dataset. Transductive fits put
// every patient in the graph and mask the loss; inductive fits build the
// graph from training patients only.
FitResult fit(const data::MultiModalDataset& ds, std::span<const std::size_t> train,
              const TrainConfig& config, std::uint64_t seed);

struct EvalResult {
    Matrix probs;  // test x C
    std::vector<int> labels;
    double acc = 0.0;
    double auc = 0.0;
};

EvalResult evaluate(const FitResult& fit, const data::MultiModalDataset& ds,
                    std::span<const std::size_t> test);

// Fused features of the training graph's nodes (the inductive cache).
Matrix training_embeddings(const FitResult& fit);

}  // namespace mmgl::train
