#pragma once

#include "mmgl/data/dataset.hpp"
#include "mmgl/train/metrics.hpp"
#include "mmgl/train/trainer.hpp"

#include <filesystem>
#include <functional>
#include <string_view>
#include <vector>

namespace mmgl::train {

// Fold-level seed shared by every entry point, so a cell of an ablation
// grid reproduces the matching cross-validation run bit for bit.
std::uint64_t fold_seed(std::uint64_t base, std::size_t fold);

// Worker count for parallel folds: MMGL_THREADS if set, else 1.
std::size_t fold_threads();

struct FoldReport {
    std::size_t fold = 0;
    double acc = 0.0;
    double auc = 0.0;
    EpochLosses last;  // final epoch's loss breakdown
};

struct CvOptions {
    // 0 means fold_threads().
    std::size_t threads = 0;
    // Called from the worker that ran the fold; calls for distinct folds
    // may overlap.
    std::function<void(std::size_t fold, const FitResult&, const EvalResult&)> on_fold;
};

struct CvResult {
    std::vector<FoldReport> folds;
    Summary acc;
    Summary auc;
    // Out-of-fold class distributions and how often each row was tested.
    Matrix oof_probs;
    std::vector<std::size_t> coverage;
};

// Stratified K-fold (config.folds) over a raw dataset: preprocess, fit on
// each training portion, evaluate on its test fold. Results are reduced in
// fold order regardless of thread count.
CvResult run_cv(const data::MultiModalDataset& raw, const TrainConfig& config, const CvOptions& options = {});

struct AblationCell {
    FusionKind fusion = FusionKind::maff;
    GraphKind graph = GraphKind::learned;
};

// {maff, mlp, concat} x {learned, knn, meta}.
std::vector<AblationCell> default_grid();
// Comma-separated "fusion:graph" cells, or "full" for the default grid.
std::vector<AblationCell> parse_grid(std::string_view spec);

struct AblationRow {
    AblationCell cell;
    CvResult result;
};

std::vector<AblationRow> run_ablation(const data::MultiModalDataset& raw, const TrainConfig& config,
                                      const std::vector<AblationCell>& grid, const CvOptions& options = {});

// Shortest round-trip formatting of a double.
std::string format_number(double v);

void write_metrics_csv(const std::filesystem::path& path, const CvResult& result);
void write_history_csv(const std::filesystem::path& path, const std::vector<EpochLosses>& history);
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

}  // namespace mmgl::train
