#include "mmgl/train/cv.hpp"

#include "mmgl/data/csv.hpp"
#include "mmgl/data/split.hpp"
#include "mmgl/error.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>

namespace mmgl::train {

std::uint64_t fold_seed(std::uint64_t base, std::size_t fold) { return derive_seed(base, 1000 + fold); }

std::size_t fold_threads() {
    const char* env = std::getenv("MMGL_THREADS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) {
        spdlog::warn("ignoring MMGL_THREADS='{}' (expected a positive integer)", env);
        return 1;
    }
    return static_cast<std::size_t>(v);
}

CvResult run_cv(const data::MultiModalDataset& raw, const TrainConfig& config, const CvOptions& options) {
    config.validate();
    raw.validate();
    const data::SplitPlan plan = data::stratified_kfold(raw.labels, config.folds, config.seed);
    const bool global = config.impute == ImputeMode::global;
    const data::MultiModalDataset prepared = global ? Preprocessing::fit(raw).apply(raw) : data::MultiModalDataset{};

    const std::size_t k = plan.folds.size();
    std::vector<FoldReport> reports(k);
    std::vector<Matrix> probs(k);
    std::vector<std::exception_ptr> errors(k);

    auto run_fold = [&](std::size_t f) {
        const data::Fold& fold = plan.folds[f];
        data::MultiModalDataset local;
        if (!global) local = Preprocessing::fit(raw, fold.train).apply(raw);
        const data::MultiModalDataset& ds = global ? prepared : local;
        FitResult fr = fit(ds, fold.train, config, fold_seed(config.seed, f));
        EvalResult er = evaluate(fr, ds, fold.test);
        reports[f] = {f, er.acc, er.auc, fr.history.at(std::min(fr.best_epoch, fr.history.size() - 1))};
        probs[f] = er.probs;
        if (options.on_fold) options.on_fold(f, fr, er);
        spdlog::debug("fold {}: acc {} auc {}", f, er.acc, er.auc);
    };

    const std::size_t threads = std::min(options.threads ? options.threads : fold_threads(), k);
    if (threads <= 1) {
        for (std::size_t f = 0; f < k; ++f) run_fold(f);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                for (std::size_t f = next++; f < k; f = next++) {
                    try {
                        run_fold(f);
                    } catch (...) {
                        errors[f] = std::current_exception();
                    }
                }
            });
        }
        for (std::thread& th : pool) th.join();
        for (const std::exception_ptr& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    CvResult out;
    out.folds = std::move(reports);
    out.oof_probs = Matrix::Zero(static_cast<Eigen::Index>(raw.num_patients()),
                                 static_cast<Eigen::Index>(raw.num_classes()));
    out.coverage.assign(raw.num_patients(), 0);
    std::vector<double> accs, aucs;
    for (std::size_t f = 0; f < k; ++f) {
        const std::vector<std::size_t>& test = plan.folds[f].test;
        for (std::size_t i = 0; i < test.size(); ++i) {
            out.oof_probs.row(static_cast<Eigen::Index>(test[i])) = probs[f].row(static_cast<Eigen::Index>(i));
            ++out.coverage[test[i]];
        }
        accs.push_back(out.folds[f].acc);
        aucs.push_back(out.folds[f].auc);
    }
    out.acc = summarize(accs);
    out.auc = summarize(aucs);
    return out;
}

std::vector<AblationCell> default_grid() {
    std::vector<AblationCell> grid;
    for (FusionKind f : {FusionKind::maff, FusionKind::mlp, FusionKind::concat}) {
        for (GraphKind g : {GraphKind::learned, GraphKind::knn, GraphKind::meta}) grid.push_back({f, g});
    }
    return grid;
}

std::vector<AblationCell> parse_grid(std::string_view spec) {
    if (spec.empty() || spec == "full") return default_grid();
    std::vector<AblationCell> grid;
    std::size_t start = 0;
    while (start <= spec.size()) {
        std::size_t end = spec.find(',', start);
        if (end == std::string_view::npos) end = spec.size();
        const std::string_view cell = spec.substr(start, end - start);
        const std::size_t colon = cell.find(':');
        if (colon == std::string_view::npos) {
            throw ConfigError(fmt::format("grid cell '{}' must look like fusion:graph", cell));
        }
        grid.push_back({parse_fusion(cell.substr(0, colon)), parse_graph(cell.substr(colon + 1))});
        start = end + 1;
    }
    return grid;
}

std::vector<AblationRow> run_ablation(const data::MultiModalDataset& raw, const TrainConfig& config,
                                      const std::vector<AblationCell>& grid, const CvOptions& options) {
    if (grid.empty()) throw ConfigError("ablation grid is empty");
    std::vector<AblationRow> rows;
    for (const AblationCell& cell : grid) {
        TrainConfig c = config;
        c.fusion = cell.fusion;
        c.graph = cell.graph;
        spdlog::info("ablation cell {}+{}", to_string(cell.fusion), to_string(cell.graph));
        rows.push_back({cell, run_cv(raw, c, options)});
    }
    return rows;
}

std::string format_number(double v) { return fmt::format("{}", v); }

void write_metrics_csv(const std::filesystem::path& path, const CvResult& result) {
    std::string out = "fold,acc,auc,loss_task,loss_smooth,loss_con,loss_r\n";
    for (const FoldReport& f : result.folds) {
        out += fmt::format("{},{},{},{},{},{},{}\n", f.fold, format_number(f.acc), format_number(f.auc),
                           format_number(f.last.task), format_number(f.last.smooth), format_number(f.last.con),
                           format_number(f.last.r));
    }
    auto column = [](const FoldReport& f, int c) {
        switch (c) {
            case 0: return f.acc;
            case 1: return f.auc;
            case 2: return f.last.task;
            case 3: return f.last.smooth;
            case 4: return f.last.con;
            default: return f.last.r;
        }
    };
    Summary s[6];
    for (int c = 0; c < 6; ++c) {
        std::vector<double> v;
        for (const FoldReport& f : result.folds) v.push_back(column(f, c));
        s[c] = summarize(v);
    }
    const char* names[] = {"mean", "std", "sem"};
    for (int row = 0; row < 3; ++row) {
        out += names[row];
        for (int c = 0; c < 6; ++c) {
            const double v = row == 0 ? s[c].mean : row == 1 ? s[c].std : s[c].sem;
            out += "," + format_number(v);
        }
        out += "\n";
    }
    csv::write_atomic(path, out);
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochLosses>& history) {
    std::string out = "epoch,loss_task,loss_smooth,loss_con,loss_r,loss_total\n";
    for (std::size_t e = 0; e < history.size(); ++e) {
        const EpochLosses& l = history[e];
        out += fmt::format("{},{},{},{},{},{}\n", e + 1, format_number(l.task), format_number(l.smooth),
                           format_number(l.con), format_number(l.r), format_number(l.total));
    }
    csv::write_atomic(path, out);
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
    std::string out = "fusion,graph,acc_mean,acc_std,acc_sem,auc_mean,auc_std,auc_sem\n";
    for (const AblationRow& r : rows) {
        out += fmt::format("{},{},{},{},{},{},{},{}\n", to_string(r.cell.fusion), to_string(r.cell.graph),
                           format_number(r.result.acc.mean), format_number(r.result.acc.std),
                           format_number(r.result.acc.sem), format_number(r.result.auc.mean),
                           format_number(r.result.auc.std), format_number(r.result.auc.sem));
    }
    csv::write_atomic(path, out);
}

}  // namespace mmgl::train
