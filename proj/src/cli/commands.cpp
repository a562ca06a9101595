#include "mmgl/cli/commands.hpp"

#include "mmgl/cli/artifact.hpp"
#include "mmgl/data/csv.hpp"
#include "mmgl/error.hpp"
#include "mmgl/platform.hpp"
#include "mmgl/train/metrics.hpp"
#include "mmgl/train/trainer.hpp"

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>

#ifndef MMGL_VERSION
#define MMGL_VERSION "0.0.0"
#endif

namespace mmgl::cli {

using nlohmann::json;
namespace fs = std::filesystem;

int exit_code(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParameterError*>(&e)) return kExitConfig;
    if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const DimensionError*>(&e)) return kExitData;
    if (dynamic_cast<const NumericalError*>(&e)) return kExitNumerical;
    if (dynamic_cast<const CLI::ParseError*>(&e)) return kExitConfig;
    return kExitOther;
}

std::string tool_version() { return MMGL_VERSION; }

DataPaths DataPaths::in(const fs::path& dir) { return {dir / "features.csv", dir / "schema.json"}; }

namespace {

std::string utc_now() {
    return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(
                                                    std::chrono::system_clock::now())));
}

void require_files(const DataPaths& p) {
    for (const fs::path& f : p.files()) {
        if (!fs::exists(f)) throw DataError(fmt::format("required input '{}' does not exist", f.string()));
    }
}

data::MultiModalDataset load_data(const fs::path& dir) {
    const DataPaths p = DataPaths::in(dir);
    require_files(p);
    return data::load_csv(p.features, p.schema);
}

// Writes the manifest before any training so an interrupted run can be
// repeated from it.
void begin_run(const RunSpec& spec, const std::vector<std::string>& outputs) {
    const DataPaths p = DataPaths::in(spec.data_dir);
    require_files(p);
    fs::create_directories(spec.out_dir);
    const json m = spec.manifest(data::fingerprint(p.files()), outputs);
    csv::write_atomic(spec.out_dir / "manifest.json", m.dump(2) + "\n");
}

std::string class_header(const data::DatasetSchema& schema) {
    std::string out;
    for (const std::string& c : schema.class_names) out += "," + csv::escape("p_" + c);
    return out;
}

}  // namespace

json RunSpec::manifest(const std::string& fingerprint, const std::vector<std::string>& outputs) const {
    const DataPaths p = DataPaths::in(data_dir);
    json m = {{"tool", "mmgl"},
              {"version", tool_version()},
              {"command", command},
              {"created", utc_now()},
              {"data",
               {{"dir", fs::absolute(data_dir).lexically_normal().string()},
                {"files", {p.features.filename().string(), p.schema.filename().string()}},
                {"fingerprint", fingerprint}}},
              {"seed", config.seed},
              {"config", config.to_json()},
              {"out_dir", fs::absolute(out_dir).lexically_normal().string()},
              {"outputs", outputs}};
    if (command == "ablate") m["grid"] = grid;
    return m;
}

RunSpec RunSpec::from_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open manifest '{}'", path.string()));
    RunSpec s;
    std::string recorded;
    try {
        const json m = json::parse(in);
        if (m.value("tool", "") != "mmgl") throw ConfigError(fmt::format("'{}' is not an mmgl manifest", path.string()));
        s.command = m.at("command").get<std::string>();
        s.data_dir = m.at("data").at("dir").get<std::string>();
        recorded = m.at("data").at("fingerprint").get<std::string>();
        s.config = train::TrainConfig::from_json(m.at("config"));
        s.out_dir = m.at("out_dir").get<std::string>();
        s.grid = m.value("grid", "");
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("malformed manifest '{}': {}", path.string(), e.what()));
    }
    const DataPaths p = DataPaths::in(s.data_dir);
    require_files(p);
    const std::string now = data::fingerprint(p.files());
    if (now != recorded) {
        throw DataError(fmt::format("data in '{}' changed since the manifest was written (fingerprint {} != {})",
                                    s.data_dir.string(), now, recorded));
    }
    return s;
}

void cmd_synth(const data::SynthConfig& config, const fs::path& out_dir) {
    data::write_dataset(data::synth_generate(config), out_dir);
    csv::write_atomic(out_dir / "synth.json", config.to_json().dump(2) + "\n");
}

void cmd_train(const RunSpec& spec) {
    spec.config.validate();
    begin_run(spec, {"model.json", "metrics.csv", "history.csv"});
    const data::MultiModalDataset raw = load_data(spec.data_dir);
    std::vector<std::size_t> rows(raw.num_patients());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    const train::Preprocessing prep = train::Preprocessing::fit(raw);
    const data::MultiModalDataset ds = prep.apply(raw);

    const train::FitResult fr = train::fit(ds, rows, spec.config, spec.config.seed);
    const train::EvalResult er = train::evaluate(fr, ds, rows);
    save_artifact(spec.out_dir / "model.json", make_artifact(fr, raw, prep, spec.config.seed));

    const train::EpochLosses& last = fr.history.at(std::min(fr.best_epoch, fr.history.size() - 1));
    std::string metrics = "split,acc,auc,loss_task,loss_smooth,loss_con,loss_r\n";
    metrics += fmt::format("train,{},{},{},{},{},{}\n", train::format_number(er.acc), train::format_number(er.auc),
                           train::format_number(last.task), train::format_number(last.smooth),
                           train::format_number(last.con), train::format_number(last.r));
    csv::write_atomic(spec.out_dir / "metrics.csv", metrics);
    train::write_history_csv(spec.out_dir / "history.csv", fr.history);
    spdlog::info("trained on {} patients: training acc {:.4f}, auc {:.4f}", rows.size(), er.acc, er.auc);
}

train::CvResult cmd_cv(const RunSpec& spec) {
    spec.config.validate();
    std::vector<std::string> outputs = {"metrics.csv", "predictions.csv"};
    for (std::size_t f = 0; f < spec.config.folds; ++f) outputs.push_back(fmt::format("history_fold{}.csv", f));
    begin_run(spec, outputs);
    const data::MultiModalDataset raw = load_data(spec.data_dir);

    std::vector<std::vector<train::EpochLosses>> histories(spec.config.folds);
    train::CvOptions opts;
    opts.on_fold = [&](std::size_t f, const train::FitResult& fr, const train::EvalResult& er) {
        histories[f] = fr.history;
        spdlog::info("fold {}: acc {:.4f} auc {:.4f}", f, er.acc, er.auc);
    };
    train::CvResult r = train::run_cv(raw, spec.config, opts);

    train::write_metrics_csv(spec.out_dir / "metrics.csv", r);
    for (std::size_t f = 0; f < histories.size(); ++f) {
        train::write_history_csv(spec.out_dir / fmt::format("history_fold{}.csv", f), histories[f]);
    }
    std::string preds = "row,id,label" + class_header(raw.schema) + "\n";
    for (std::size_t i = 0; i < raw.num_patients(); ++i) {
        preds += fmt::format("{},{},{}", i, csv::escape(raw.ids.empty() ? std::to_string(i) : raw.ids[i]),
                             csv::escape(raw.schema.class_names[static_cast<std::size_t>(raw.labels[i])]));
        for (Eigen::Index c = 0; c < r.oof_probs.cols(); ++c) {
            preds += "," + train::format_number(r.oof_probs(static_cast<Eigen::Index>(i), c));
        }
        preds += "\n";
    }
    csv::write_atomic(spec.out_dir / "predictions.csv", preds);
    spdlog::info("{}-fold CV: acc {:.4f} +/- {:.4f} (std), auc {:.4f} +/- {:.4f}", spec.config.folds, r.acc.mean,
                 r.acc.std, r.auc.mean, r.auc.std);
    return r;
}

std::vector<train::AblationRow> cmd_ablate(const RunSpec& spec) {
    spec.config.validate();
    const std::vector<train::AblationCell> grid = train::parse_grid(spec.grid);
    begin_run(spec, {"ablation.csv"});
    const data::MultiModalDataset raw = load_data(spec.data_dir);
    std::vector<train::AblationRow> rows = train::run_ablation(raw, spec.config, grid);
    train::write_ablation_csv(spec.out_dir / "ablation.csv", rows);
    for (const train::AblationRow& r : rows) {
        spdlog::info("{}+{}: acc {:.4f} auc {:.4f}", train::to_string(r.cell.fusion), train::to_string(r.cell.graph),
                     r.result.acc.mean, r.result.auc.mean);
    }
    return rows;
}

ExportKind parse_export(std::string_view s) {
    if (s == "graph") return ExportKind::graph;
    if (s == "fuse-map") return ExportKind::fuse_map;
    if (s == "embeddings") return ExportKind::embeddings;
    throw ConfigError(fmt::format("export target must be one of {{graph, fuse-map, embeddings}}, got '{}'", s));
}

fs::path nodes_path(const fs::path& edges) {
    fs::path p = edges;
    p.replace_filename(edges.stem().string() + "_nodes.csv");
    return p;
}

void cmd_export(const fs::path& model_path, ExportKind what, const fs::path& out) {
    const ModelArtifact a = load_artifact(model_path);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    std::string text;
    switch (what) {
        case ExportKind::graph: {
            const Matrix adj = a.adjacency();
            text = "src,dst,weight\n";
            for (Eigen::Index i = 0; i < adj.rows(); ++i) {
                text += fmt::format("{},{},{}\n", i, i, train::format_number(adj(i, i)));
                for (Eigen::Index j = i + 1; j < adj.cols(); ++j) {
                    if (adj(i, j) != 0.0) text += fmt::format("{},{},{}\n", i, j, train::format_number(adj(i, j)));
                }
            }
            std::string nodes = "node,id,label\n";
            for (std::size_t i = 0; i < a.node_labels.size(); ++i) {
                const int y = a.node_labels[i];
                nodes += fmt::format("{},{},{}\n", i, csv::escape(a.node_ids[i]),
                                     y < 0 ? std::string() : csv::escape(a.schema.class_names[static_cast<std::size_t>(y)]));
            }
            csv::write_atomic(nodes_path(out), nodes);
            break;
        }
        case ExportKind::fuse_map: {
            if (a.global_attention.size() == 0) {
                throw ConfigError(fmt::format("model uses {} fusion and has no attention map",
                                              train::to_string(a.config.fusion)));
            }
            const std::vector<std::string> names = a.schema.modalities.names();
            for (std::size_t m = 0; m < names.size(); ++m) text += (m ? "," : "") + csv::escape(names[m]);
            text += "\n";
            for (Eigen::Index i = 0; i < a.global_attention.rows(); ++i) {
                for (Eigen::Index j = 0; j < a.global_attention.cols(); ++j) {
                    text += (j ? "," : "") + train::format_number(a.global_attention(i, j));
                }
                text += "\n";
            }
            break;
        }
        case ExportKind::embeddings: {
            for (Eigen::Index k = 0; k < a.h.cols(); ++k) text += fmt::format("{}h{}", k ? "," : "", k);
            text += "\n";
            for (Eigen::Index i = 0; i < a.h.rows(); ++i) {
                for (Eigen::Index k = 0; k < a.h.cols(); ++k) text += (k ? "," : "") + train::format_number(a.h(i, k));
                text += "\n";
            }
            break;
        }
    }
    csv::write_atomic(out, text);
}

void cmd_predict(const fs::path& model_path, const fs::path& input, const fs::path& out) {
    const ModelArtifact a = load_artifact(model_path);
    const std::unique_ptr<train::Model> model = a.model();
    const data::MultiModalDataset raw = data::load_unlabelled_csv(input, a.schema, a.feature_names, a.meta_levels);
    const Matrix x = a.preprocessing.apply(raw.features, raw.missing);
    std::string text = "row,id" + class_header(a.schema) + "\n";
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        Eigen::RowVectorXi meta = raw.meta.cols() > 0 ? Eigen::RowVectorXi(raw.meta.row(i)) : Eigen::RowVectorXi();
        const Eigen::RowVectorXd p = train::predict_inductive(*model, a.h, a.meta, x.row(i), meta);
        const auto r = static_cast<std::size_t>(i);
        text += fmt::format("{},{}", i, csv::escape(raw.ids.empty() ? std::to_string(i) : raw.ids[r]));
        for (Eigen::Index c = 0; c < p.size(); ++c) text += "," + train::format_number(p(c));
        text += "\n";
    }
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    csv::write_atomic(out, text);
}

namespace {

struct Overrides {
    std::string config, data, out, manifest, eval_mode;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> folds;
};

void add_run_options(CLI::App* sub, Overrides& o, bool with_folds) {
    sub->add_option("--config", o.config, "training config (JSON)");
    sub->add_option("--data", o.data, "dataset directory with features.csv and schema.json");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "base seed (overrides the config)");
    sub->add_option("--eval-mode", o.eval_mode, "transductive or inductive");
    sub->add_option("--manifest", o.manifest, "repeat the run recorded in a manifest");
    if (with_folds) sub->add_option("--folds", o.folds, "number of CV folds");
}

RunSpec resolve(const std::string& command, const Overrides& o) {
    RunSpec s;
    if (!o.manifest.empty()) {
        s = RunSpec::from_manifest(o.manifest);
        if (s.command != command) {
            throw ConfigError(fmt::format("manifest records a '{}' run, not '{}'", s.command, command));
        }
        if (!o.out.empty()) s.out_dir = o.out;
        return s;
    }
    if (o.data.empty()) throw ConfigError("--data is required");
    if (o.out.empty()) throw ConfigError("--out is required");
    s.command = command;
    s.data_dir = o.data;
    s.out_dir = o.out;
    s.config = o.config.empty() ? train::TrainConfig{} : train::load_config(o.config);
    if (o.seed) s.config.seed = *o.seed;
    if (o.folds) s.config.folds = *o.folds;
    if (!o.eval_mode.empty()) s.config.eval_mode = train::parse_eval_mode(o.eval_mode);
    s.config.validate();
    return s;
}

data::SynthConfig load_synth_config(const std::string& path, const std::string& preset) {
    json j = json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError(fmt::format("cannot open synthetic config '{}'", path));
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError(fmt::format("{}: {}", path, e.what()));
        }
    }
    if (!preset.empty()) j["preset"] = preset;
    return data::SynthConfig::from_json(j);
}

}  // namespace

int run(int argc, const char* const* argv) {
    tune_allocator();
    CLI::App app{"Multi-modal graph learning: attention fusion, adaptive graphs and GCN classification"};
    app.set_version_flag("--version", tool_version());
    app.require_subcommand(1);
    app.fallthrough();
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

    std::string synth_config, synth_preset, synth_out;
    std::optional<std::uint64_t> synth_seed;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic multi-modal dataset");
    synth->add_option("--config", synth_config, "synthetic-data config (JSON)");
    synth->add_option("--preset", synth_preset, "default, complementary or tadpole-like");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--out", synth_out, "output directory")->required();

    Overrides train_o, cv_o, ablate_o;
    CLI::App* train_cmd = app.add_subcommand("train", "fit on every patient and save a model artifact");
    add_run_options(train_cmd, train_o, false);
    CLI::App* cv = app.add_subcommand("cv", "stratified K-fold cross-validation");
    add_run_options(cv, cv_o, true);
    std::string grid = "full";
    CLI::App* ablate = app.add_subcommand("ablate", "cross-validate a fusion x graph grid");
    add_run_options(ablate, ablate_o, true);
    ablate->add_option("--grid", grid, "'full' or comma-separated fusion:graph cells");

    std::string export_what, export_model, export_out;
    CLI::App* exp = app.add_subcommand("export", "write graph, fuse-map or embeddings of a trained model");
    exp->add_option("what", export_what, "graph, fuse-map or embeddings")->required();
    exp->add_option("--model", export_model, "model artifact")->required();
    exp->add_option("--out", export_out, "output CSV")->required();

    std::string predict_model, predict_input, predict_out;
    CLI::App* predict = app.add_subcommand("predict", "class distributions of new patients");
    predict->add_option("--model", predict_model, "model artifact")->required();
    predict->add_option("--input", predict_input, "patients CSV with the training feature columns")->required();
    predict->add_option("--out", predict_out, "output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        spdlog::set_level(spdlog::level::from_str(log_level));
        if (*synth) {
            data::SynthConfig c = load_synth_config(synth_config, synth_preset);
            if (synth_seed) c.seed = *synth_seed;
            cmd_synth(c, synth_out);
        } else if (*train_cmd) {
            cmd_train(resolve("train", train_o));
        } else if (*cv) {
            cmd_cv(resolve("cv", cv_o));
        } else if (*ablate) {
            RunSpec s = resolve("ablate", ablate_o);
            if (ablate_o.manifest.empty()) s.grid = grid;
            cmd_ablate(s);
        } else if (*exp) {
            cmd_export(export_model, parse_export(export_what), export_out);
        } else if (*predict) {
            cmd_predict(predict_model, predict_input, predict_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e);
    }
    return kExitOk;
}

}  // namespace mmgl::cli
