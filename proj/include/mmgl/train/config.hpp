#pragma once

#include "mmgl/maff/maff.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace mmgl::train {

enum class FusionKind { maff, mlp, concat };
// `identity` connects every node only to itself.
enum class GraphKind { learned, knn, meta, identity };
enum class EvalMode { transductive, inductive };
enum class PhaseALoss { total, graph_only };
enum class ImputeMode { global, per_fold };

FusionKind parse_fusion(std::string_view s);
GraphKind parse_graph(std::string_view s);
EvalMode parse_eval_mode(std::string_view s);
PhaseALoss parse_phase_a_loss(std::string_view s);
ImputeMode parse_impute(std::string_view s);
std::string_view to_string(FusionKind k);
std::string_view to_string(GraphKind k);
std::string_view to_string(EvalMode m);
std::string_view to_string(PhaseALoss p);
std::string_view to_string(ImputeMode m);

struct TrainConfig {
    double lr = 1e-2;
    std::size_t epochs = 300;
    double lambda = 1.0;
    double alpha = 0.5;
    double beta = 0.5;

    std::size_t d_f = 16;
    std::size_t d = 16;
    std::size_t d_a = 16;
    std::size_t d_h = 16;
    std::size_t heads = 4;
    maff::AttentionAxis attention_axis = maff::AttentionAxis::column;

    EvalMode eval_mode = EvalMode::transductive;
    PhaseALoss phase_a_loss = PhaseALoss::total;
    ImputeMode impute = ImputeMode::global;

    FusionKind fusion = FusionKind::maff;
    GraphKind graph = GraphKind::learned;
    std::size_t knn_k = 10;
    // RBF width; <= 0 selects the mean pairwise distance of H.
    double knn_sigma = 0.0;
    std::size_t meta_threshold = 1;

    double dropout = 0.0;
    // Early stopping on held-out accuracy; 0 disables it.
    std::size_t patience = 0;
    double validation_fraction = 0.1;

    std::size_t folds = 10;
    std::uint64_t seed = 0;

    void validate() const;
    maff::MaffConfig maff_config() const;

    nlohmann::json to_json() const;
    // Keys may use '-' or '_'; unknown keys are rejected.
    static TrainConfig from_json(const nlohmann::json& j);
};

TrainConfig load_config(const std::filesystem::path& path);

}  // namespace mmgl::train
