#pragma once

#include "mmgl/data/dataset.hpp"
#include "mmgl/train/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mmgl::cli {

inline constexpr int kArtifactFormat = 1;

// Everything needed to rebuild a trained model and attach new patients to
// its graph: parameters, preprocessing, the fused-feature cache of the
// graph's nodes and their meta codes.
struct ModelArtifact {
    data::DatasetSchema schema;
    std::vector<std::string> feature_names;
    std::vector<std::vector<std::string>> meta_levels;
    train::TrainConfig config;
    std::uint64_t seed = 0;
    train::Preprocessing preprocessing;
    std::vector<std::pair<std::string, Matrix>> params;
    Matrix h;                      // graph nodes x d
    data::MetaMatrix meta;         // graph nodes x meta columns
    std::vector<int> node_labels;  // -1 for unlabelled nodes
    std::vector<std::string> node_ids;
    // Mean attention map over the graph's nodes (empty unless MaFF).
    Matrix global_attention;
    double knn_sigma = 0.0;

    // Rebuilds the model with the stored parameter values.
    std::unique_ptr<train::Model> model() const;
    // Adjacency of the stored graph.
    Matrix adjacency() const;

    nlohmann::json to_json() const;
    static ModelArtifact from_json(const nlohmann::json& j);
};

ModelArtifact make_artifact(const train::FitResult& fit, const data::MultiModalDataset& raw,
                            const train::Preprocessing& prep, std::uint64_t seed);

void save_artifact(const std::filesystem::path& path, const ModelArtifact& a);
ModelArtifact load_artifact(const std::filesystem::path& path);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

}  // namespace mmgl::cli
