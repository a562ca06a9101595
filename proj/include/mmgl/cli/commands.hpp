#pragma once

#include "mmgl/data/synth.hpp"
#include "mmgl/train/config.hpp"
#include "mmgl/train/cv.hpp"

#include <json.hpp>

#include <exception>
#include <filesystem>
#include <string>
#include <vector>

namespace mmgl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

// Process exit code for an error escaping a command.
int exit_code(const std::exception& e);

std::string tool_version();

// A dataset directory holds features.csv and schema.json.
struct DataPaths {
    std::filesystem::path features, schema;
    static DataPaths in(const std::filesystem::path& dir);
    std::vector<std::filesystem::path> files() const { return {features, schema}; }
};

// Inputs of a train / cv / ablate run: enough to repeat it exactly.
struct RunSpec {
    std::string command;
    std::filesystem::path data_dir;
    std::filesystem::path out_dir;
    train::TrainConfig config;
    std::string grid;  // ablate only

    nlohmann::json manifest(const std::string& fingerprint, const std::vector<std::string>& outputs) const;
    // Restores a spec from a manifest and checks the data still hashes the same.
    static RunSpec from_manifest(const std::filesystem::path& path);
};

void cmd_synth(const data::SynthConfig& config, const std::filesystem::path& out_dir);
void cmd_train(const RunSpec& spec);
train::CvResult cmd_cv(const RunSpec& spec);
std::vector<train::AblationRow> cmd_ablate(const RunSpec& spec);

enum class ExportKind { graph, fuse_map, embeddings };
ExportKind parse_export(std::string_view s);
// Graph exports also write the node table next to the edge list, at
// nodes_path(out).
void cmd_export(const std::filesystem::path& model, ExportKind what, const std::filesystem::path& out);
std::filesystem::path nodes_path(const std::filesystem::path& edges);

void cmd_predict(const std::filesystem::path& model, const std::filesystem::path& input,
                 const std::filesystem::path& out);

// Full command line: parses, dispatches and maps errors to exit codes.
int run(int argc, const char* const* argv);

}  // namespace mmgl::cli
