#pragma once

#include "mmgl/data/dataset.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mmgl::data {

struct SynthModality {
    std::string name;
    std::size_t dim = 8;
    // center_groups[c] is the center shared by class c in this modality.
    // Classes with equal group ids are indistinguishable here; all-equal ids
    // make the modality carry no class signal. Empty means one group per
    // class.
    std::vector<int> center_groups;
};

struct SynthConfig {
    std::size_t num_patients = 300;
    std::size_t num_classes = 3;
    // Optional exact per-class counts (must sum to num_patients).
    std::vector<std::size_t> class_counts;
    std::vector<std::string> class_names;
    std::vector<SynthModality> modalities;
    // Distance scale of the class centers.
    double separation = 2.0;
    // Isotropic noise standard deviation around each center.
    double noise = 1.0;
    // Probability that any single feature value is missing.
    double missing_rate = 0.0;
    // Discrete meta columns: each equals the class code with probability
    // meta_agreement, otherwise a uniformly random level.
    std::size_t meta_columns = 2;
    std::size_t meta_levels = 3;
    double meta_agreement = 0.7;
    std::uint64_t seed = 1;

    nlohmann::json to_json() const;
    static SynthConfig from_json(const nlohmann::json& j);
};

// "default", "complementary" or "tadpole-like".
SynthConfig synth_preset(std::string_view name);

struct SynthOutput {
    MultiModalDataset dataset;
    // centers[m] is num_classes x d_m: the mean of class c in modality m.
    std::vector<Matrix> centers;
};

SynthOutput synth_generate_with_centers(const SynthConfig& config);
MultiModalDataset synth_generate(const SynthConfig& config);

}  // namespace mmgl::data
