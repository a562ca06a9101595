#pragma once

#include "mmgl/numcore/matrix.hpp"

#include <json.hpp>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mmgl::data {

struct Modality {
    std::string name;
    std::size_t dim = 0;
};

// Ordered list of modalities; feature column f belongs to the modality whose
// [offset, offset + dim) range contains it.
class ModalitySchema {
public:
    ModalitySchema() = default;
    explicit ModalitySchema(std::vector<Modality> modalities);

    std::size_t count() const { return modalities_.size(); }
    const Modality& operator[](std::size_t m) const { return modalities_[m]; }
    const std::vector<Modality>& modalities() const { return modalities_; }
    std::size_t dim(std::size_t m) const { return modalities_[m].dim; }
    std::size_t offset(std::size_t m) const { return offsets_[m]; }
    std::size_t total_dim() const { return total_; }
    std::vector<std::string> names() const;

    bool operator==(const ModalitySchema& other) const;

private:
    std::vector<Modality> modalities_;
    std::vector<std::size_t> offsets_;
    std::size_t total_ = 0;
};

// Contents of the schema file accompanying a features CSV.
struct DatasetSchema {
    ModalitySchema modalities;
    std::string label_column = "label";
    std::vector<std::string> class_names;
    // Discrete columns used only by the meta-feature graph baseline.
    std::vector<std::string> meta_columns;
    // Optional patient identifier column.
    std::string id_column;

    nlohmann::json to_json() const;
    static DatasetSchema from_json(const nlohmann::json& j);
};

DatasetSchema load_schema(const std::filesystem::path& path);

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MetaMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Patients are rows: `features` is N x d_in and modality m occupies the
// column block [offset(m), offset(m) + d_m). Missing entries are flagged in
// `missing` and hold NaN until imputed.
struct MultiModalDataset {
    DatasetSchema schema;
    Matrix features;
    Mask missing;
    std::vector<int> labels;
    // N x (#meta columns) category codes; -1 marks a missing value.
    MetaMatrix meta;
    std::vector<std::vector<std::string>> meta_levels;
    std::vector<std::string> feature_names;
    std::vector<std::string> ids;

    std::size_t num_patients() const { return static_cast<std::size_t>(features.rows()); }
    std::size_t num_classes() const { return schema.class_names.size(); }
    std::size_t num_modalities() const { return schema.modalities.count(); }
    bool has_missing() const { return missing.size() > 0 && missing.any(); }
    Matrix modality(std::size_t m) const;

    // Checks every structural invariant; throws DataError / SchemaError.
    void validate() const;
};

// Loads a features CSV whose columns are split into modalities by the schema.
// `label_column` overrides the schema's label column when set.
MultiModalDataset load_csv(const std::filesystem::path& features_path,
                           const std::filesystem::path& schema_path,
                           const std::optional<std::string>& label_column = std::nullopt);

// Feature rows of unlabelled patients (label column optional) laid out like
// `schema`. Empty cells become NaN and are flagged in `missing`.
MultiModalDataset load_unlabelled_csv(const std::filesystem::path& features_path,
                                      const DatasetSchema& schema,
                                      const std::vector<std::string>& feature_names,
                                      const std::vector<std::vector<std::string>>& meta_levels);

// Writes features.csv and schema.json into `dir`.
void write_dataset(const MultiModalDataset& ds, const std::filesystem::path& dir);

// Content hash (SHA-256, hex) of the given files concatenated.
std::string fingerprint(const std::vector<std::filesystem::path>& files);

}  // namespace mmgl::data
