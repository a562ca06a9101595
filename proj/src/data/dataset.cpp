#include "mmgl/data/dataset.hpp"

#include "mmgl/data/csv.hpp"
#include "mmgl/error.hpp"

#include <fmt/format.h>
#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>

namespace mmgl::data {

using nlohmann::json;

ModalitySchema::ModalitySchema(std::vector<Modality> modalities)
    : modalities_(std::move(modalities)) {
    if (modalities_.empty()) throw SchemaError("schema needs at least one modality");
    std::set<std::string> seen;
    for (const Modality& m : modalities_) {
        if (m.dim < 1) throw SchemaError(fmt::format("modality '{}' has dimension 0", m.name));
        if (!seen.insert(m.name).second) {
            throw SchemaError(fmt::format("duplicate modality name '{}'", m.name));
        }
        offsets_.push_back(total_);
        total_ += m.dim;
    }
}

std::vector<std::string> ModalitySchema::names() const {
    std::vector<std::string> out;
    for (const Modality& m : modalities_) out.push_back(m.name);
    return out;
}

bool ModalitySchema::operator==(const ModalitySchema& other) const {
    if (modalities_.size() != other.modalities_.size()) return false;
    for (std::size_t i = 0; i < modalities_.size(); ++i) {
        if (modalities_[i].name != other.modalities_[i].name ||
            modalities_[i].dim != other.modalities_[i].dim) {
            return false;
        }
    }
    return true;
}

json DatasetSchema::to_json() const {
    json mods = json::array();
    for (const Modality& m : modalities.modalities()) {
        mods.push_back({{"name", m.name}, {"dim", m.dim}});
    }
    json j = {{"modalities", mods},
              {"label_column", label_column},
              {"class_names", class_names},
              {"meta_columns", meta_columns}};
    if (!id_column.empty()) j["id_column"] = id_column;
    return j;
}

DatasetSchema DatasetSchema::from_json(const json& j) {
    DatasetSchema s;
    try {
        std::vector<Modality> mods;
        for (const json& m : j.at("modalities")) {
            const auto dim = m.at("dim").get<long long>();
            if (dim < 1) {
                throw SchemaError(fmt::format("modality '{}' has dimension {}",
                                              m.at("name").get<std::string>(), dim));
            }
            mods.push_back({m.at("name").get<std::string>(), static_cast<std::size_t>(dim)});
        }
        s.modalities = ModalitySchema(std::move(mods));
        s.label_column = j.value("label_column", std::string("label"));
        s.class_names = j.value("class_names", std::vector<std::string>{});
        s.meta_columns = j.value("meta_columns", std::vector<std::string>{});
        s.id_column = j.value("id_column", std::string{});
    } catch (const json::exception& e) {
        throw SchemaError(fmt::format("malformed schema: {}", e.what()));
    }
    return s;
}

DatasetSchema load_schema(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(fmt::format("cannot open schema file '{}'", path.string()));
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaError(fmt::format("{}: {}", path.string(), e.what()));
    }
    return DatasetSchema::from_json(j);
}

Matrix MultiModalDataset::modality(std::size_t m) const {
    const auto off = static_cast<Eigen::Index>(schema.modalities.offset(m));
    const auto dim = static_cast<Eigen::Index>(schema.modalities.dim(m));
    return features.middleCols(off, dim);
}

void MultiModalDataset::validate() const {
    const auto n = features.rows();
    if (static_cast<std::size_t>(features.cols()) != schema.modalities.total_dim()) {
        throw SchemaError(fmt::format("features have {} columns, schema expects {}",
                                      features.cols(), schema.modalities.total_dim()));
    }
    if (labels.size() != static_cast<std::size_t>(n)) {
        throw DataError(fmt::format("{} labels for {} patients", labels.size(), n));
    }
    if (missing.rows() != n || missing.cols() != features.cols()) {
        throw DataError("missing-value mask does not match the feature matrix");
    }
    if (meta.rows() != n || static_cast<std::size_t>(meta.cols()) != schema.meta_columns.size()) {
        throw DataError("meta matrix does not match the schema's meta columns");
    }
    const auto c = static_cast<int>(num_classes());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= c) {
            throw DataError(fmt::format("label {} of patient {} outside [0, {})", labels[i], i, c));
        }
    }
    for (Eigen::Index i = 0; i < features.size(); ++i) {
        if (!missing.data()[i] && !std::isfinite(features.data()[i])) {
            throw DataError(fmt::format("non-finite observed value at row {}, column {}",
                                        i / features.cols(), i % features.cols()));
        }
    }
}

namespace {

bool parse_double(const std::string& cell, double& out) {
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    while (first < last && *first == ' ') ++first;
    while (last > first && last[-1] == ' ') --last;
    if (first < last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
}

bool is_blank(const std::string& cell) {
    return std::all_of(cell.begin(), cell.end(), [](char c) { return c == ' '; });
}

struct ColumnRoles {
    long label = -1;
    long id = -1;
    std::vector<long> meta;
    std::vector<long> features;
};

ColumnRoles assign_columns(const csv::Table& t, const DatasetSchema& schema,
                           const std::string& label_column, bool label_required,
                           const std::string& source) {
    ColumnRoles r;
    r.label = t.column(label_column);
    if (r.label < 0 && label_required) {
        throw SchemaError(fmt::format("{}: label column '{}' not found", source, label_column));
    }
    if (!schema.id_column.empty()) r.id = t.column(schema.id_column);
    for (const std::string& m : schema.meta_columns) {
        const long c = t.column(m);
        if (c < 0) throw SchemaError(fmt::format("{}: meta column '{}' not found", source, m));
        r.meta.push_back(c);
    }
    for (long c = 0; c < static_cast<long>(t.header.size()); ++c) {
        if (c == r.label || c == r.id) continue;
        if (std::find(r.meta.begin(), r.meta.end(), c) != r.meta.end()) continue;
        r.features.push_back(c);
    }
    if (r.features.size() != schema.modalities.total_dim()) {
        throw SchemaError(fmt::format(
            "{}: schema modalities sum to {} feature columns but the file has {}", source,
            schema.modalities.total_dim(), r.features.size()));
    }
    return r;
}

void fill_features(const csv::Table& t, const ColumnRoles& roles, const std::string& source,
                   MultiModalDataset& ds) {
    const auto n = static_cast<Eigen::Index>(t.rows.size());
    const auto d = static_cast<Eigen::Index>(roles.features.size());
    ds.features.resize(n, d);
    ds.missing = Mask::Constant(n, d, false);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = t.rows[static_cast<std::size_t>(i)];
        for (Eigen::Index f = 0; f < d; ++f) {
            const std::string& cell = row[static_cast<std::size_t>(roles.features[f])];
            double v = 0.0;
            if (is_blank(cell)) {
                ds.features(i, f) = std::numeric_limits<double>::quiet_NaN();
                ds.missing(i, f) = true;
            } else if (parse_double(cell, v)) {
                ds.features(i, f) = v;
            } else {
                throw ParseError(fmt::format("{}: row {}, column '{}': '{}' is not a number",
                                             source, i + 2,
                                             t.header[static_cast<std::size_t>(roles.features[f])],
                                             cell));
            }
        }
    }
    ds.feature_names.clear();
    for (long c : roles.features) ds.feature_names.push_back(t.header[static_cast<std::size_t>(c)]);
    if (roles.id >= 0) {
        for (const auto& row : t.rows) ds.ids.push_back(row[static_cast<std::size_t>(roles.id)]);
    }
}

}  // namespace

MultiModalDataset load_csv(const std::filesystem::path& features_path,
                           const std::filesystem::path& schema_path,
                           const std::optional<std::string>& label_column) {
    if (!std::filesystem::exists(schema_path)) {
        throw DataError(fmt::format("schema file '{}' does not exist", schema_path.string()));
    }
    if (!std::filesystem::exists(features_path)) {
        throw DataError(fmt::format("features file '{}' does not exist", features_path.string()));
    }
    MultiModalDataset ds;
    ds.schema = load_schema(schema_path);
    if (label_column) ds.schema.label_column = *label_column;
    const csv::Table t = csv::read(features_path);
    const std::string source = features_path.string();
    const ColumnRoles roles = assign_columns(t, ds.schema, ds.schema.label_column, true, source);
    if (t.rows.empty()) throw DataError(fmt::format("{}: no patient rows", source));
    fill_features(t, roles, source, ds);

    // Labels: class names when declared, otherwise integer codes.
    const bool named = !ds.schema.class_names.empty();
    int max_label = -1;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const std::string& cell = t.rows[i][static_cast<std::size_t>(roles.label)];
        int y = -1;
        if (named) {
            auto it = std::find(ds.schema.class_names.begin(), ds.schema.class_names.end(), cell);
            if (it != ds.schema.class_names.end()) y = static_cast<int>(it - ds.schema.class_names.begin());
        }
        if (y < 0) {
            auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), y);
            if (ec != std::errc() || ptr != cell.data() + cell.size()) {
                throw ParseError(fmt::format("{}: row {}: unknown label '{}'", source, i + 2, cell));
            }
            if (y < 0 || (named && y >= static_cast<int>(ds.schema.class_names.size()))) {
                throw DataError(fmt::format("{}: row {}: label {} out of range", source, i + 2, y));
            }
        }
        max_label = std::max(max_label, y);
        ds.labels.push_back(y);
    }
    if (!named) {
        for (int c = 0; c <= max_label; ++c) ds.schema.class_names.push_back(std::to_string(c));
    }

    const auto n = static_cast<Eigen::Index>(t.rows.size());
    ds.meta.resize(n, static_cast<Eigen::Index>(roles.meta.size()));
    ds.meta_levels.assign(roles.meta.size(), {});
    for (std::size_t k = 0; k < roles.meta.size(); ++k) {
        auto& levels = ds.meta_levels[k];
        const auto col = static_cast<std::size_t>(roles.meta[k]);
        for (const auto& row : t.rows) {
            if (!is_blank(row[col])) levels.push_back(row[col]);
        }
        std::sort(levels.begin(), levels.end());
        levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
        for (Eigen::Index i = 0; i < n; ++i) {
            const std::string& cell = t.rows[static_cast<std::size_t>(i)][col];
            int code = -1;
            if (!is_blank(cell)) {
                code = static_cast<int>(std::lower_bound(levels.begin(), levels.end(), cell) - levels.begin());
            }
            ds.meta(i, static_cast<Eigen::Index>(k)) = code;
        }
    }
    ds.validate();
    return ds;
}

MultiModalDataset load_unlabelled_csv(const std::filesystem::path& features_path,
                                      const DatasetSchema& schema,
                                      const std::vector<std::string>& feature_names,
                                      const std::vector<std::vector<std::string>>& meta_levels) {
    if (!std::filesystem::exists(features_path)) {
        throw DataError(fmt::format("input file '{}' does not exist", features_path.string()));
    }
    MultiModalDataset ds;
    ds.schema = schema;
    const csv::Table t = csv::read(features_path);
    const std::string source = features_path.string();
    const ColumnRoles roles = assign_columns(t, schema, schema.label_column, false, source);
    fill_features(t, roles, source, ds);
    if (!feature_names.empty() && ds.feature_names != feature_names) {
        throw SchemaError(fmt::format("{}: feature columns differ from the training data", source));
    }
    const auto n = static_cast<Eigen::Index>(t.rows.size());
    ds.labels.assign(static_cast<std::size_t>(n), 0);
    ds.meta.resize(n, static_cast<Eigen::Index>(roles.meta.size()));
    ds.meta_levels = meta_levels;
    for (std::size_t k = 0; k < roles.meta.size(); ++k) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const std::string& cell = t.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(roles.meta[k])];
            int code = -1;
            if (k < meta_levels.size()) {
                auto it = std::find(meta_levels[k].begin(), meta_levels[k].end(), cell);
                if (it != meta_levels[k].end()) code = static_cast<int>(it - meta_levels[k].begin());
            }
            ds.meta(i, static_cast<Eigen::Index>(k)) = code;
        }
    }
    return ds;
}

void write_dataset(const MultiModalDataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::string out;
    std::vector<std::string> header;
    if (!ds.schema.id_column.empty()) header.push_back(ds.schema.id_column);
    header.insert(header.end(), ds.feature_names.begin(), ds.feature_names.end());
    header.insert(header.end(), ds.schema.meta_columns.begin(), ds.schema.meta_columns.end());
    header.push_back(ds.schema.label_column);
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) out += ',';
        out += csv::escape(header[i]);
    }
    out += '\n';
    for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
        if (!ds.schema.id_column.empty()) {
            out += csv::escape(ds.ids.at(static_cast<std::size_t>(i)));
            out += ',';
        }
        for (Eigen::Index f = 0; f < ds.features.cols(); ++f) {
            if (!ds.missing(i, f)) out += fmt::format("{}", ds.features(i, f));
            out += ',';
        }
        for (Eigen::Index k = 0; k < ds.meta.cols(); ++k) {
            const int code = ds.meta(i, k);
            if (code >= 0) out += csv::escape(ds.meta_levels.at(static_cast<std::size_t>(k)).at(static_cast<std::size_t>(code)));
            out += ',';
        }
        out += csv::escape(ds.schema.class_names.at(static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])));
        out += '\n';
    }
    csv::write_atomic(dir / "features.csv", out);
    csv::write_atomic(dir / "schema.json", ds.schema.to_json().dump(2) + "\n");
}

std::string fingerprint(const std::vector<std::filesystem::path>& files) {
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("SHA-256 initialisation failed");
    }
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        if (!in) {
            EVP_MD_CTX_free(ctx);
            throw DataError(fmt::format("cannot open '{}'", f.string()));
        }
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        EVP_DigestUpdate(ctx, bytes.data(), bytes.size());
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

}  // namespace mmgl::data
