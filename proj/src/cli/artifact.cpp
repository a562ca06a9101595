#include "mmgl/cli/artifact.hpp"

#include "mmgl/data/csv.hpp"
#include "mmgl/error.hpp"

#include <fmt/format.h>

#include <fstream>
#include <map>

namespace mmgl::cli {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
    json data = json::array();
    for (Eigen::Index i = 0; i < m.size(); ++i) data.push_back(m.data()[i]);
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const json& data = j.at("data");
    if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows * cols)) {
        throw DataError(fmt::format("matrix record holds {} values for shape {}x{}", data.size(), rows, cols));
    }
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = data[static_cast<std::size_t>(i)].get<double>();
    return m;
}

namespace {

json row_to_json(const Eigen::RowVectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::RowVectorXd row_from_json(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json meta_to_json(const data::MetaMatrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        rows.push_back(std::vector<int>(m.row(i).data(), m.row(i).data() + m.cols()));
    }
    return {{"cols", m.cols()}, {"rows", std::move(rows)}};
}

data::MetaMatrix meta_from_json(const json& j) {
    const json& rows = j.at("rows");
    data::MetaMatrix m(static_cast<Eigen::Index>(rows.size()), j.at("cols").get<Eigen::Index>());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = rows[i].get<std::vector<int>>();
        if (static_cast<Eigen::Index>(r.size()) != m.cols()) throw DataError("ragged meta cache in model artifact");
        for (std::size_t c = 0; c < r.size(); ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = r[c];
    }
    return m;
}

}  // namespace

std::unique_ptr<train::Model> ModelArtifact::model() const {
    auto m = std::make_unique<train::Model>(schema.modalities, schema.class_names.size(), config, seed);
    std::map<std::string, const Matrix*> stored;
    for (const auto& [name, value] : params) stored[name] = &value;
    for (Param* p : m->all_params()) {
        auto it = stored.find(p->name);
        if (it == stored.end()) throw DataError(fmt::format("model artifact lacks parameter {}", p->name));
        if (it->second->rows() != p->value.rows() || it->second->cols() != p->value.cols()) {
            throw DimensionError(fmt::format("parameter {} is {}x{} in the artifact, the model expects {}x{}", p->name,
                                             it->second->rows(), it->second->cols(), p->value.rows(),
                                             p->value.cols()));
        }
        p->value = *it->second;
    }
    return m;
}

Matrix ModelArtifact::adjacency() const { return model()->graph(h, meta); }

json ModelArtifact::to_json() const {
    json p = json::array();
    for (const auto& [name, value] : params) p.push_back({{"name", name}, {"value", matrix_to_json(value)}});
    return {{"format", "mmgl-model"},
            {"version", kArtifactFormat},
            {"schema", schema.to_json()},
            {"feature_names", feature_names},
            {"meta_levels", meta_levels},
            {"config", config.to_json()},
            {"seed", seed},
            {"preprocessing",
             {{"impute_means", row_to_json(preprocessing.impute.means)},
              {"zscore_mean", row_to_json(preprocessing.zscore.mean)},
              {"zscore_std", row_to_json(preprocessing.zscore.std)}}},
            {"params", std::move(p)},
            {"h_cache", matrix_to_json(h)},
            {"meta_cache", meta_to_json(meta)},
            {"node_labels", node_labels},
            {"node_ids", node_ids},
            {"global_attention", matrix_to_json(global_attention)},
            {"knn_sigma", knn_sigma}};
}

ModelArtifact ModelArtifact::from_json(const json& j) {
    if (j.value("format", "") != "mmgl-model") throw DataError("not an mmgl model artifact");
    if (j.value("version", 0) != kArtifactFormat) {
        throw DataError(fmt::format("unsupported model artifact version {}", j.value("version", 0)));
    }
    ModelArtifact a;
    try {
        a.schema = data::DatasetSchema::from_json(j.at("schema"));
        a.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        a.meta_levels = j.at("meta_levels").get<std::vector<std::vector<std::string>>>();
        a.config = train::TrainConfig::from_json(j.at("config"));
        a.seed = j.at("seed").get<std::uint64_t>();
        const json& pre = j.at("preprocessing");
        a.preprocessing.impute.means = row_from_json(pre.at("impute_means"));
        a.preprocessing.zscore.mean = row_from_json(pre.at("zscore_mean"));
        a.preprocessing.zscore.std = row_from_json(pre.at("zscore_std"));
        for (const json& p : j.at("params")) {
            a.params.emplace_back(p.at("name").get<std::string>(), matrix_from_json(p.at("value")));
        }
        a.h = matrix_from_json(j.at("h_cache"));
        a.meta = meta_from_json(j.at("meta_cache"));
        a.node_labels = j.at("node_labels").get<std::vector<int>>();
        a.node_ids = j.at("node_ids").get<std::vector<std::string>>();
        a.global_attention = matrix_from_json(j.at("global_attention"));
        a.knn_sigma = j.at("knn_sigma").get<double>();
    } catch (const json::exception& e) {
        throw DataError(fmt::format("malformed model artifact: {}", e.what()));
    }
    const auto n = a.h.rows();
    if (static_cast<Eigen::Index>(a.node_labels.size()) != n || a.meta.rows() != n) {
        throw DataError("model artifact caches disagree on the number of graph nodes");
    }
    if (a.h.cols() != static_cast<Eigen::Index>(a.config.d)) {
        throw DimensionError(fmt::format("H cache has {} columns, config says d = {}", a.h.cols(), a.config.d));
    }
    return a;
}

ModelArtifact make_artifact(const train::FitResult& fit, const data::MultiModalDataset& raw,
                            const train::Preprocessing& prep, std::uint64_t seed) {
    const train::Model& model = *fit.model;
    ModelArtifact a;
    a.schema = raw.schema;
    a.feature_names = raw.feature_names;
    a.meta_levels = raw.meta_levels;
    a.config = model.config();
    a.seed = seed;
    a.preprocessing = prep;
    for (const Param* p : fit.model->all_params()) a.params.emplace_back(p->name, p->value);
    a.h = model.fuse(fit.batch.x);
    a.meta = fit.batch.meta;
    a.node_labels.assign(fit.graph_rows.size(), -1);
    std::vector<bool> labelled(fit.batch.size(), false);
    for (std::size_t i : fit.mask) labelled[i] = true;
    for (std::size_t i = 0; i < fit.graph_rows.size(); ++i) {
        if (labelled[i]) a.node_labels[i] = fit.labels[i];
        a.node_ids.push_back(raw.ids.empty() ? std::to_string(fit.graph_rows[i]) : raw.ids[fit.graph_rows[i]]);
    }
    if (auto maps = model.attention(fit.batch.x)) a.global_attention = maff::global_attention_map(*maps);
    model.graph(a.h, a.meta);
    a.knn_sigma = model.last_knn_sigma();
    return a;
}

void save_artifact(const std::filesystem::path& path, const ModelArtifact& a) {
    csv::write_atomic(path, a.to_json().dump(1) + "\n");
}

ModelArtifact load_artifact(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(fmt::format("cannot open model artifact {}", path.string()));
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
    }
    return ModelArtifact::from_json(j);
}

}  // namespace mmgl::cli
