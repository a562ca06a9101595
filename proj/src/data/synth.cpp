#include "mmgl/data/synth.hpp"

#include "mmgl/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

namespace mmgl::data {

using nlohmann::json;

json SynthConfig::to_json() const {
    json mods = json::array();
    for (const SynthModality& m : modalities) {
        mods.push_back({{"name", m.name}, {"dim", m.dim}, {"center_groups", m.center_groups}});
    }
    return {{"num_patients", num_patients},
            {"num_classes", num_classes},
            {"class_counts", class_counts},
            {"class_names", class_names},
            {"modalities", mods},
            {"separation", separation},
            {"noise", noise},
            {"missing_rate", missing_rate},
            {"meta_columns", meta_columns},
            {"meta_levels", meta_levels},
            {"meta_agreement", meta_agreement},
            {"seed", seed}};
}

SynthConfig SynthConfig::from_json(const json& j) {
    SynthConfig c;
    if (j.contains("preset")) c = synth_preset(j.at("preset").get<std::string>());
    try {
        c.num_patients = j.value("num_patients", c.num_patients);
        c.num_classes = j.value("num_classes", c.num_classes);
        c.class_counts = j.value("class_counts", c.class_counts);
        c.class_names = j.value("class_names", c.class_names);
        if (j.contains("modalities")) {
            c.modalities.clear();
            for (const json& m : j.at("modalities")) {
                SynthModality sm;
                sm.name = m.at("name").get<std::string>();
                sm.dim = m.at("dim").get<std::size_t>();
                sm.center_groups = m.value("center_groups", std::vector<int>{});
                c.modalities.push_back(std::move(sm));
            }
        }
        c.separation = j.value("separation", c.separation);
        c.noise = j.value("noise", c.noise);
        c.missing_rate = j.value("missing_rate", c.missing_rate);
        c.meta_columns = j.value("meta_columns", c.meta_columns);
        c.meta_levels = j.value("meta_levels", c.meta_levels);
        c.meta_agreement = j.value("meta_agreement", c.meta_agreement);
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("malformed synthetic config: {}", e.what()));
    }
    return c;
}

SynthConfig synth_preset(std::string_view name) {
    SynthConfig c;
    if (name == "default") {
        c.modalities = {{"imaging", 12, {}}, {"clinical", 8, {}}, {"demographic", 4, {0, 0, 0}}};
        return c;
    }
    if (name == "complementary") {
        // Each modality isolates one class from the other two; only the
        // combination of all three separates every class.
        c.num_patients = 600;
        c.modalities = {{"imaging", 16, {0, 0, 1}},
                        {"biomarker", 12, {1, 0, 0}},
                        {"cognitive", 8, {0, 1, 0}}};
        c.separation = 2.0;
        c.noise = 1.0;
        return c;
    }
    if (name == "tadpole-like") {
        c.num_patients = 685;
        c.class_counts = {245, 360, 80};
        c.class_names = {"NC", "MCI", "AD"};
        c.modalities = {{"mri", 150, {}},     {"pet", 60, {}},       {"cognitive", 40, {}},
                        {"csf", 16, {}},      {"risk", 20, {0, 0, 1}}, {"clinical", 50, {}},
                        {"demographic", 30, {0, 0, 0}}};
        c.separation = 1.0;
        c.noise = 1.0;
        c.missing_rate = 0.05;
        return c;
    }
    throw ConfigError(fmt::format("unknown synthetic preset '{}'", name));
}

namespace {

void validate(const SynthConfig& c) {
    if (c.num_classes < 1) throw ParameterError("synthetic data needs at least one class");
    if (c.num_patients < c.num_classes) {
        throw ParameterError(fmt::format("{} patients cannot cover {} classes", c.num_patients,
                                         c.num_classes));
    }
    if (c.modalities.empty()) throw ParameterError("synthetic data needs at least one modality");
    if (!(c.separation >= 0.0)) throw ParameterError("separation must be >= 0");
    if (!(c.noise > 0.0)) throw ParameterError("noise must be > 0");
    if (c.missing_rate < 0.0 || c.missing_rate >= 1.0) {
        throw ParameterError("missing_rate must be in [0, 1)");
    }
    if (c.meta_agreement < 0.0 || c.meta_agreement > 1.0) {
        throw ParameterError("meta_agreement must be in [0, 1]");
    }
    if (c.meta_columns > 0 && c.meta_levels < 1) throw ParameterError("meta_levels must be >= 1");
    if (!c.class_counts.empty()) {
        if (c.class_counts.size() != c.num_classes ||
            std::accumulate(c.class_counts.begin(), c.class_counts.end(), std::size_t{0}) !=
                c.num_patients) {
            throw ParameterError("class_counts must list one count per class summing to num_patients");
        }
    }
    if (!c.class_names.empty() && c.class_names.size() != c.num_classes) {
        throw ParameterError("class_names must list one name per class");
    }
    for (const SynthModality& m : c.modalities) {
        if (m.dim < 1) throw ParameterError(fmt::format("modality '{}' has dimension 0", m.name));
        if (!m.center_groups.empty() && m.center_groups.size() != c.num_classes) {
            throw ParameterError(fmt::format("modality '{}': center_groups needs {} entries",
                                             m.name, c.num_classes));
        }
    }
}

}  // namespace

SynthOutput synth_generate_with_centers(const SynthConfig& c) {
    validate(c);
    std::mt19937_64 rng(c.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    const std::size_t classes = c.num_classes;
    std::vector<Modality> mods;
    for (const SynthModality& m : c.modalities) mods.push_back({m.name, m.dim});

    // Class centers: one random unit direction per (modality, group), scaled
    // by the separation.
    SynthOutput out;
    for (const SynthModality& m : c.modalities) {
        std::vector<int> groups = m.center_groups;
        if (groups.empty()) {
            groups.resize(classes);
            std::iota(groups.begin(), groups.end(), 0);
        }
        std::map<int, Eigen::RowVectorXd> by_group;
        for (int g : groups) {
            if (by_group.count(g)) continue;
            Eigen::RowVectorXd dir(static_cast<Eigen::Index>(m.dim));
            for (Eigen::Index k = 0; k < dir.size(); ++k) dir(k) = gauss(rng);
            const double norm = dir.norm();
            if (norm > 0.0) dir /= norm;
            by_group[g] = dir * c.separation;
        }
        Matrix centers(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(m.dim));
        for (std::size_t cls = 0; cls < classes; ++cls) {
            centers.row(static_cast<Eigen::Index>(cls)) = by_group[groups[cls]];
        }
        out.centers.push_back(std::move(centers));
    }

    std::vector<int> labels;
    for (std::size_t cls = 0; cls < classes; ++cls) {
        const std::size_t count = c.class_counts.empty()
                                      ? c.num_patients / classes + (cls < c.num_patients % classes ? 1 : 0)
                                      : c.class_counts[cls];
        labels.insert(labels.end(), count, static_cast<int>(cls));
    }
    std::shuffle(labels.begin(), labels.end(), rng);

    MultiModalDataset& ds = out.dataset;
    ds.schema.modalities = ModalitySchema(mods);
    ds.schema.label_column = "label";
    if (c.class_names.empty()) {
        for (std::size_t cls = 0; cls < classes; ++cls) ds.schema.class_names.push_back(fmt::format("class{}", cls));
    } else {
        ds.schema.class_names = c.class_names;
    }
    for (std::size_t k = 0; k < c.meta_columns; ++k) ds.schema.meta_columns.push_back(fmt::format("meta{}", k));
    ds.schema.id_column = "id";

    const auto n = static_cast<Eigen::Index>(c.num_patients);
    const auto d = static_cast<Eigen::Index>(ds.schema.modalities.total_dim());
    ds.features.resize(n, d);
    ds.missing = Mask::Constant(n, d, false);
    ds.labels = labels;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto cls = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]);
        for (std::size_t m = 0; m < c.modalities.size(); ++m) {
            const auto off = static_cast<Eigen::Index>(ds.schema.modalities.offset(m));
            for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(c.modalities[m].dim); ++k) {
                ds.features(i, off + k) = out.centers[m](cls, k) + c.noise * gauss(rng);
            }
        }
    }
    if (c.missing_rate > 0.0) {
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index f = 0; f < d; ++f) {
                if (unif(rng) < c.missing_rate) ds.missing(i, f) = true;
            }
        }
        // Keep at least one observation per feature.
        for (Eigen::Index f = 0; f < d; ++f) {
            if (ds.missing.col(f).all()) ds.missing(0, f) = false;
        }
        for (Eigen::Index i = 0; i < ds.features.size(); ++i) {
            if (ds.missing.data()[i]) ds.features.data()[i] = std::numeric_limits<double>::quiet_NaN();
        }
    }

    const auto levels = static_cast<int>(c.meta_levels);
    std::uniform_int_distribution<int> level(0, std::max(levels, 1) - 1);
    ds.meta.resize(n, static_cast<Eigen::Index>(c.meta_columns));
    ds.meta_levels.assign(c.meta_columns, {});
    for (std::size_t k = 0; k < c.meta_columns; ++k) {
        for (int l = 0; l < levels; ++l) ds.meta_levels[k].push_back(fmt::format("L{}", l));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = 0; k < ds.meta.cols(); ++k) {
            const bool agree = unif(rng) < c.meta_agreement;
            ds.meta(i, k) = agree ? labels[static_cast<std::size_t>(i)] % levels : level(rng);
        }
    }

    for (std::size_t m = 0; m < c.modalities.size(); ++m) {
        for (std::size_t k = 0; k < c.modalities[m].dim; ++k) {
            ds.feature_names.push_back(fmt::format("{}_{}", c.modalities[m].name, k));
        }
    }
    for (Eigen::Index i = 0; i < n; ++i) ds.ids.push_back(fmt::format("p{:05d}", i));
    ds.validate();
    return out;
}

MultiModalDataset synth_generate(const SynthConfig& config) {
    return synth_generate_with_centers(config).dataset;
}

}  // namespace mmgl::data
