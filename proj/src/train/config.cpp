#include "mmgl/train/config.hpp"

#include "mmgl/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace mmgl::train {

using nlohmann::json;

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view what, std::string_view s, const std::pair<std::string_view, E> (&table)[N]) {
    std::string options;
    for (const auto& [name, value] : table) {
        if (name == s) return value;
        options += options.empty() ? "" : ", ";
        options += name;
    }
    throw ConfigError(fmt::format("{} must be one of {{{}}}, got '{}'", what, options, s));
}

template <typename E, std::size_t N>
std::string_view enum_name(E v, const std::pair<std::string_view, E> (&table)[N]) {
    for (const auto& [name, value] : table) {
        if (value == v) return name;
    }
    return "unknown";
}

constexpr std::pair<std::string_view, FusionKind> kFusion[] = {
    {"maff", FusionKind::maff}, {"mlp", FusionKind::mlp}, {"concat", FusionKind::concat}};
constexpr std::pair<std::string_view, GraphKind> kGraph[] = {{"learned", GraphKind::learned},
                                                             {"knn", GraphKind::knn},
                                                             {"meta", GraphKind::meta},
                                                             {"identity", GraphKind::identity}};
constexpr std::pair<std::string_view, EvalMode> kEval[] = {{"transductive", EvalMode::transductive},
                                                           {"inductive", EvalMode::inductive}};
constexpr std::pair<std::string_view, PhaseALoss> kPhase[] = {{"total", PhaseALoss::total},
                                                              {"graph-only", PhaseALoss::graph_only}};
constexpr std::pair<std::string_view, ImputeMode> kImpute[] = {{"global", ImputeMode::global},
                                                               {"per-fold", ImputeMode::per_fold}};

}  // namespace

FusionKind parse_fusion(std::string_view s) { return parse_enum("fusion", s, kFusion); }
GraphKind parse_graph(std::string_view s) { return parse_enum("graph", s, kGraph); }
EvalMode parse_eval_mode(std::string_view s) { return parse_enum("eval-mode", s, kEval); }
PhaseALoss parse_phase_a_loss(std::string_view s) { return parse_enum("phase-a-loss", s, kPhase); }
ImputeMode parse_impute(std::string_view s) { return parse_enum("impute", s, kImpute); }
std::string_view to_string(FusionKind k) { return enum_name(k, kFusion); }
std::string_view to_string(GraphKind k) { return enum_name(k, kGraph); }
std::string_view to_string(EvalMode m) { return enum_name(m, kEval); }
std::string_view to_string(PhaseALoss p) { return enum_name(p, kPhase); }
std::string_view to_string(ImputeMode m) { return enum_name(m, kImpute); }

void TrainConfig::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };
    require(std::isfinite(lr) && lr > 0.0, fmt::format("lr must be > 0, got {}", lr));
    require(epochs >= 1, "epochs must be >= 1");
    require(lambda >= 0.0 && alpha >= 0.0 && beta >= 0.0,
            fmt::format("loss weights must be >= 0 (lambda {}, alpha {}, beta {})", lambda, alpha, beta));
    require(d_f >= 1 && d >= 1 && d_a >= 1 && d_h >= 1, "widths d_f, d, d_a, d_h must be >= 1");
    require(heads >= 1, "heads must be >= 1");
    require(d_f % heads == 0, fmt::format("d_f = {} is not divisible by {} heads", d_f, heads));
    require(knn_k >= 1, "knn_k must be >= 1");
    require(dropout >= 0.0 && dropout < 1.0, fmt::format("dropout must be in [0, 1), got {}", dropout));
    require(validation_fraction > 0.0 && validation_fraction < 1.0, "validation_fraction must be in (0, 1)");
    require(folds >= 2, "folds must be >= 2");
}

maff::MaffConfig TrainConfig::maff_config() const {
    maff::MaffConfig c;
    c.d_f = d_f;
    c.d = d;
    c.heads = heads;
    c.axis = attention_axis;
    return c;
}

json TrainConfig::to_json() const {
    return {{"lr", lr},
            {"epochs", epochs},
            {"lambda", lambda},
            {"alpha", alpha},
            {"beta", beta},
            {"d_f", d_f},
            {"d", d},
            {"d_a", d_a},
            {"d_h", d_h},
            {"heads", heads},
            {"attention_axis", maff::to_string(attention_axis)},
            {"eval_mode", to_string(eval_mode)},
            {"phase_a_loss", to_string(phase_a_loss)},
            {"impute", to_string(impute)},
            {"fusion", to_string(fusion)},
            {"graph", to_string(graph)},
            {"knn_k", knn_k},
            {"knn_sigma", knn_sigma},
            {"meta_threshold", meta_threshold},
            {"dropout", dropout},
            {"patience", patience},
            {"validation_fraction", validation_fraction},
            {"folds", folds},
            {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const json& raw) {
    if (!raw.is_object()) throw ConfigError("training config must be a JSON object");
    json j = json::object();
    for (const auto& [key, value] : raw.items()) {
        std::string k = key;
        std::replace(k.begin(), k.end(), '-', '_');
        j[k] = value;
    }
    TrainConfig c;
    const json defaults = c.to_json();
    std::set<std::string> known;
    for (const auto& [key, value] : defaults.items()) known.insert(key);
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw ConfigError(fmt::format("unknown config key '{}'", key));
    }
    try {
        c.lr = j.value("lr", c.lr);
        c.epochs = j.value("epochs", c.epochs);
        c.lambda = j.value("lambda", c.lambda);
        c.alpha = j.value("alpha", c.alpha);
        c.beta = j.value("beta", c.beta);
        c.d_f = j.value("d_f", c.d_f);
        c.d = j.value("d", c.d);
        c.d_a = j.value("d_a", c.d_a);
        c.d_h = j.value("d_h", c.d_h);
        c.heads = j.value("heads", c.heads);
        if (j.contains("attention_axis")) c.attention_axis = maff::parse_axis(j["attention_axis"].get<std::string>());
        if (j.contains("eval_mode")) c.eval_mode = parse_eval_mode(j["eval_mode"].get<std::string>());
        if (j.contains("phase_a_loss")) c.phase_a_loss = parse_phase_a_loss(j["phase_a_loss"].get<std::string>());
        if (j.contains("impute")) c.impute = parse_impute(j["impute"].get<std::string>());
        if (j.contains("fusion")) c.fusion = parse_fusion(j["fusion"].get<std::string>());
        if (j.contains("graph")) c.graph = parse_graph(j["graph"].get<std::string>());
        c.knn_k = j.value("knn_k", c.knn_k);
        c.knn_sigma = j.value("knn_sigma", c.knn_sigma);
        c.meta_threshold = j.value("meta_threshold", c.meta_threshold);
        c.dropout = j.value("dropout", c.dropout);
        c.patience = j.value("patience", c.patience);
        c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
        c.folds = j.value("folds", c.folds);
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("malformed training config: {}", e.what()));
    }
    c.validate();
    return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open config file {}", path.string()));
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
    }
    return TrainConfig::from_json(j);
}

}  // namespace mmgl::train
