#include "mmgl/train/model.hpp"

#include "mmgl/error.hpp"
#include "mmgl/numcore/init.hpp"
#include "mmgl/numcore/ops.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace mmgl::train {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

GraphBatch GraphBatch::subset(std::span<const std::size_t> rows) const {
    GraphBatch out;
    out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
    out.meta.resize(static_cast<Eigen::Index>(rows.size()), meta.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.x.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(rows[r]));
        if (meta.cols() > 0) out.meta.row(static_cast<Eigen::Index>(r)) = meta.row(static_cast<Eigen::Index>(rows[r]));
    }
    return out;
}

LossTerms total_loss(Var logits, std::span<const int> labels, std::span<const std::size_t> mask,
                     Var h, Var a, double lambda, double alpha, double beta) {
    LossTerms t;
    t.task = num::cross_entropy_masked(logits, labels, mask);
    agl::GraphLoss g = agl::graph_loss(h, a, alpha, beta);
    t.smooth = g.smooth;
    t.con = g.con;
    t.r = g.r;
    t.graph = g.total;
    const Var terms[] = {t.task, t.graph};
    const double weights[] = {1.0, lambda};
    t.total = num::combine(terms, weights);
    return t;
}

Model::Model(const data::ModalitySchema& schema, std::size_t classes, const TrainConfig& config,
             std::uint64_t seed)
    : schema_(schema), classes_(classes), config_(config) {
    config_.validate();
    if (classes < 2) throw DataError(fmt::format("classification needs at least 2 classes, got {}", classes));
    const auto d_in = static_cast<Eigen::Index>(schema.total_dim());
    const auto d = static_cast<Eigen::Index>(config.d);
    std::mt19937_64 fusion_rng(derive_seed(seed, 1));
    switch (config.fusion) {
        case FusionKind::maff:
            maff = maff::MaffParams::init(schema, config.maff_config(), derive_seed(seed, 1));
            break;
        case FusionKind::mlp:
            mlp_w1 = Param("mlp.W1", glorot_uniform(d_in, d, fusion_rng));
            mlp_w2 = Param("mlp.W2", glorot_uniform(d, d, fusion_rng));
            break;
        case FusionKind::concat:
            concat_w = Param("concat.W", glorot_uniform(d_in, d, fusion_rng));
            break;
    }
    if (config.graph == GraphKind::learned) agl = agl::AglParams::init(config.d, config.d_a, derive_seed(seed, 2));
    gcn = gcn::GcnParams::init(config.d, config.d_h, classes, derive_seed(seed, 3));
    rng.seed(derive_seed(seed, 4));
}

std::vector<Param*> Model::fusion_params() {
    switch (config_.fusion) {
        case FusionKind::maff: return maff.params();
        case FusionKind::mlp: return {&mlp_w1, &mlp_w2};
        case FusionKind::concat: return {&concat_w};
    }
    return {};
}

std::vector<Param*> Model::graph_params() {
    if (config_.graph == GraphKind::learned) return agl.params();
    return {};
}

std::vector<Param*> Model::gcn_params() { return gcn.params(); }

std::vector<Param*> Model::all_params() {
    std::vector<Param*> out = fusion_params();
    for (Param* p : graph_params()) out.push_back(p);
    for (Param* p : gcn_params()) out.push_back(p);
    return out;
}

Var Model::fuse(Tape& tape, Var x, bool trainable, std::optional<maff::AttentionMaps>* maps) {
    auto bind = [&](Param& p) { return trainable ? tape.param(p) : tape.constant(p.value); };
    switch (config_.fusion) {
        case FusionKind::maff: {
            maff::FuseBatch fb = maff::fuse_batch(tape, x, maff, trainable);
            if (maps) *maps = std::move(fb.maps);
            return fb.h;
        }
        case FusionKind::mlp:
            return num::matmul(num::relu(num::matmul(x, bind(mlp_w1))), bind(mlp_w2));
        case FusionKind::concat:
            return num::matmul(x, bind(concat_w));
    }
    throw UsageError("unknown fusion kind");
}

Var Model::build_graph(Tape& tape, Var h, const data::MetaMatrix& meta, bool trainable) {
    const Eigen::Index n = h.rows();
    switch (config_.graph) {
        case GraphKind::learned:
            return agl::learned_graph(tape, h, agl, trainable);
        case GraphKind::knn: {
            if (n < 2) return tape.constant(Matrix::Identity(n, n));
            last_sigma_ = config_.knn_sigma > 0.0 ? config_.knn_sigma : agl::mean_pairwise_distance(h.value());
            if (!(last_sigma_ > 0.0)) last_sigma_ = 1.0;
            const std::size_t k = std::min<std::size_t>(config_.knn_k, static_cast<std::size_t>(n - 1));
            return tape.constant(agl::knn_graph_rbf(h.value(), k, last_sigma_).a);
        }
        case GraphKind::meta:
            if (meta.cols() == 0) throw ConfigError("graph 'meta' needs meta columns in the dataset schema");
            return tape.constant(agl::meta_graph(meta, config_.meta_threshold).a);
        case GraphKind::identity:
            return tape.constant(Matrix::Identity(n, n));
    }
    throw UsageError("unknown graph kind");
}

Model::Forward Model::forward_graph(Tape& tape, const GraphBatch& batch, Trainable trainable) {
    if (batch.x.cols() != static_cast<Eigen::Index>(schema_.total_dim())) {
        throw DimensionError(fmt::format("batch has {} feature columns, the model expects {}",
                                         batch.x.cols(), schema_.total_dim()));
    }
    Forward f;
    f.h = fuse(tape, tape.constant(batch.x), trainable.fusion, &f.maps);
    f.a = build_graph(tape, f.h, batch.meta, trainable.graph);
    return f;
}

Model::Forward Model::forward(Tape& tape, const GraphBatch& batch, Trainable trainable, bool training) {
    Forward f = forward_graph(tape, batch, trainable);
    f.a_norm = gcn::normalize_adj(f.a, gcn::needs_self_loops(f.a.value()));
    gcn::ForwardOptions opts;
    if (training && config_.dropout > 0.0) {
        opts.dropout = config_.dropout;
        opts.rng = &rng;
    }
    f.logits = gcn::gcn_forward(tape, f.h, f.a_norm, gcn, trainable.gcn, opts);
    return f;
}

Matrix Model::fuse(const Matrix& x) const {
    Tape t;
    return const_cast<Model*>(this)->fuse(t, t.constant(x), false, nullptr).value();
}

std::optional<maff::AttentionMaps> Model::attention(const Matrix& x) const {
    if (config_.fusion != FusionKind::maff) return std::nullopt;
    return maff::fuse_batch(x, maff).maps;
}

Matrix Model::graph(const Matrix& h, const data::MetaMatrix& meta) const {
    Tape t;
    return const_cast<Model*>(this)->build_graph(t, t.constant(h), meta, false).value();
}

Matrix Model::logits(const Matrix& h, const Matrix& a) const {
    return gcn::gcn_forward(h, gcn::normalize_adj(a, gcn::needs_self_loops(a)), gcn);
}

Matrix Model::predict_proba(const GraphBatch& batch) const {
    Tape t;
    Forward f = const_cast<Model*>(this)->forward(t, batch, {}, false);
    return gcn::class_probabilities(f.logits.value());
}

namespace {

void require_finite(const LossTerms& t, std::size_t epoch, const char* phase) {
    const std::pair<const char*, Var> terms[] = {
        {"L_t (task)", t.task}, {"L_smooth", t.smooth}, {"L_con", t.con}, {"L_r", t.r}, {"L (total)", t.total}};
    for (const auto& [name, v] : terms) {
        const double x = v.scalar();
        if (!std::isfinite(x)) {
            throw NumericalError(fmt::format("training diverged at epoch {} ({}): {} = {}", epoch + 1,
                                             phase, name, x));
        }
    }
}

std::vector<Matrix> snapshot(const std::vector<Param*>& ps) {
    std::vector<Matrix> out;
    out.reserve(ps.size());
    for (const Param* p : ps) out.push_back(p->value);
    return out;
}

void require_unchanged(const std::vector<Param*>& ps, const std::vector<Matrix>& before, const char* phase) {
    for (std::size_t i = 0; i < ps.size(); ++i) {
        if (ps[i]->value != before[i]) {
            throw UsageError(fmt::format("{} changed during {} although it is frozen there", ps[i]->name, phase));
        }
    }
}

void step(AdamState& state, std::vector<Param*>& params, double lr, std::size_t epoch, const char* phase) {
    if (params.empty()) return;
    adam_step(state, params, lr);
    for (const Param* p : params) {
        if (!all_finite(p->value)) {
            throw NumericalError(fmt::format("training diverged at epoch {} ({}): {} became non-finite",
                                             epoch + 1, phase, p->name));
        }
    }
}

}  // namespace

EpochLosses train_epoch(Model& model, const GraphBatch& batch, std::span<const int> labels,
                        std::span<const std::size_t> mask) {
    const TrainConfig& cfg = model.config();
    const std::size_t epoch = model.epochs_done;

    // Phase A: fusion and graph learner, classifier frozen.
    {
        std::vector<Param*> active = model.fusion_params();
        for (Param* p : model.graph_params()) active.push_back(p);
        std::vector<Param*> frozen = model.gcn_params();
        const std::vector<Matrix> before = snapshot(frozen);
        zero_grads(active);
        Tape tape;
        Var loss;
        if (cfg.phase_a_loss == PhaseALoss::graph_only) {
            Model::Forward f = model.forward_graph(tape, batch, {true, true, false});
            agl::GraphLoss g = agl::graph_loss(f.h, f.a, cfg.alpha, cfg.beta);
            const std::pair<const char*, Var> terms[] = {
                {"L_smooth", g.smooth}, {"L_con", g.con}, {"L_r", g.r}};
            for (const auto& [name, v] : terms) {
                if (!std::isfinite(v.scalar())) {
                    throw NumericalError(fmt::format("training diverged at epoch {} (phase A): {} = {}",
                                                     epoch + 1, name, v.scalar()));
                }
            }
            loss = g.total;
        } else {
            Model::Forward f = model.forward(tape, batch, {true, true, false}, true);
            LossTerms t = total_loss(f.logits, labels, mask, f.h, f.a, cfg.lambda, cfg.alpha, cfg.beta);
            require_finite(t, epoch, "phase A");
            loss = t.total;
        }
        tape.backward(loss);
        step(model.adam_a, active, cfg.lr, epoch, "phase A");
        require_unchanged(frozen, before, "phase A");
    }

    // Phase B: graph learner and classifier, fusion frozen.
    EpochLosses out;
    {
        std::vector<Param*> active = model.graph_params();
        for (Param* p : model.gcn_params()) active.push_back(p);
        std::vector<Param*> frozen = model.fusion_params();
        const std::vector<Matrix> before = snapshot(frozen);
        zero_grads(active);
        Tape tape;
        Model::Forward f = model.forward(tape, batch, {false, true, true}, true);
        LossTerms t = total_loss(f.logits, labels, mask, f.h, f.a, cfg.lambda, cfg.alpha, cfg.beta);
        require_finite(t, epoch, "phase B");
        out = {t.task.scalar(), t.smooth.scalar(), t.con.scalar(), t.r.scalar(), t.total.scalar()};
        tape.backward(t.total);
        step(model.adam_b, active, cfg.lr, epoch, "phase B");
        require_unchanged(frozen, before, "phase B");
    }
    ++model.epochs_done;
    return out;
}

Eigen::RowVectorXd predict_inductive(const Model& model, const Matrix& h_train,
                                     const data::MetaMatrix& meta_train,
                                     const Eigen::RowVectorXd& x_new,
                                     const Eigen::RowVectorXi& meta_new) {
    if (x_new.size() != static_cast<Eigen::Index>(model.schema().total_dim())) {
        throw DimensionError(fmt::format("new patient has {} features, the model expects {}", x_new.size(),
                                         model.schema().total_dim()));
    }
    const Eigen::Index n = h_train.rows();
    Matrix h(n + 1, h_train.cols());
    h.topRows(n) = h_train;
    h.row(n) = model.fuse(Matrix(x_new));
    data::MetaMatrix meta(n + 1, meta_train.cols());
    if (meta_train.cols() > 0) {
        if (meta_new.size() != meta_train.cols()) {
            throw DimensionError(fmt::format("new patient has {} meta values, expected {}", meta_new.size(),
                                             meta_train.cols()));
        }
        meta.topRows(n) = meta_train;
        meta.row(n) = meta_new;
    }
    const Matrix a = model.graph(h, meta);
    const Matrix logits = model.logits(h, a);
    return gcn::class_probabilities(Matrix(logits.row(n))).row(0);
}

}  // namespace mmgl::train
