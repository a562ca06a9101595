#pragma once

#include "mmgl/agl/agl.hpp"
#include "mmgl/data/dataset.hpp"
#include "mmgl/gcn/gcn.hpp"
#include "mmgl/maff/maff.hpp"
#include "mmgl/numcore/adam.hpp"
#include "mmgl/train/config.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace mmgl::train {

// splitmix64 of (base, stream): independent seeds for folds and modules.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

// Nodes of one patient graph: preprocessed features and meta codes.
struct GraphBatch {
    Matrix x;
    data::MetaMatrix meta;

    std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
    GraphBatch subset(std::span<const std::size_t> rows) const;
};

struct LossTerms {
    Var task, smooth, con, r, graph, total;
};

// L_t + lambda * (L_smooth + alpha L_con + beta L_r).
LossTerms total_loss(Var logits, std::span<const int> labels, std::span<const std::size_t> mask,
                     Var h, Var a, double lambda, double alpha, double beta);

struct EpochLosses {
    double task = 0.0, smooth = 0.0, con = 0.0, r = 0.0, total = 0.0;
};

class Model {
public:
    Model(const data::ModalitySchema& schema, std::size_t classes, const TrainConfig& config,
          std::uint64_t seed);
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    struct Trainable {
        bool fusion = false, graph = false, gcn = false;
    };
    struct Forward {
        Var h, a, a_norm, logits;
        std::optional<maff::AttentionMaps> maps;
    };
    // `training` enables dropout.
    Forward forward(Tape& tape, const GraphBatch& batch, Trainable trainable, bool training);
    // Fusion and graph only, for losses that do not touch the classifier.
    Forward forward_graph(Tape& tape, const GraphBatch& batch, Trainable trainable);

    Matrix fuse(const Matrix& x) const;
    std::optional<maff::AttentionMaps> attention(const Matrix& x) const;
    Matrix graph(const Matrix& h, const data::MetaMatrix& meta) const;
    Matrix logits(const Matrix& h, const Matrix& a) const;
    Matrix predict_proba(const GraphBatch& batch) const;

    std::vector<Param*> fusion_params();
    std::vector<Param*> graph_params();
    std::vector<Param*> gcn_params();
    std::vector<Param*> all_params();

    const TrainConfig& config() const { return config_; }
    std::size_t num_classes() const { return classes_; }
    const data::ModalitySchema& schema() const { return schema_; }
    double last_knn_sigma() const { return last_sigma_; }

    maff::MaffParams maff;
    Param mlp_w1{"mlp.W1", Matrix()};
    Param mlp_w2{"mlp.W2", Matrix()};
    Param concat_w{"concat.W", Matrix()};
    agl::AglParams agl;
    gcn::GcnParams gcn;

    // One optimizer state per training phase.
    AdamState adam_a;
    AdamState adam_b;
    std::mt19937_64 rng;
    std::size_t epochs_done = 0;

private:
    Var fuse(Tape& tape, Var x, bool trainable, std::optional<maff::AttentionMaps>* maps);
    Var build_graph(Tape& tape, Var h, const data::MetaMatrix& meta, bool trainable);

    data::ModalitySchema schema_;
    std::size_t classes_;
    TrainConfig config_;
    mutable double last_sigma_ = 0.0;
};

// One epoch: phase A updates fusion + graph weights, phase B graph + GCN.
// Returns the loss breakdown of phase B's forward pass.
EpochLosses train_epoch(Model& model, const GraphBatch& batch, std::span<const int> labels,
                        std::span<const std::size_t> mask);

// Class distribution of a patient attached to an already trained graph as
// one extra node. `h_train` is the fused features of the graph's nodes.
Eigen::RowVectorXd predict_inductive(const Model& model, const Matrix& h_train,
                                     const data::MetaMatrix& meta_train,
                                     const Eigen::RowVectorXd& x_new,
                                     const Eigen::RowVectorXi& meta_new);

}  // namespace mmgl::train
