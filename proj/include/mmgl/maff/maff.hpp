#pragma once

#include "mmgl/data/dataset.hpp"
#include "mmgl/numcore/tape.hpp"

#include <cstdint>
#include <string_view>
#include <vector>

namespace mmgl::maff {

// Which index the attention softmax normalizes over. `column` normalizes
// over the query modality i for each key modality j, so every column of P
// sums to one; `row` is the usual normalization over keys.
enum class AttentionAxis { column, row };

AttentionAxis parse_axis(std::string_view s);
std::string_view to_string(AttentionAxis a);

struct MaffConfig {
    std::size_t d_f = 16;
    std::size_t d = 16;
    std::size_t heads = 4;
    AttentionAxis axis = AttentionAxis::column;
};

struct ModalityWeights {
    Param wq;  // d_m x d_f
    Param wk;  // d_m x d_f
    Param wv;  // d_m x d_f
    Param wm;  // d_f x d_f
};

struct MaffParams {
    std::vector<ModalityWeights> modalities;
    Param wh{"maff.W_h", Matrix()};  // M*d_f x d
    std::size_t heads = 1;
    AttentionAxis axis = AttentionAxis::column;

    static MaffParams init(const data::ModalitySchema& schema, const MaffConfig& config,
                           std::uint64_t seed);

    std::size_t num_modalities() const { return modalities.size(); }
    std::size_t input_dim(std::size_t m) const;
    std::size_t total_input_dim() const;
    std::size_t d_f() const;
    std::size_t d() const { return static_cast<std::size_t>(wh.value.cols()); }
    std::size_t head_width() const { return d_f() / heads; }
    double tau() const;

    std::vector<Param*> params();
    void validate() const;
};

struct Projection {
    std::vector<Eigen::VectorXd> q, k, v;
};

// Per-modality q^m = W_Q^mT x^m (likewise k, v) for one patient row of
// width sum(d_m).
Projection project(const Eigen::VectorXd& x, const MaffParams& params);

// S[i][j] = q^i . k^j / tau, normalized along `axis`.
Matrix attention_map(const std::vector<Eigen::VectorXd>& q, const std::vector<Eigen::VectorXd>& k,
                     double tau, AttentionAxis axis = AttentionAxis::column);

struct FuseOneResult {
    Eigen::VectorXd h;
    std::vector<Matrix> head_maps;  // one M x M map per head
    Matrix map() const;             // mean over heads
};

FuseOneResult fuse_one(const Eigen::VectorXd& x, const MaffParams& params);

// Per-patient, per-head maps of a batch. Row n of `data` holds patient n's
// maps flattened as head * M * M + i * M + j.
struct AttentionMaps {
    std::size_t modalities = 0;
    std::size_t heads = 0;
    Matrix data;

    std::size_t patients() const { return static_cast<std::size_t>(data.rows()); }
    Matrix at(std::size_t patient, std::size_t head) const;
    Matrix patient_mean(std::size_t patient) const;  // mean over heads
};

struct FuseBatch {
    Var h;  // N x d
    AttentionMaps maps;
};

// Differentiable fusion of an N x sum(d_m) feature block. Parameters are
// bound as tape params when `trainable`, as constants otherwise.
FuseBatch fuse_batch(Tape& tape, Var x, MaffParams& params, bool trainable);

struct FuseBatchValue {
    Matrix h;
    AttentionMaps maps;
};
FuseBatchValue fuse_batch(const Matrix& x, const MaffParams& params);

// Mean over heads, then over patients.
Matrix global_attention_map(const AttentionMaps& maps);
Matrix global_attention_map(const std::vector<Matrix>& per_patient);

}  // namespace mmgl::maff
