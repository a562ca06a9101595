#include "mmgl/maff/maff.hpp"

#include "mmgl/error.hpp"
#include "mmgl/numcore/init.hpp"
#include "mmgl/numcore/ops.hpp"

#include <fmt/format.h>

#include <cmath>
#include <random>

namespace mmgl::maff {

AttentionAxis parse_axis(std::string_view s) {
    if (s == "column") return AttentionAxis::column;
    if (s == "row") return AttentionAxis::row;
    throw ConfigError(fmt::format("attention-axis must be 'column' or 'row', got '{}'", s));
}

std::string_view to_string(AttentionAxis a) { return a == AttentionAxis::column ? "column" : "row"; }

MaffParams MaffParams::init(const data::ModalitySchema& schema, const MaffConfig& config,
                            std::uint64_t seed) {
    if (config.heads < 1 || config.d_f < 1 || config.d < 1) {
        throw ParameterError("MaFF widths and head count must be >= 1");
    }
    if (config.d_f % config.heads != 0) {
        throw ParameterError(fmt::format("d_f = {} is not divisible by {} heads", config.d_f,
                                         config.heads));
    }
    std::mt19937_64 rng(seed);
    const auto df = static_cast<Eigen::Index>(config.d_f);
    MaffParams p;
    p.heads = config.heads;
    p.axis = config.axis;
    p.modalities.reserve(schema.count());
    for (std::size_t m = 0; m < schema.count(); ++m) {
        const auto dm = static_cast<Eigen::Index>(schema.dim(m));
        const std::string& name = schema.modalities()[m].name;
        ModalityWeights w;
        w.wq = Param("maff." + name + ".W_Q", glorot_uniform(dm, df, rng));
        w.wk = Param("maff." + name + ".W_K", glorot_uniform(dm, df, rng));
        w.wv = Param("maff." + name + ".W_V", glorot_uniform(dm, df, rng));
        w.wm = Param("maff." + name + ".W_m", glorot_uniform(df, df, rng));
        p.modalities.push_back(std::move(w));
    }
    p.wh = Param("maff.W_h", glorot_uniform(df * static_cast<Eigen::Index>(schema.count()),
                                            static_cast<Eigen::Index>(config.d), rng));
    return p;
}

std::size_t MaffParams::input_dim(std::size_t m) const {
    return static_cast<std::size_t>(modalities.at(m).wq.value.rows());
}

std::size_t MaffParams::total_input_dim() const {
    std::size_t total = 0;
    for (std::size_t m = 0; m < modalities.size(); ++m) total += input_dim(m);
    return total;
}

std::size_t MaffParams::d_f() const {
    return modalities.empty() ? 0 : static_cast<std::size_t>(modalities.front().wq.value.cols());
}

double MaffParams::tau() const {
    return std::sqrt(static_cast<double>(d_f()) / static_cast<double>(heads));
}

std::vector<Param*> MaffParams::params() {
    std::vector<Param*> out;
    for (ModalityWeights& w : modalities) {
        out.push_back(&w.wq);
        out.push_back(&w.wk);
        out.push_back(&w.wv);
        out.push_back(&w.wm);
    }
    out.push_back(&wh);
    return out;
}

void MaffParams::validate() const {
    if (modalities.empty()) throw ParameterError("MaFF needs at least one modality");
    const auto df = static_cast<Eigen::Index>(d_f());
    if (heads < 1 || d_f() % heads != 0) {
        throw ParameterError(fmt::format("d_f = {} is not divisible by {} heads", d_f(), heads));
    }
    for (const ModalityWeights& w : modalities) {
        const Eigen::Index dm = w.wq.value.rows();
        for (const Param* p : {&w.wq, &w.wk, &w.wv}) {
            if (p->value.rows() != dm || p->value.cols() != df) {
                throw DimensionError(fmt::format("{} is {}, expected {}", p->name,
                                                 shape_str(p->value), shape_str(dm, df)));
            }
        }
        if (w.wm.value.rows() != df || w.wm.value.cols() != df) {
            throw DimensionError(fmt::format("{} is {}, expected {}", w.wm.name,
                                             shape_str(w.wm.value), shape_str(df, df)));
        }
    }
    if (wh.value.rows() != df * static_cast<Eigen::Index>(modalities.size())) {
        throw DimensionError(fmt::format("maff.W_h has {} rows, expected {}", wh.value.rows(),
                                         df * static_cast<Eigen::Index>(modalities.size())));
    }
    for (const ModalityWeights& w : modalities) {
        for (const Param* p : {&w.wq, &w.wk, &w.wv, &w.wm}) {
            if (!all_finite(p->value)) throw NumericalError(p->name + " has non-finite entries");
        }
    }
    if (!all_finite(wh.value)) throw NumericalError("maff.W_h has non-finite entries");
}

Projection project(const Eigen::VectorXd& x, const MaffParams& params) {
    if (static_cast<std::size_t>(x.size()) != params.total_input_dim()) {
        throw DimensionError(fmt::format("patient row has {} features, the fusion weights expect {}",
                                         x.size(), params.total_input_dim()));
    }
    Projection out;
    Eigen::Index offset = 0;
    for (const ModalityWeights& w : params.modalities) {
        const Eigen::Index dm = w.wq.value.rows();
        const auto xm = x.segment(offset, dm);
        out.q.push_back(w.wq.value.transpose() * xm);
        out.k.push_back(w.wk.value.transpose() * xm);
        out.v.push_back(w.wv.value.transpose() * xm);
        offset += dm;
    }
    return out;
}

Matrix attention_map(const std::vector<Eigen::VectorXd>& q, const std::vector<Eigen::VectorXd>& k,
                     double tau, AttentionAxis axis) {
    if (!(tau > 0.0)) throw ParameterError(fmt::format("tau must be > 0, got {}", tau));
    if (q.size() != k.size()) {
        throw DimensionError(fmt::format("{} queries but {} keys", q.size(), k.size()));
    }
    const auto m = static_cast<Eigen::Index>(q.size());
    Matrix s(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            s(i, j) = q[static_cast<std::size_t>(i)].dot(k[static_cast<std::size_t>(j)]);
        }
    }
    return axis == AttentionAxis::column ? num::softmax_columns_value(s, tau)
                                         : num::softmax_rows_value(s, tau);
}

Matrix FuseOneResult::map() const {
    Matrix mean = Matrix::Zero(head_maps.front().rows(), head_maps.front().cols());
    for (const Matrix& p : head_maps) mean += p;
    return mean / static_cast<double>(head_maps.size());
}

FuseOneResult fuse_one(const Eigen::VectorXd& x, const MaffParams& params) {
    const Projection proj = project(x, params);
    const std::size_t m_count = params.num_modalities();
    const auto w = static_cast<Eigen::Index>(params.head_width());
    const auto df = static_cast<Eigen::Index>(params.d_f());

    std::vector<Eigen::VectorXd> mixed = proj.v;  // residual term
    FuseOneResult out;
    for (std::size_t head = 0; head < params.heads; ++head) {
        const Eigen::Index start = static_cast<Eigen::Index>(head) * w;
        std::vector<Eigen::VectorXd> qh, kh;
        for (std::size_t m = 0; m < m_count; ++m) {
            qh.push_back(proj.q[m].segment(start, w));
            kh.push_back(proj.k[m].segment(start, w));
        }
        Matrix p = attention_map(qh, kh, params.tau(), params.axis);
        for (std::size_t m = 0; m < m_count; ++m) {
            for (std::size_t j = 0; j < m_count; ++j) {
                mixed[m].segment(start, w) +=
                    p(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(j)) *
                    proj.v[j].segment(start, w);
            }
        }
        out.head_maps.push_back(std::move(p));
    }
    Eigen::VectorXd cat(df * static_cast<Eigen::Index>(m_count));
    for (std::size_t m = 0; m < m_count; ++m) {
        cat.segment(static_cast<Eigen::Index>(m) * df, df) =
            params.modalities[m].wm.value.transpose() * mixed[m];
    }
    out.h = params.wh.value.transpose() * cat;
    return out;
}

Matrix AttentionMaps::at(std::size_t patient, std::size_t head) const {
    const auto m = static_cast<Eigen::Index>(modalities);
    Matrix p(m, m);
    const Eigen::Index base = static_cast<Eigen::Index>(head) * m * m;
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) p(i, j) = data(static_cast<Eigen::Index>(patient), base + i * m + j);
    }
    return p;
}

Matrix AttentionMaps::patient_mean(std::size_t patient) const {
    Matrix mean = Matrix::Zero(static_cast<Eigen::Index>(modalities), static_cast<Eigen::Index>(modalities));
    for (std::size_t h = 0; h < heads; ++h) mean += at(patient, h);
    return mean / static_cast<double>(heads);
}

FuseBatch fuse_batch(Tape& tape, Var x, MaffParams& params, bool trainable) {
    if (static_cast<std::size_t>(x.cols()) != params.total_input_dim()) {
        throw DimensionError(fmt::format("feature block is {}, the fusion weights expect {} columns",
                                         shape_str(x.value()), params.total_input_dim()));
    }
    auto bind = [&](Param& p) { return trainable ? tape.param(p) : tape.constant(p.value); };
    const std::size_t m_count = params.num_modalities();
    const auto mi = static_cast<Eigen::Index>(m_count);
    const auto w = static_cast<Eigen::Index>(params.head_width());
    const double tau = params.tau();
    const bool by_column = params.axis == AttentionAxis::column;

    std::vector<Var> q, k, v;
    Eigen::Index offset = 0;
    for (ModalityWeights& mw : params.modalities) {
        const Eigen::Index dm = mw.wq.value.rows();
        Var xm = num::slice_cols(x, offset, dm);
        q.push_back(num::matmul(xm, bind(mw.wq)));
        k.push_back(num::matmul(xm, bind(mw.wk)));
        v.push_back(num::matmul(xm, bind(mw.wv)));
        offset += dm;
    }

    FuseBatch out;
    out.maps.modalities = m_count;
    out.maps.heads = params.heads;
    out.maps.data.resize(x.rows(), static_cast<Eigen::Index>(params.heads) * mi * mi);

    std::vector<std::vector<Var>> head_parts(m_count);
    for (std::size_t head = 0; head < params.heads; ++head) {
        const Eigen::Index start = static_cast<Eigen::Index>(head) * w;
        std::vector<Var> qh, kh, vh;
        for (std::size_t m = 0; m < m_count; ++m) {
            qh.push_back(num::slice_cols(q[m], start, w));
            kh.push_back(num::slice_cols(k[m], start, w));
            vh.push_back(num::slice_cols(v[m], start, w));
        }
        // Column mode: block b holds, for key j = b, the scores over queries
        // i; row mode: for query i = b, the scores over keys j. Each block
        // is N x M and normalized along its rows.
        std::vector<Var> blocks;
        for (std::size_t b = 0; b < m_count; ++b) {
            std::vector<Var> scores;
            for (std::size_t c = 0; c < m_count; ++c) {
                scores.push_back(by_column ? num::row_dot(qh[c], kh[b]) : num::row_dot(qh[b], kh[c]));
            }
            blocks.push_back(num::softmax_rows(num::concat_cols(scores), tau));
        }
        const Eigen::Index base = static_cast<Eigen::Index>(head) * mi * mi;
        for (std::size_t b = 0; b < m_count; ++b) {
            const Matrix& pb = blocks[b].value();
            for (Eigen::Index c = 0; c < mi; ++c) {
                const Eigen::Index i = by_column ? c : static_cast<Eigen::Index>(b);
                const Eigen::Index j = by_column ? static_cast<Eigen::Index>(b) : c;
                out.maps.data.col(base + i * mi + j) = pb.col(c);
            }
        }
        for (std::size_t m = 0; m < m_count; ++m) {
            Var acc = vh[m];
            for (std::size_t j = 0; j < m_count; ++j) {
                Var p_mj = by_column ? num::slice_cols(blocks[j], static_cast<Eigen::Index>(m), 1)
                                     : num::slice_cols(blocks[m], static_cast<Eigen::Index>(j), 1);
                acc = num::add(acc, num::scale_rows(p_mj, vh[j]));
            }
            head_parts[m].push_back(acc);
        }
    }

    std::vector<Var> fused;
    for (std::size_t m = 0; m < m_count; ++m) {
        Var mixed = params.heads == 1 ? head_parts[m].front() : num::concat_cols(head_parts[m]);
        fused.push_back(num::matmul(mixed, bind(params.modalities[m].wm)));
    }
    Var cat = m_count == 1 ? fused.front() : num::concat_cols(fused);
    out.h = num::matmul(cat, bind(params.wh));
    return out;
}

FuseBatchValue fuse_batch(const Matrix& x, const MaffParams& params) {
    Tape tape;
    // Constants only, so the params are never written through.
    FuseBatch fb = fuse_batch(tape, tape.constant(x), const_cast<MaffParams&>(params), false);
    return {fb.h.value(), std::move(fb.maps)};
}

Matrix global_attention_map(const AttentionMaps& maps) {
    if (maps.patients() == 0) throw ParameterError("global attention map of an empty patient set");
    std::vector<Matrix> per_patient;
    per_patient.reserve(maps.patients());
    for (std::size_t n = 0; n < maps.patients(); ++n) per_patient.push_back(maps.patient_mean(n));
    return global_attention_map(per_patient);
}

Matrix global_attention_map(const std::vector<Matrix>& per_patient) {
    if (per_patient.empty()) throw ParameterError("global attention map of an empty patient set");
    Matrix mean = Matrix::Zero(per_patient.front().rows(), per_patient.front().cols());
    for (const Matrix& p : per_patient) {
        if (p.rows() != mean.rows() || p.cols() != mean.cols()) {
            throw DimensionError(fmt::format("attention maps of shapes {} and {}", shape_str(mean),
                                             shape_str(p)));
        }
        mean += p;
    }
    return mean / static_cast<double>(per_patient.size());
}

}  // namespace mmgl::maff
