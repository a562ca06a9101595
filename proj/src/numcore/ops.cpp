#include "mmgl/numcore/ops.hpp"

#include "mmgl/error.hpp"

#include <fmt/format.h>

#include <cmath>

namespace mmgl::num {

namespace {

Tape& tape_of(Var a) {
    if (!a.valid()) throw UsageError("operation on an unbound Var");
    return *a.tape();
}

Tape& tape_of(Var a, Var b) {
    Tape& t = tape_of(a);
    if (b.tape() != &t) throw UsageError("operands live on different tapes");
    return t;
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(
            fmt::format("{}: shapes {} and {} differ", op, shape_str(a), shape_str(b)));
    }
}

void require_square(const char* op, const Matrix& a) {
    if (a.rows() != a.cols()) {
        throw DimensionError(fmt::format("{}: expected a square matrix, got {}", op,
                                         shape_str(a)));
    }
}

void require_positive_tau(double tau) {
    if (!(tau > 0.0)) {
        throw ParameterError(fmt::format("softmax temperature must be > 0, got {}", tau));
    }
}

Matrix scalar_matrix(double v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return m;
}

}  // namespace

Matrix softmax_rows_value(const Matrix& s, double tau) {
    require_positive_tau(tau);
    Matrix out(s.rows(), s.cols());
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const double mx = s.row(i).maxCoeff();
        double total = 0.0;
        for (Eigen::Index j = 0; j < s.cols(); ++j) {
            out(i, j) = std::exp((s(i, j) - mx) / tau);
            total += out(i, j);
        }
        out.row(i) /= total;
    }
    return out;
}

Matrix softmax_columns_value(const Matrix& s, double tau) {
    require_positive_tau(tau);
    Matrix out(s.rows(), s.cols());
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
        const double mx = s.col(j).maxCoeff();
        double total = 0.0;
        for (Eigen::Index i = 0; i < s.rows(); ++i) {
            out(i, j) = std::exp((s(i, j) - mx) / tau);
            total += out(i, j);
        }
        out.col(j) /= total;
    }
    return out;
}

Var matmul(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    if (av.cols() != bv.rows()) {
        throw DimensionError(fmt::format("matmul: cannot multiply {} by {}", shape_str(av),
                                         shape_str(bv)));
    }
    Matrix out = av * bv;
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        if (tp.requires_grad(a)) tp.accumulate_expr(a, g * tp.value(b).transpose());
        if (tp.requires_grad(b)) tp.accumulate_expr(b, tp.value(a).transpose() * g);
    });
}

Var matmul_nt(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    if (av.cols() != bv.cols()) {
        throw DimensionError(fmt::format("matmul_nt: cannot multiply {} by transpose of {}",
                                         shape_str(av), shape_str(bv)));
    }
    Matrix out = av * bv.transpose();
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        if (tp.requires_grad(a)) tp.accumulate_expr(a, g * tp.value(b));
        if (tp.requires_grad(b)) tp.accumulate_expr(b, g.transpose() * tp.value(a));
    });
}

Var gram(Var a) {
    Tape& t = tape_of(a);
    const Matrix& av = t.value(a);
    Matrix out = av * av.transpose();
    out.triangularView<Eigen::StrictlyLower>() = out.transpose();
    return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
        tp.accumulate_expr(a, (g + g.transpose()) * tp.value(a));
    });
}

Var transpose(Var a) {
    Tape& t = tape_of(a);
    Matrix out = t.value(a).transpose();
    return t.record(std::move(out), {a},
                    [a](Tape& tp, const Matrix& g) { tp.accumulate_expr(a, g.transpose()); });
}

Var add(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_same_shape("add", t.value(a), t.value(b));
    Matrix out = t.value(a) + t.value(b);
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g);
        tp.accumulate(b, g);
    });
}

Var sub(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_same_shape("sub", t.value(a), t.value(b));
    Matrix out = t.value(a) - t.value(b);
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g);
        tp.accumulate_expr(b, -g);
    });
}

Var hadamard(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_same_shape("hadamard", t.value(a), t.value(b));
    Matrix out = t.value(a).cwiseProduct(t.value(b));
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        if (tp.requires_grad(a)) tp.accumulate_expr(a, g.cwiseProduct(tp.value(b)));
        if (tp.requires_grad(b)) tp.accumulate_expr(b, g.cwiseProduct(tp.value(a)));
    });
}

Var scale(Var a, double c) {
    Tape& t = tape_of(a);
    Matrix out = t.value(a) * c;
    return t.record(std::move(out), {a},
                    [a, c](Tape& tp, const Matrix& g) { tp.accumulate_expr(a, g * c); });
}

Var sum(Var a) {
    Tape& t = tape_of(a);
    const Eigen::Index r = t.value(a).rows();
    const Eigen::Index c = t.value(a).cols();
    return t.record(scalar_matrix(t.value(a).sum()), {a}, [a, r, c](Tape& tp, const Matrix& g) {
        tp.accumulate_expr(a, Matrix::Constant(r, c, g(0, 0)));
    });
}

Var combine(std::span<const Var> terms, std::span<const double> weights) {
    if (terms.empty() || terms.size() != weights.size()) {
        throw UsageError("combine: need one weight per term and at least one term");
    }
    Tape& t = tape_of(terms.front());
    double total = 0.0;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        const Matrix& v = tape_of(terms[i], terms.front()).value(terms[i]);
        if (v.size() != 1) {
            throw DimensionError(fmt::format("combine: term {} has shape {}", i, shape_str(v)));
        }
        total += weights[i] * v(0, 0);
    }
    std::vector<Var> ins(terms.begin(), terms.end());
    std::vector<double> ws(weights.begin(), weights.end());
    return t.record(scalar_matrix(total), ins, [ins, ws](Tape& tp, const Matrix& g) {
        for (std::size_t i = 0; i < ins.size(); ++i) {
            tp.accumulate(ins[i], scalar_matrix(g(0, 0) * ws[i]));
        }
    });
}

Var relu(Var a) {
    Tape& t = tape_of(a);
    Matrix out = t.value(a).cwiseMax(0.0);
    return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
        const Matrix& x = tp.value(a);
        tp.accumulate_expr(a, (x.array() > 0.0).select(g.array(), 0.0).matrix());
    });
}

Var softmax_columns(Var s, double tau) {
    Tape& t = tape_of(s);
    Matrix out = softmax_columns_value(t.value(s), tau);
    if (!t.requires_grad(s)) return t.record(std::move(out), {s}, {});
    Matrix yv = out;
    return t.record(std::move(out), {s}, [s, yv, tau](Tape& tp, const Matrix& g) {
        Matrix gy = g.cwiseProduct(yv);
        Eigen::RowVectorXd col_dot = gy.colwise().sum();
        Matrix gs = gy - yv * col_dot.asDiagonal();
        tp.accumulate_expr(s, gs / tau);
    });
}

Var softmax_rows(Var s, double tau) {
    Tape& t = tape_of(s);
    Matrix out = softmax_rows_value(t.value(s), tau);
    if (!t.requires_grad(s)) return t.record(std::move(out), {s}, {});
    Matrix yv = out;
    return t.record(std::move(out), {s}, [s, yv, tau](Tape& tp, const Matrix& g) {
        Matrix gy = g.cwiseProduct(yv);
        Eigen::VectorXd row_dot = gy.rowwise().sum();
        Matrix gs = gy - row_dot.asDiagonal() * yv;
        tp.accumulate_expr(s, gs / tau);
    });
}

Var row_dot(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_same_shape("row_dot", t.value(a), t.value(b));
    Matrix out = t.value(a).cwiseProduct(t.value(b)).rowwise().sum();
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        if (tp.requires_grad(a)) tp.accumulate_expr(a, g.col(0).asDiagonal() * tp.value(b));
        if (tp.requires_grad(b)) tp.accumulate_expr(b, g.col(0).asDiagonal() * tp.value(a));
    });
}

Var scale_rows(Var c, Var x) {
    Tape& t = tape_of(c, x);
    const Matrix& cv = t.value(c);
    const Matrix& xv = t.value(x);
    if (cv.cols() != 1 || cv.rows() != xv.rows()) {
        throw DimensionError(fmt::format("scale_rows: column {} does not match {}",
                                         shape_str(cv), shape_str(xv)));
    }
    Matrix out = cv.col(0).asDiagonal() * xv;
    return t.record(std::move(out), {c, x}, [c, x](Tape& tp, const Matrix& g) {
        if (tp.requires_grad(c)) {
            tp.accumulate_expr(c, g.cwiseProduct(tp.value(x)).rowwise().sum());
        }
        if (tp.requires_grad(x)) tp.accumulate_expr(x, tp.value(c).col(0).asDiagonal() * g);
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw UsageError("concat_cols: no parts");
    Tape& t = tape_of(parts.front());
    const Eigen::Index rows = t.value(parts.front()).rows();
    Eigen::Index cols = 0;
    for (const Var& p : parts) {
        const Matrix& v = tape_of(p, parts.front()).value(p);
        if (v.rows() != rows) {
            throw DimensionError(fmt::format("concat_cols: row count {} vs {}", v.rows(), rows));
        }
        cols += v.cols();
    }
    Matrix out(rows, cols);
    std::vector<Eigen::Index> offsets;
    offsets.reserve(parts.size());
    Eigen::Index off = 0;
    for (const Var& p : parts) {
        const Matrix& v = t.value(p);
        out.middleCols(off, v.cols()) = v;
        offsets.push_back(off);
        off += v.cols();
    }
    return t.record(std::move(out), parts, [parts, offsets](Tape& tp, const Matrix& g) {
        for (std::size_t i = 0; i < parts.size(); ++i) {
            if (!tp.requires_grad(parts[i])) continue;
            tp.accumulate_expr(parts[i], g.middleCols(offsets[i], tp.value(parts[i]).cols()));
        }
    });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index width) {
    Tape& t = tape_of(a);
    const Matrix& av = t.value(a);
    if (start < 0 || width < 1 || start + width > av.cols()) {
        throw DimensionError(fmt::format("slice_cols: columns [{}, {}) outside {}", start,
                                         start + width, shape_str(av)));
    }
    Matrix out = av.middleCols(start, width);
    const Eigen::Index r = av.rows();
    const Eigen::Index c = av.cols();
    return t.record(std::move(out), {a}, [a, start, width, r, c](Tape& tp, const Matrix& g) {
        Matrix full = Matrix::Zero(r, c);
        full.middleCols(start, width) = g;
        tp.accumulate(a, full);
    });
}

Var row_normalize(Var a, double eps) {
    Tape& t = tape_of(a);
    const Matrix& av = t.value(a);
    Eigen::VectorXd denom(av.rows());
    for (Eigen::Index i = 0; i < av.rows(); ++i) {
        denom(i) = std::max(av.row(i).norm(), eps);
    }
    Matrix out = denom.cwiseInverse().asDiagonal() * av;
    Matrix yv = out;
    return t.record(std::move(out), {a}, [a, yv, denom, eps](Tape& tp, const Matrix& g) {
        Matrix ga(g.rows(), g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            if (denom(i) > eps) {
                const double proj = yv.row(i).dot(g.row(i));
                ga.row(i) = (g.row(i) - proj * yv.row(i)) / denom(i);
            } else {
                ga.row(i) = g.row(i) / eps;
            }
        }
        tp.accumulate(a, ga);
    });
}

Var set_diagonal(Var a, double value) {
    Tape& t = tape_of(a);
    require_square("set_diagonal", t.value(a));
    Matrix out = t.value(a);
    out.diagonal().setConstant(value);
    return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
        Matrix ga = g;
        ga.diagonal().setZero();
        tp.accumulate(a, ga);
    });
}

Var normalize_adjacency(Var a, bool add_self_loops) {
    Tape& t = tape_of(a);
    const Matrix& av = t.value(a);
    require_square("normalize_adjacency", av);
    const Eigen::Index n = av.rows();
    Matrix loops = av;
    if (add_self_loops) loops.diagonal().array() += 1.0;
    Eigen::VectorXd deg = loops.rowwise().sum();
    Eigen::VectorXd inv_sqrt(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        inv_sqrt(i) = deg(i) > 0.0 ? 1.0 / std::sqrt(deg(i)) : 0.0;
    }
    Matrix out = inv_sqrt.asDiagonal() * loops * inv_sqrt.asDiagonal();
    Matrix yv = out;
    return t.record(std::move(out), {a}, [a, yv, deg, inv_sqrt](Tape& tp, const Matrix& g) {
        // out_ij = s_i A'_ij s_j with s = deg^{-1/2}; deg_i = sum_j A'_ij.
        const Eigen::Index n = yv.rows();
        Matrix gy = g.cwiseProduct(yv);
        Eigen::VectorXd through_deg = gy.rowwise().sum() + gy.colwise().sum().transpose();
        Eigen::VectorXd gdeg(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            gdeg(i) = deg(i) > 0.0 ? -0.5 * through_deg(i) / deg(i) : 0.0;
        }
        Matrix ga = inv_sqrt.asDiagonal() * g * inv_sqrt.asDiagonal();
        ga.colwise() += gdeg;
        tp.accumulate(a, ga);
    });
}

Var dropout(Var a, double p, std::mt19937_64& rng) {
    if (p < 0.0 || p >= 1.0) {
        throw ParameterError(fmt::format("dropout probability must be in [0, 1), got {}", p));
    }
    if (p == 0.0) return a;
    Tape& t = tape_of(a);
    const Matrix& av = t.value(a);
    std::bernoulli_distribution keep(1.0 - p);
    Matrix mask(av.rows(), av.cols());
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
        mask.data()[i] = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
    }
    Matrix out = av.cwiseProduct(mask);
    return t.record(std::move(out), {a}, [a, mask](Tape& tp, const Matrix& g) {
        tp.accumulate_expr(a, g.cwiseProduct(mask));
    });
}

Var cross_entropy_masked(Var logits, std::span<const int> labels,
                         std::span<const std::size_t> mask) {
    Tape& t = tape_of(logits);
    const Matrix& z = t.value(logits);
    if (mask.empty()) throw ParameterError("cross_entropy_masked: empty mask");
    if (labels.size() != static_cast<std::size_t>(z.rows())) {
        throw DimensionError(fmt::format("cross_entropy_masked: {} labels for {} logits rows",
                                         labels.size(), z.rows()));
    }
    const Eigen::Index classes = z.cols();
    Matrix probs(static_cast<Eigen::Index>(mask.size()), classes);
    double loss = 0.0;
    for (std::size_t k = 0; k < mask.size(); ++k) {
        const std::size_t i = mask[k];
        if (i >= labels.size()) {
            throw DataError(fmt::format("cross_entropy_masked: mask index {} out of range", i));
        }
        const int y = labels[i];
        if (y < 0 || y >= classes) {
            throw DataError(fmt::format("cross_entropy_masked: label {} of node {} outside [0, {})",
                                        y, i, classes));
        }
        const auto row = z.row(static_cast<Eigen::Index>(i));
        const double mx = row.maxCoeff();
        double total = 0.0;
        for (Eigen::Index c = 0; c < classes; ++c) {
            probs(static_cast<Eigen::Index>(k), c) = std::exp(row(c) - mx);
            total += probs(static_cast<Eigen::Index>(k), c);
        }
        probs.row(static_cast<Eigen::Index>(k)) /= total;
        loss += -(row(y) - mx - std::log(total));
    }
    const double inv = 1.0 / static_cast<double>(mask.size());
    loss *= inv;
    std::vector<std::size_t> idx(mask.begin(), mask.end());
    std::vector<int> ys;
    ys.reserve(idx.size());
    for (std::size_t i : idx) ys.push_back(labels[i]);
    const Eigen::Index rows = z.rows();
    return t.record(scalar_matrix(loss), {logits},
                    [logits, probs, idx, ys, inv, rows, classes](Tape& tp, const Matrix& g) {
                        Matrix gz = Matrix::Zero(rows, classes);
                        for (std::size_t k = 0; k < idx.size(); ++k) {
                            const auto r = static_cast<Eigen::Index>(idx[k]);
                            gz.row(r) += probs.row(static_cast<Eigen::Index>(k));
                            gz(r, ys[k]) -= 1.0;
                        }
                        tp.accumulate_expr(logits, gz * (g(0, 0) * inv));
                    });
}

Var dirichlet_energy(Var h, Var a) {
    Tape& t = tape_of(h, a);
    const Matrix& hv = t.value(h);
    const Matrix& av = t.value(a);
    require_square("dirichlet_energy", av);
    if (av.rows() != hv.rows()) {
        throw DimensionError(fmt::format("dirichlet_energy: adjacency {} for signals {}",
                                         shape_str(av), shape_str(hv)));
    }
    const double n = static_cast<double>(hv.rows());
    const double coef = 1.0 / (2.0 * n * n);
    Eigen::VectorXd sq = hv.rowwise().squaredNorm();
    Matrix dist = -2.0 * (hv * hv.transpose());
    dist.colwise() += sq;
    dist.rowwise() += sq.transpose();
    const double value = coef * av.cwiseProduct(dist).sum();
    return t.record(scalar_matrix(value), {h, a}, [h, a, dist, coef](Tape& tp, const Matrix& g) {
        const double s = g(0, 0) * coef;
        if (tp.requires_grad(a)) tp.accumulate_expr(a, dist * s);
        if (tp.requires_grad(h)) {
            const Matrix& hv2 = tp.value(h);
            const Matrix& av2 = tp.value(a);
            Matrix sym = av2 + av2.transpose();
            Eigen::VectorXd deg = sym.rowwise().sum();
            // d/dh_i sum_ij A_ij ||h_i - h_j||^2 = 2 sum_j (A_ij + A_ji)(h_i - h_j)
            Matrix gh = deg.asDiagonal() * hv2 - sym * hv2;
            tp.accumulate_expr(h, gh * (2.0 * s));
        }
    });
}

Var log_degree_barrier(Var a, double eps) {
    Tape& t = tape_of(a);
    const Matrix& av = t.value(a);
    const double n = static_cast<double>(av.rows());
    Eigen::VectorXd deg = av.rowwise().sum();
    double value = 0.0;
    for (Eigen::Index i = 0; i < deg.size(); ++i) value += std::log(deg(i) + eps);
    value *= -1.0 / n;
    const Eigen::Index cols = av.cols();
    return t.record(scalar_matrix(value), {a}, [a, deg, eps, n, cols](Tape& tp, const Matrix& g) {
        Eigen::VectorXd per_row = ((deg.array() + eps).inverse() * (-g(0, 0) / n)).matrix();
        Matrix ga = per_row.replicate(1, cols);
        tp.accumulate(a, ga);
    });
}

Var mean_square(Var a) {
    Tape& t = tape_of(a);
    const Matrix& av = t.value(a);
    const double denom = static_cast<double>(av.rows()) * static_cast<double>(av.cols());
    const double value = av.squaredNorm() / denom;
    return t.record(scalar_matrix(value), {a}, [a, denom](Tape& tp, const Matrix& g) {
        tp.accumulate_expr(a, tp.value(a) * (2.0 * g(0, 0) / denom));
    });
}

}  // namespace mmgl::num
