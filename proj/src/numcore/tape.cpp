#include "mmgl/numcore/tape.hpp"

#include "mmgl/error.hpp"

#include <fmt/format.h>

namespace mmgl {

std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
    return fmt::format("{}x{}", rows, cols);
}

std::string shape_str(const Matrix& m) { return shape_str(m.rows(), m.cols()); }

Param::Param(std::string n, Matrix init) : name(std::move(n)), value(std::move(init)) {
    zero_grad();
}

const Matrix& Var::value() const {
    if (!tape_) throw UsageError("value() on an unbound Var");
    return tape_->value(*this);
}

double Var::scalar() const {
    const Matrix& v = value();
    if (v.rows() != 1 || v.cols() != 1) {
        throw UsageError(fmt::format("scalar() on a {} node", shape_str(v)));
    }
    return v(0, 0);
}

Tape::Node& Tape::node(Var v) {
    if (v.tape() != this || v.id() >= nodes_.size()) {
        throw UsageError("Var does not belong to this tape");
    }
    return nodes_[v.id()];
}

const Tape::Node& Tape::node(Var v) const {
    if (v.tape() != this || v.id() >= nodes_.size()) {
        throw UsageError("Var does not belong to this tape");
    }
    return nodes_[v.id()];
}

Var Tape::constant(Matrix value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::param(Param& p) {
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
        p.zero_grad();
    }
    Node n;
    n.value = p.value;
    n.requires_grad = true;
    n.param = &p;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Adjoint adjoint) {
    bool needs = false;
    for (const Var& v : inputs) needs = needs || node(v).requires_grad;
    Node n;
    n.value = std::move(value);
    n.requires_grad = needs;
    if (needs) n.adjoint = std::move(adjoint);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, const std::vector<Var>& inputs, Adjoint adjoint) {
    bool needs = false;
    for (const Var& v : inputs) needs = needs || node(v).requires_grad;
    Node n;
    n.value = std::move(value);
    n.requires_grad = needs;
    if (needs) n.adjoint = std::move(adjoint);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

const Matrix& Tape::value(Var v) const { return node(v).value; }

void Tape::accumulate(Var v, const Matrix& g) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    if (g.rows() != n.value.rows() || g.cols() != n.value.cols()) {
        throw DimensionError(fmt::format("gradient of shape {} for node of shape {}",
                                         shape_str(g), shape_str(n.value)));
    }
    if (n.grad.size() == 0) {
        n.grad = g;
    } else {
        n.grad += g;
    }
}

Matrix Tape::grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

void Tape::backward(Var loss) {
    if (consumed_) {
        throw UsageError("backward called twice on the same forward record");
    }
    Node& out = node(loss);
    if (out.value.rows() != 1 || out.value.cols() != 1) {
        throw UsageError(fmt::format("backward needs a scalar loss, got {}",
                                     shape_str(out.value)));
    }
    consumed_ = true;
    trace_.clear();
    if (!out.requires_grad) return;
    out.grad = Matrix::Ones(1, 1);

    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || n.grad.size() == 0) continue;
        if (trace_enabled_) trace_.push_back(i);
        if (n.param != nullptr) {
            n.param->grad += n.grad;
        } else if (n.adjoint) {
            // The adjoint may append to other nodes' grads but never to this
            // node's, so passing a reference is safe.
            n.adjoint(*this, n.grad);
        }
    }
}

}  // namespace mmgl
