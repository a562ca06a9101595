#pragma once

#include "mmgl/numcore/matrix.hpp"

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <vector>

namespace mmgl {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
// owning tape is alive.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape() const { return tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

    const Matrix& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    double scalar() const;

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = std::numeric_limits<std::size_t>::max();
};

// Reverse-mode differentiation record for one forward pass.
//
// Nodes are appended in forward order; backward() replays their adjoint
// rules in exact reverse order and accumulates leaf gradients into the
// bound Params. A tape supports a single backward pass.
class Tape {
public:
    // Adjoint rule of one node: receives the tape and the gradient flowing
    // into the node's output, and pushes contributions to its inputs via
    // accumulate().
    using Adjoint = std::function<void(Tape&, const Matrix& out_grad)>;

    Tape() { nodes_.reserve(256); }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value);
    Var param(Param& p);

    // Records an operation. `inputs` decide whether the node needs a
    // gradient; when none does, the adjoint is dropped.
    Var record(Matrix value, std::initializer_list<Var> inputs, Adjoint adjoint);
    Var record(Matrix value, const std::vector<Var>& inputs, Adjoint adjoint);

    const Matrix& value(Var v) const;
    bool requires_grad(Var v) const { return node(v).requires_grad; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    // Adds `g` to the gradient of node `v` (no-op for constants).
    void accumulate(Var v, const Matrix& g);
    template <typename Expr>
    void accumulate_expr(Var v, const Expr& g) {
        Node& n = node(v);
        if (!n.requires_grad) return;
        if (n.grad.size() == 0) {
            n.grad = g;
        } else {
            n.grad += g;
        }
    }

    // Gradient of a node after backward(); zero matrix if none flowed.
    Matrix grad(Var v) const;

    void backward(Var loss);
    bool consumed() const { return consumed_; }
    std::size_t size() const { return nodes_.size(); }

    // When enabled, backward() records the ids of the nodes whose adjoints
    // it runs, in visiting order.
    void enable_trace(bool on = true) { trace_enabled_ = on; }
    const std::vector<std::size_t>& trace() const { return trace_; }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        Param* param = nullptr;
        Adjoint adjoint;
    };

    Node& node(Var v);
    const Node& node(Var v) const;

    std::vector<Node> nodes_;
    bool consumed_ = false;
    bool trace_enabled_ = false;
    std::vector<std::size_t> trace_;
};

}  // namespace mmgl
