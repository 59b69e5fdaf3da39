#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "pkt/core/array.hpp"
#include "pkt/core/kernels.hpp"

namespace pkt {

/// Handle to a node recorded on a Graph.
struct Var {
    static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
    std::size_t id = kInvalid;
    bool valid() const { return id != kInvalid; }
};

/// Tape of array operations with reverse-mode gradients.
///
/// Nodes are appended in evaluation order, so the recording order is a
/// topological order and backward() is a single reverse sweep. Leaves either
/// own their value or borrow an external Array (model weights), which must
/// outlive the graph. Gradients are only computed for nodes that depend on a
/// leaf created with requires_grad = true; frozen weights cost nothing in
/// the backward pass.
class Graph {
   public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = default;
    Graph& operator=(Graph&&) = default;

    Var leaf(Array value, bool requires_grad = false);
    Var borrow(const Array& value, bool requires_grad = false);

    const Array& value(Var v) const;
    /// Gradient of the last backward() pass; exact zeros for nodes it did not reach.
    const Array& grad(Var v);
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    Var matmul(Var a, Var b);     // [m,k] x [k,n]
    Var matmul_nt(Var a, Var b);  // [m,k] x [n,k]^T
    Var add(Var a, Var b);
    Var add_bias(Var a, Var bias);  // [m,n] + [n] broadcast over rows
    Var mul(Var a, Var b);
    Var scale(Var a, double s);
    Var tanh(Var a);
    Var gelu(Var a);  // tanh approximation
    Var softmax(Var a, std::size_t causal_offset = kernels::kNoMask);
    Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
    Var embedding(Var table, std::span<const int> ids);
    Var slice_rows(Var a, std::size_t start, std::size_t count);
    Var slice_cols(Var a, std::size_t start, std::size_t count);
    Var concat_rows(Var a, Var b);
    Var concat_cols(std::span<const Var> parts);
    Var sum(Var a);
    Var mean(std::span<const Var> scalars);
    /// Mean token cross-entropy over rows whose target is >= 0.
    Var cross_entropy(Var logits, std::span<const int> targets);

    /// Reverse sweep from a scalar node. Resets all gradient slots first, so
    /// repeated calls produce identical gradients.
    void backward(Var loss);
    void zero_grad();

   private:
    using BackwardFn = std::function<void(Graph&, std::size_t)>;

    struct Node {
        Array value;
        const Array* external = nullptr;
        Array grad;
        bool has_grad = false;
        bool requires_grad = false;
        BackwardFn backward;
    };

    const Array& val(std::size_t id) const {
        const Node& n = nodes_[id];
        return n.external ? *n.external : n.value;
    }
    Array& grad_slot(std::size_t id);
    const Array& upstream(std::size_t id) const { return nodes_[id].grad; }
    bool needs(std::size_t id) const { return nodes_[id].requires_grad; }
    Var push(Array value, bool requires_grad, BackwardFn fn);
    void check(Var v) const;

    std::vector<Node> nodes_;
};

}  // namespace pkt
