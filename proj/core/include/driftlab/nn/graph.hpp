#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "driftlab/nn/tensor.hpp"

namespace driftlab::nn {

/// Handle to a node in a Graph. Only meaningful for the graph that created it.
struct Var {
    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
    std::size_t id = npos;
};

/// Tape of operations recorded during a forward pass.
///
/// Nodes are appended in evaluation order, so index order is a topological
/// order and backward simply walks the tape from the loss towards the leaves.
/// Parameter leaves are bound to a caller-owned Tensor: their gradients are
/// accumulated directly into that tensor's grad buffer and persist across
/// backward calls until the caller zeroes them.
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, std::size_t)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = default;
    Graph& operator=(Graph&&) = default;

    /// Leaf that never receives a gradient.
    Var constant(Tensor value);
    /// Leaf bound to a parameter. The tensor must outlive the graph.
    Var parameter(Tensor& param);
    /// Leaf that reads a caller-owned tensor without copying and never
    /// receives a gradient. The tensor must outlive the graph.
    Var constant_view(const Tensor& value);
    /// Interior node produced by an operation.
    Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

    [[nodiscard]] const Tensor& value(Var v) const;
    [[nodiscard]] bool requires_grad(Var v) const;
    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

    /// Gradient of the most recent backward pass with respect to `v`.
    /// For parameter leaves this is the (accumulated) parameter gradient.
    [[nodiscard]] std::span<const double> grad(Var v) const;

    /// Reverse-mode sweep from a scalar loss.
    void backward(Var loss);

    // Used by operation backward rules.
    [[nodiscard]] std::span<const double> upstream(std::size_t id) const;
    /// Gradient buffer of an input, or an empty span when the input does not
    /// require a gradient.
    [[nodiscard]] std::span<double> accumulator(std::size_t id);
    [[nodiscard]] const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

private:
    struct Node {
        Tensor owned;
        Tensor* param = nullptr;
        const Tensor* view = nullptr;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        bool requires_grad = false;
        Buffer grad;
    };

    [[nodiscard]] const Node& node(Var v) const;
    [[nodiscard]] const Tensor& node_value(const Node& n) const { return n.param ? *n.param : (n.view ? *n.view : n.owned); }

    std::vector<Node> nodes_;
};

}  // namespace driftlab::nn
