#include "driftlab/nn/graph.hpp"

#include <algorithm>
#include <string>

#include "driftlab/error.hpp"

namespace driftlab::nn {

Var Graph::constant(Tensor value) {
    Node n;
    n.owned = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Graph::parameter(Tensor& param) {
    param.ensure_grad();
    Node n;
    n.param = &param;
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Graph::constant_view(const Tensor& value) {
    Node n;
    n.view = &value;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Graph::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
    Node n;
    n.owned = std::move(value);
    for (std::size_t in : inputs) {
        if (in >= nodes_.size()) throw StateError("operation input refers to an unknown node");
        n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
    }
    n.inputs = std::move(inputs);
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

const Graph::Node& Graph::node(Var v) const {
    if (v.id >= nodes_.size()) throw StateError("variable does not belong to this graph");
    return nodes_[v.id];
}

const Tensor& Graph::value(Var v) const { return node_value(node(v)); }

bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

std::span<const double> Graph::grad(Var v) const {
    const Node& n = node(v);
    if (n.param) return n.param->grad();
    if (n.grad.empty()) throw StateError("no gradient recorded for node " + std::to_string(v.id));
    return n.grad;
}

std::span<const double> Graph::upstream(std::size_t id) const {
    const Node& n = nodes_[id];
    if (n.param) return n.param->grad();
    return n.grad;
}

std::span<double> Graph::accumulator(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return {};
    if (n.param) return n.param->ensure_grad();
    if (n.grad.size() != n.owned.size()) n.grad.assign(n.owned.size(), 0.0);
    return n.grad;
}

void Graph::backward(Var loss) {
    if (nodes_.empty() || loss.id >= nodes_.size()) {
        throw StateError("backward called before any forward computation on this graph");
    }
    const Node& root = nodes_[loss.id];
    if (node_value(root).size() != 1) {
        throw ShapeError("backward requires a scalar loss, got shape " + shape_string(node_value(root).shape()));
    }
    if (!root.requires_grad) return;

    for (Node& n : nodes_) {
        if (!n.param) n.grad.clear();
    }
    accumulator(loss.id)[0] += 1.0;

    for (std::size_t id = loss.id + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.backward || n.grad.empty()) continue;
        n.backward(*this, id);
    }
}

}  // namespace driftlab::nn
