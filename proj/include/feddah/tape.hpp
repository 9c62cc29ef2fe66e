#pragma once

#include <functional>
#include <vector>

#include "feddah/array.hpp"

namespace feddah {

using NodeId = int;

// Reverse-mode autodiff over Array values. A tape is built per forward pass
// and discarded after backward(); values are immutable once recorded.
class Tape {
  public:
    NodeId leaf(Array v);      // gradient-tracked input
    NodeId constant(Array v);  // input with no gradient

    const Array& value(NodeId id) const { return nodes_[id].value; }
    // Gradient accumulated by the last backward(); zeros if the node was not
    // reached.
    const Array& grad(NodeId id);
    bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }

    NodeId matmul(NodeId a, NodeId b);
    NodeId conv2d(NodeId input, NodeId kernel, NodeId bias);
    NodeId relu(NodeId x);
    NodeId sigmoid(NodeId x);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId square(NodeId x);
    NodeId scale(NodeId x, double c);
    NodeId add_scalar(NodeId x, double c);
    NodeId sum(NodeId x);                       // -> scalar
    NodeId div(NodeId a, NodeId b);             // scalar / scalar
    NodeId concat(const std::vector<NodeId>& parts);  // 1-D concatenation
    NodeId reshape(NodeId x, std::vector<int> shape);
    NodeId select_channel(NodeId x, int c);     // C x H x W -> H x W
    // Gathers per-input-slice vectors of length n_out*f*f... see hypernet.
    // slice i element [r*(n_out*f) + co*f + c] lands at out[co][i][r][c].
    NodeId assemble_kernel(const std::vector<NodeId>& slices, int n_out, int f);
    // sum((a-b)^2) as a scalar node.
    NodeId l2s(NodeId a, NodeId b);

    // Reverse sweep from a scalar root. Accumulates gradients for every
    // gradient-tracked node reachable from it.
    void backward(NodeId root);
    void zero_grads();

    size_t node_count() const { return nodes_.size(); }

  private:
    struct Node {
        Array value;
        bool requires_grad = false;
        // Receives the output gradient, accumulates into the inputs.
        std::function<void(Tape&, const Array&)> backprop;
    };

    NodeId push(Array value, bool requires_grad,
                std::function<void(Tape&, const Array&)> backprop);
    void accumulate(NodeId id, const Array& g);
    void accumulate_scaled(NodeId id, const Array& g, double c);

    std::vector<Node> nodes_;
    std::vector<Array> grads_;  // parallel to nodes_, lazily sized
};

}  // namespace feddah
