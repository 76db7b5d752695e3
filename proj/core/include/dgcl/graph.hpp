#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "dgcl/tensor.hpp"

namespace dgcl {

using NodeId = std::size_t;

enum class OpKind {
    leaf,
    matmul,
    transpose,
    add,
    sub,
    mul,
    scale,
    add_scalar,
    relu,
    gelu,
    exp,
    log,
    sqrt,
    softmax_rows,
    log_softmax_rows,
    add_row,
    row_sum,
    div_rows,
    slice_cols,
    concat_cols,
    sum,
};

using Gradients = std::map<NodeId, Tensor>;

// Dynamic tape. Nodes are appended in evaluation order, so the node list is
// already a topological order and backward walks it in reverse.
class Graph {
public:
    NodeId leaf(Tensor value, bool trainable = false);

    NodeId matmul(NodeId a, NodeId b);
    NodeId transpose(NodeId a);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double s);
    NodeId add_scalar(NodeId a, double s);
    NodeId relu(NodeId a);
    NodeId gelu(NodeId a);
    NodeId exp(NodeId a);
    NodeId log(NodeId a);
    NodeId sqrt(NodeId a);
    NodeId softmax_rows(NodeId a);
    NodeId log_softmax_rows(NodeId a);
    NodeId add_row(NodeId a, NodeId row);
    NodeId row_sum(NodeId a);              // p×q -> p×1
    NodeId div_rows(NodeId a, NodeId col); // a(i,j) / col(i,0)
    NodeId slice_cols(NodeId a, std::size_t begin, std::size_t end);
    NodeId concat_cols(const std::vector<NodeId>& parts);
    NodeId sum(NodeId a);                  // -> 1×1

    // Row-wise L2 normalisation composed from primitives.
    NodeId normalize_rows(NodeId a, double eps = 1e-12);

    const Tensor& value(NodeId id) const;
    double scalar(NodeId id) const;
    bool trainable(NodeId id) const;
    std::size_t size() const noexcept { return nodes_.size(); }
    OpKind kind(NodeId id) const { return nodes_.at(id).kind; }

    // Gradients for every trainable leaf, zero where disconnected.
    Gradients backward(NodeId loss) const;

private:
    struct Node {
        OpKind kind;
        std::vector<NodeId> inputs;
        Tensor value;
        double param = 0.0;
        std::size_t begin = 0;
        std::size_t end = 0;
        bool trainable = false;
    };

    NodeId push(OpKind kind, std::vector<NodeId> inputs, Tensor value);
    const Node& node(NodeId id) const;

    std::vector<Node> nodes_;
};

}  // namespace dgcl
