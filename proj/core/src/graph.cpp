#include "dgcl/graph.hpp"

#include <cmath>

#include "dgcl/error.hpp"

namespace dgcl {

namespace {

void accumulate(std::vector<Tensor>& grads, NodeId id, const Tensor& g) {
    Tensor& slot = grads[id];
    if (slot.empty()) {
        slot = g;
        return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i];
}

double gelu_grad(double x) {
    constexpr double k = 0.7978845608028654;
    double u = k * (x + 0.044715 * x * x * x);
    double t = std::tanh(u);
    double du = k * (1.0 + 3.0 * 0.044715 * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

}  // namespace

NodeId Graph::push(OpKind kind, std::vector<NodeId> inputs, Tensor value) {
    nodes_.push_back(Node{kind, std::move(inputs), std::move(value)});
    return nodes_.size() - 1;
}

const Graph::Node& Graph::node(NodeId id) const {
    if (id >= nodes_.size()) fail(ErrorKind::contract, "unknown graph node " + std::to_string(id));
    return nodes_[id];
}

NodeId Graph::leaf(Tensor value, bool trainable) {
    NodeId id = push(OpKind::leaf, {}, std::move(value));
    nodes_[id].trainable = trainable;
    return id;
}

NodeId Graph::matmul(NodeId a, NodeId b) {
    return push(OpKind::matmul, {a, b}, dgcl::matmul(value(a), value(b)));
}
NodeId Graph::transpose(NodeId a) { return push(OpKind::transpose, {a}, dgcl::transpose(value(a))); }
NodeId Graph::add(NodeId a, NodeId b) { return push(OpKind::add, {a, b}, dgcl::add(value(a), value(b))); }
NodeId Graph::sub(NodeId a, NodeId b) { return push(OpKind::sub, {a, b}, dgcl::sub(value(a), value(b))); }
NodeId Graph::mul(NodeId a, NodeId b) { return push(OpKind::mul, {a, b}, dgcl::mul(value(a), value(b))); }

NodeId Graph::scale(NodeId a, double s) {
    NodeId id = push(OpKind::scale, {a}, dgcl::scale(value(a), s));
    nodes_[id].param = s;
    return id;
}

NodeId Graph::add_scalar(NodeId a, double s) {
    Tensor v = value(a);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += s;
    NodeId id = push(OpKind::add_scalar, {a}, std::move(v));
    nodes_[id].param = s;
    return id;
}

NodeId Graph::relu(NodeId a) { return push(OpKind::relu, {a}, dgcl::relu(value(a))); }
NodeId Graph::gelu(NodeId a) { return push(OpKind::gelu, {a}, dgcl::gelu(value(a))); }
NodeId Graph::exp(NodeId a) { return push(OpKind::exp, {a}, dgcl::exp(value(a))); }
NodeId Graph::log(NodeId a) { return push(OpKind::log, {a}, dgcl::log(value(a))); }
NodeId Graph::sqrt(NodeId a) { return push(OpKind::sqrt, {a}, dgcl::sqrt(value(a))); }
NodeId Graph::softmax_rows(NodeId a) {
    return push(OpKind::softmax_rows, {a}, dgcl::softmax_rows(value(a)));
}
NodeId Graph::log_softmax_rows(NodeId a) {
    return push(OpKind::log_softmax_rows, {a}, dgcl::log_softmax_rows(value(a)));
}
NodeId Graph::add_row(NodeId a, NodeId row) {
    return push(OpKind::add_row, {a, row}, dgcl::add_row(value(a), value(row)));
}

NodeId Graph::row_sum(NodeId a) {
    const Tensor& x = value(a);
    Tensor out(x.rows(), 1);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) s += x(i, j);
        out[i] = s;
    }
    return push(OpKind::row_sum, {a}, std::move(out));
}

NodeId Graph::div_rows(NodeId a, NodeId col) {
    const Tensor& x = value(a);
    const Tensor& c = value(col);
    if (c.cols() != 1 || c.rows() != x.rows())
        fail(ErrorKind::dimension, "div_rows: " + x.shape_str() + " / " + c.shape_str());
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(i, j) / c[i];
    return push(OpKind::div_rows, {a, col}, std::move(out));
}

NodeId Graph::slice_cols(NodeId a, std::size_t begin, std::size_t end) {
    NodeId id = push(OpKind::slice_cols, {a}, dgcl::slice_cols(value(a), begin, end));
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
}

NodeId Graph::concat_cols(const std::vector<NodeId>& parts) {
    std::vector<Tensor> vals;
    vals.reserve(parts.size());
    for (NodeId p : parts) vals.push_back(value(p));
    return push(OpKind::concat_cols, parts, dgcl::concat_cols(vals));
}

NodeId Graph::sum(NodeId a) { return push(OpKind::sum, {a}, Tensor(1, 1, dgcl::sum(value(a)))); }

NodeId Graph::normalize_rows(NodeId a, double eps) {
    NodeId norm = sqrt(add_scalar(row_sum(mul(a, a)), eps));
    return div_rows(a, norm);
}

const Tensor& Graph::value(NodeId id) const { return node(id).value; }

double Graph::scalar(NodeId id) const {
    const Tensor& v = value(id);
    if (v.size() != 1) fail(ErrorKind::contract, "node is not scalar: " + v.shape_str());
    return v[0];
}

bool Graph::trainable(NodeId id) const { return node(id).trainable; }

Gradients Graph::backward(NodeId loss) const {
    const Node& ln = node(loss);
    if (ln.value.size() != 1)
        fail(ErrorKind::contract, "backward requires a scalar loss, got " + ln.value.shape_str());

    std::vector<Tensor> grads(loss + 1);
    grads[loss] = Tensor(1, 1, 1.0);

    for (NodeId id = loss + 1; id-- > 0;) {
        const Node& n = nodes_[id];
        if (grads[id].empty() || n.kind == OpKind::leaf) continue;
        const Tensor& g = grads[id];
        const Tensor& y = n.value;
        auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.inputs[k]].value; };

        switch (n.kind) {
            case OpKind::leaf:
                break;
            case OpKind::matmul:
                accumulate(grads, n.inputs[0], dgcl::matmul(g, dgcl::transpose(in(1))));
                accumulate(grads, n.inputs[1], dgcl::matmul(dgcl::transpose(in(0)), g));
                break;
            case OpKind::transpose:
                accumulate(grads, n.inputs[0], dgcl::transpose(g));
                break;
            case OpKind::add:
                accumulate(grads, n.inputs[0], g);
                accumulate(grads, n.inputs[1], g);
                break;
            case OpKind::sub:
                accumulate(grads, n.inputs[0], g);
                accumulate(grads, n.inputs[1], dgcl::scale(g, -1.0));
                break;
            case OpKind::mul:
                accumulate(grads, n.inputs[0], dgcl::mul(g, in(1)));
                accumulate(grads, n.inputs[1], dgcl::mul(g, in(0)));
                break;
            case OpKind::scale:
                accumulate(grads, n.inputs[0], dgcl::scale(g, n.param));
                break;
            case OpKind::add_scalar:
                accumulate(grads, n.inputs[0], g);
                break;
            case OpKind::relu: {
                Tensor d = g;
                for (std::size_t i = 0; i < d.size(); ++i)
                    if (!(in(0)[i] > 0.0)) d[i] = 0.0;
                accumulate(grads, n.inputs[0], d);
                break;
            }
            case OpKind::gelu: {
                Tensor d = g;
                for (std::size_t i = 0; i < d.size(); ++i) d[i] *= gelu_grad(in(0)[i]);
                accumulate(grads, n.inputs[0], d);
                break;
            }
            case OpKind::exp:
                accumulate(grads, n.inputs[0], dgcl::mul(g, y));
                break;
            case OpKind::log: {
                Tensor d = g;
                for (std::size_t i = 0; i < d.size(); ++i) d[i] /= in(0)[i];
                accumulate(grads, n.inputs[0], d);
                break;
            }
            case OpKind::sqrt: {
                Tensor d = g;
                for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 0.5 / y[i];
                accumulate(grads, n.inputs[0], d);
                break;
            }
            case OpKind::softmax_rows: {
                Tensor d(y.rows(), y.cols());
                for (std::size_t i = 0; i < y.rows(); ++i) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
                    for (std::size_t j = 0; j < y.cols(); ++j) d(i, j) = y(i, j) * (g(i, j) - dot);
                }
                accumulate(grads, n.inputs[0], d);
                break;
            }
            case OpKind::log_softmax_rows: {
                Tensor d(y.rows(), y.cols());
                for (std::size_t i = 0; i < y.rows(); ++i) {
                    double gs = 0.0;
                    for (std::size_t j = 0; j < y.cols(); ++j) gs += g(i, j);
                    for (std::size_t j = 0; j < y.cols(); ++j)
                        d(i, j) = g(i, j) - std::exp(y(i, j)) * gs;
                }
                accumulate(grads, n.inputs[0], d);
                break;
            }
            case OpKind::add_row: {
                accumulate(grads, n.inputs[0], g);
                Tensor r(1, g.cols());
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) r[j] += g(i, j);
                accumulate(grads, n.inputs[1], r);
                break;
            }
            case OpKind::row_sum: {
                const Tensor& x = in(0);
                Tensor d(x.rows(), x.cols());
                for (std::size_t i = 0; i < x.rows(); ++i)
                    for (std::size_t j = 0; j < x.cols(); ++j) d(i, j) = g[i];
                accumulate(grads, n.inputs[0], d);
                break;
            }
            case OpKind::div_rows: {
                const Tensor& x = in(0);
                const Tensor& c = in(1);
                Tensor da(x.rows(), x.cols());
                Tensor dc(c.rows(), 1);
                for (std::size_t i = 0; i < x.rows(); ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < x.cols(); ++j) {
                        da(i, j) = g(i, j) / c[i];
                        acc += g(i, j) * x(i, j);
                    }
                    dc[i] = -acc / (c[i] * c[i]);
                }
                accumulate(grads, n.inputs[0], da);
                accumulate(grads, n.inputs[1], dc);
                break;
            }
            case OpKind::slice_cols: {
                const Tensor& x = in(0);
                Tensor d(x.rows(), x.cols());
                for (std::size_t i = 0; i < x.rows(); ++i)
                    for (std::size_t j = n.begin; j < n.end; ++j) d(i, j) = g(i, j - n.begin);
                accumulate(grads, n.inputs[0], d);
                break;
            }
            case OpKind::concat_cols: {
                std::size_t off = 0;
                for (NodeId p : n.inputs) {
                    std::size_t w = nodes_[p].value.cols();
                    accumulate(grads, p, dgcl::slice_cols(g, off, off + w));
                    off += w;
                }
                break;
            }
            case OpKind::sum: {
                const Tensor& x = in(0);
                accumulate(grads, n.inputs[0], Tensor(x.rows(), x.cols(), g[0]));
                break;
            }
        }
    }

    Gradients out;
    for (NodeId id = 0; id <= loss; ++id) {
        const Node& n = nodes_[id];
        if (n.kind != OpKind::leaf || !n.trainable) continue;
        out.emplace(id, grads[id].empty() ? Tensor(n.value.rows(), n.value.cols()) : grads[id]);
    }
    return out;
}

}  // namespace dgcl
