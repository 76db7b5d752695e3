#include "dgcl/dot_transform.hpp"

#include <cmath>

#include "dgcl/error.hpp"

namespace dgcl {

namespace {

Tensor gaussian(std::size_t rows, std::size_t cols, double sd, Rng& rng) {
    Tensor t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = sd * rng.normal();
    return t;
}

void check_inputs(const DotParameters& p, const Tensor& r_cls, const Tensor& R_dom) {
    if (r_cls.rows() != 1 || r_cls.cols() != p.m())
        fail(ErrorKind::dimension, "r_cls must be 1x" + std::to_string(p.m()) + ", got " + r_cls.shape_str());
    if (R_dom.cols() != p.m())
        fail(ErrorKind::dimension, "R_dom must have " + std::to_string(p.m()) + " columns, got " + R_dom.shape_str());
}

}  // namespace

std::array<Tensor*, DotParameters::kCount> DotParameters::tensors() {
    return {&w_sem, &w_dom, &w_q, &w_k, &w_v, &w_o, &p_cls, &p_dom};
}

std::array<const Tensor*, DotParameters::kCount> DotParameters::tensors() const {
    return {&w_sem, &w_dom, &w_q, &w_k, &w_v, &w_o, &p_cls, &p_dom};
}

double DotParameters::score_scale() const {
    double width = scale == AttentionScale::per_head ? static_cast<double>(m() / heads) : static_cast<double>(m());
    return 1.0 / std::sqrt(width);
}

DotParameters init_dot(const DotConfig& config, Rng& rng) {
    const std::size_t m = config.m;
    const std::size_t mp = config.m_proj ? config.m_proj : m;
    if (m == 0 || config.heads == 0 || m % config.heads != 0)
        fail(ErrorKind::config, "m=" + std::to_string(m) + " must be divisible by heads=" + std::to_string(config.heads));
    const double sd = 1.0 / std::sqrt(static_cast<double>(m));
    DotParameters p;
    p.heads = config.heads;
    p.activation = config.activation;
    p.scale = config.scale;
    p.w_sem = gaussian(m, m, sd, rng);
    p.w_dom = gaussian(m, m, sd, rng);
    p.w_q = gaussian(m, m, sd, rng);
    p.w_k = gaussian(m, m, sd, rng);
    p.w_v = gaussian(m, m, sd, rng);
    // Drawn unconditionally so the other weights do not depend on the init mode.
    Tensor w_o = gaussian(m, m, sd, rng);
    p.w_o = config.readout_init == ReadoutInit::gaussian ? std::move(w_o) : Tensor(m, m);
    p.p_cls = gaussian(m, mp, sd, rng);
    p.p_dom = gaussian(m, mp, sd, rng);
    return p;
}

Tensor apply_activation(Activation act, const Tensor& x) {
    switch (act) {
        case Activation::relu: return relu(x);
        case Activation::gelu: return gelu(x);
        case Activation::identity: return x;
    }
    return x;
}

Embedding embed(const DotParameters& p, const Tensor& r_cls, const Tensor& R_dom) {
    check_inputs(p, r_cls, R_dom);
    return {matmul(r_cls, p.w_sem), matmul(R_dom, p.w_dom)};
}

Tensor attend(const DotParameters& p, const Tensor& e_sem, const Tensor& e_dom, std::vector<Tensor>* weights) {
    check_inputs(p, e_sem, e_dom);
    const std::size_t m = p.m(), H = p.heads, dh = m / H, L = e_dom.rows();
    Tensor q = matmul(e_sem, p.w_q);
    Tensor k = matmul(e_dom, p.w_k);
    Tensor v = matmul(e_dom, p.w_v);
    const double s = p.score_scale();
    Tensor a(1, m);
    if (weights) weights->clear();
    for (std::size_t h = 0; h < H; ++h) {
        Tensor scores(1, L);
        for (std::size_t l = 0; l < L; ++l) {
            double acc = 0.0;
            for (std::size_t j = h * dh; j < (h + 1) * dh; ++j) acc += q[j] * k(l, j);
            scores[l] = acc * s;
        }
        Tensor w = softmax_rows(scores);
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t j = h * dh; j < (h + 1) * dh; ++j) a[j] += w[l] * v(l, j);
        if (weights) weights->push_back(std::move(w));
    }
    return a;
}

Tensor readout(const DotParameters& p, const Tensor& r_cls, const Tensor& a) {
    return apply_activation(p.activation, add(r_cls, matmul(a, p.w_o)));
}

Tensor dot_forward(const DotParameters& p, const Tensor& r_cls, const Tensor& R_dom) {
    Embedding e = embed(p, r_cls, R_dom);
    return readout(p, r_cls, attend(p, e.e_sem, e.e_dom));
}

Tensor dot_forward_batch(const DotParameters& p, const Tensor& r_cls, const std::vector<const Tensor*>& R_dom) {
    if (r_cls.rows() != R_dom.size())
        fail(ErrorKind::dimension, "dot_forward_batch: " + std::to_string(r_cls.rows()) + " features but " +
                                       std::to_string(R_dom.size()) + " prototype stacks");
    const std::size_t n = r_cls.rows(), m = p.m(), H = p.heads, dh = m / H;
    Tensor q = matmul(matmul(r_cls, p.w_sem), p.w_q);
    std::vector<Tensor> stacks;
    stacks.reserve(n);
    for (const Tensor* R : R_dom) stacks.push_back(*R);
    Tensor e_dom = matmul(concat_rows(stacks), p.w_dom);
    Tensor k = matmul(e_dom, p.w_k);
    Tensor v = matmul(e_dom, p.w_v);
    const double s = p.score_scale();
    Tensor a(n, m);
    std::size_t base = 0;
    std::vector<double> w;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t L = R_dom[i]->rows();
        w.resize(L);
        for (std::size_t h = 0; h < H; ++h) {
            double mx = -INFINITY;
            for (std::size_t l = 0; l < L; ++l) {
                double acc = 0.0;
                for (std::size_t j = h * dh; j < (h + 1) * dh; ++j) acc += q(i, j) * k(base + l, j);
                w[l] = acc * s;
                mx = std::max(mx, w[l]);
            }
            double z = 0.0;
            for (std::size_t l = 0; l < L; ++l) z += (w[l] = std::exp(w[l] - mx));
            for (std::size_t l = 0; l < L; ++l)
                for (std::size_t j = h * dh; j < (h + 1) * dh; ++j) a(i, j) += (w[l] / z) * v(base + l, j);
        }
        base += L;
    }
    return apply_activation(p.activation, add(r_cls, matmul(a, p.w_o)));
}

DotNodes add_parameters(Graph& g, const DotParameters& p, bool trainable) {
    DotNodes nodes;
    auto ts = p.tensors();
    for (std::size_t i = 0; i < DotParameters::kCount; ++i) nodes.ids[i] = g.leaf(*ts[i], trainable);
    return nodes;
}

NodeId dot_forward(Graph& g, const DotNodes& nodes, const DotParameters& p, NodeId r_cls, NodeId R_dom) {
    check_inputs(p, g.value(r_cls), g.value(R_dom));
    const std::size_t m = p.m(), H = p.heads, dh = m / H;
    NodeId e_sem = g.matmul(r_cls, nodes.w_sem());
    NodeId e_dom = g.matmul(R_dom, nodes.w_dom());
    NodeId q = g.matmul(e_sem, nodes.w_q());
    NodeId k = g.matmul(e_dom, nodes.w_k());
    NodeId v = g.matmul(e_dom, nodes.w_v());
    std::vector<NodeId> heads;
    for (std::size_t h = 0; h < H; ++h) {
        NodeId qh = g.slice_cols(q, h * dh, (h + 1) * dh);
        NodeId kh = g.slice_cols(k, h * dh, (h + 1) * dh);
        NodeId vh = g.slice_cols(v, h * dh, (h + 1) * dh);
        NodeId w = g.softmax_rows(g.scale(g.matmul(qh, g.transpose(kh)), p.score_scale()));
        heads.push_back(g.matmul(w, vh));
    }
    NodeId a = H == 1 ? heads.front() : g.concat_cols(heads);
    NodeId pre = g.add(r_cls, g.matmul(a, nodes.w_o()));
    switch (p.activation) {
        case Activation::relu: return g.relu(pre);
        case Activation::gelu: return g.gelu(pre);
        case Activation::identity: return pre;
    }
    return pre;
}

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::gelu: return "gelu";
        case Activation::identity: return "identity";
    }
    return "relu";
}
std::string_view to_string(AttentionScale s) { return s == AttentionScale::per_head ? "per_head" : "full_width"; }
std::string_view to_string(ReadoutInit r) { return r == ReadoutInit::zero ? "zero" : "gaussian"; }

Activation parse_activation(std::string_view s) {
    if (s == "relu") return Activation::relu;
    if (s == "gelu") return Activation::gelu;
    if (s == "identity") return Activation::identity;
    throw Error(ErrorKind::config, "unknown activation '" + std::string(s) + "'", {"activation"});
}

AttentionScale parse_attention_scale(std::string_view s) {
    if (s == "per_head") return AttentionScale::per_head;
    if (s == "full_width") return AttentionScale::full_width;
    throw Error(ErrorKind::config, "unknown attention scale '" + std::string(s) + "'", {"scale"});
}

ReadoutInit parse_readout_init(std::string_view s) {
    if (s == "zero") return ReadoutInit::zero;
    if (s == "gaussian") return ReadoutInit::gaussian;
    throw Error(ErrorKind::config, "unknown readout init '" + std::string(s) + "'", {"readout_init"});
}

}  // namespace dgcl
