#include "dgcl/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dgcl/error.hpp"

namespace dgcl {

namespace {

template <class Tag>
Tensor positive_mask(const std::vector<Tag>& anchors, const std::vector<Tag>& pool, const char* what) {
    if (anchors.empty() || pool.empty()) fail(ErrorKind::contract, "loss batch needs anchors and a pool");
    Tensor mask(anchors.size(), pool.size());
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        bool any = false;
        for (std::size_t j = 0; j < pool.size(); ++j)
            if (anchors[i] == pool[j]) {
                mask(i, j) = 1.0;
                any = true;
            }
        if (!any) fail(ErrorKind::contract, std::string("anchor ") + std::to_string(i) + " has no " + what + " positive in the pool");
    }
    return mask;
}

}  // namespace

Tensor class_positive_mask(const LossBatch& b) { return positive_mask(b.anchor_classes, b.pool_classes, "class"); }
Tensor domain_positive_mask(const LossBatch& b) { return positive_mask(b.anchor_domains, b.pool_domains, "domain"); }

NodeId contrastive_loss(Graph& g, NodeId anchors, NodeId pool, NodeId projection, const Tensor& mask,
                        const ContrastiveOptions& options) {
    if (!(options.tau > 0.0)) fail(ErrorKind::contract, "temperature must be positive");
    const Tensor& av = g.value(anchors);
    const Tensor& pv = g.value(pool);
    if (mask.rows() != av.rows() || mask.cols() != pv.rows())
        fail(ErrorKind::dimension, "positive mask " + mask.shape_str() + " does not match anchors " + av.shape_str() +
                                       " and pool " + pv.shape_str());
    NodeId za = g.matmul(anchors, projection);
    NodeId zp = g.matmul(pool, projection);
    if (options.normalize_projections) {
        za = g.normalize_rows(za);
        zp = g.normalize_rows(zp);
    }
    NodeId s = g.scale(g.matmul(za, g.transpose(zp)), 1.0 / options.tau);
    NodeId logp = g.log_softmax_rows(s);
    Tensor weights = mask;
    if (options.reduction == PositiveReduction::mean) {
        for (std::size_t i = 0; i < weights.rows(); ++i) {
            double cnt = 0.0;
            for (std::size_t j = 0; j < weights.cols(); ++j) cnt += weights(i, j);
            for (std::size_t j = 0; j < weights.cols(); ++j) weights(i, j) /= cnt;
        }
    }
    NodeId picked = g.mul(logp, g.leaf(std::move(weights)));
    return g.scale(g.sum(picked), -1.0 / static_cast<double>(av.rows()));
}

NodeId loss_cls(Graph& g, NodeId anchors, NodeId pool, NodeId p_cls, const LossBatch& batch) {
    return contrastive_loss(g, anchors, pool, p_cls, class_positive_mask(batch), batch.options);
}

NodeId loss_dom(Graph& g, NodeId anchors, NodeId pool, NodeId p_dom, const LossBatch& batch) {
    return contrastive_loss(g, anchors, pool, p_dom, domain_positive_mask(batch), batch.options);
}

NodeId loss_dot(Graph& g, NodeId anchors, NodeId pool, NodeId p_cls, NodeId p_dom, const LossBatch& batch) {
    if (batch.lambda < 0.0 || batch.lambda > 1.0) fail(ErrorKind::contract, "lambda must lie in [0, 1]");
    NodeId lc = loss_cls(g, anchors, pool, p_cls, batch);
    NodeId ld = loss_dom(g, anchors, pool, p_dom, batch);
    return g.add(g.scale(lc, 1.0 - batch.lambda), g.scale(ld, batch.lambda));
}

std::size_t OutputHead::row_of(ClassId c) const {
    auto it = std::find(classes.begin(), classes.end(), c);
    if (it == classes.end()) fail(ErrorKind::contract, "class " + std::to_string(c) + " has no head row");
    return static_cast<std::size_t>(it - classes.begin());
}

Tensor OutputHead::logits(const Tensor& x) const { return add_row(matmul(x, transpose(weight)), bias); }

void OutputHead::append(const std::vector<ClassId>& new_classes, std::size_t m) {
    std::vector<Tensor> w, b;
    if (!classes.empty()) {
        w.push_back(weight);
        b.push_back(bias);
    }
    w.emplace_back(new_classes.size(), m);
    b.emplace_back(1, new_classes.size());
    weight = concat_rows(w);
    bias = concat_cols(b);
    classes.insert(classes.end(), new_classes.begin(), new_classes.end());
}

NodeId cross_entropy(Graph& g, NodeId logits, const std::vector<std::size_t>& labels) {
    const Tensor& z = g.value(logits);
    if (labels.size() != z.rows()) fail(ErrorKind::dimension, "label count does not match logits rows");
    Tensor onehot(z.rows(), z.cols());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= z.cols())
            fail(ErrorKind::contract, "label " + std::to_string(labels[i]) + " outside head range " + std::to_string(z.cols()));
        onehot(i, labels[i]) = 1.0;
    }
    NodeId picked = g.mul(g.log_softmax_rows(logits), g.leaf(std::move(onehot)));
    return g.scale(g.sum(picked), -1.0 / static_cast<double>(z.rows()));
}

NodeId loss_oa(Graph& g, NodeId weight, NodeId bias, NodeId real, const std::vector<std::size_t>& real_labels,
               std::optional<NodeId> pseudo, const std::vector<std::size_t>& pseudo_labels) {
    NodeId wt = g.transpose(weight);
    NodeId loss = cross_entropy(g, g.add_row(g.matmul(real, wt), bias), real_labels);
    if (pseudo) loss = g.add(loss, cross_entropy(g, g.add_row(g.matmul(*pseudo, wt), bias), pseudo_labels));
    return loss;
}

double cosine_lr(double lr0, std::size_t step, std::size_t total) {
    if (total == 0) return lr0;
    return 0.5 * lr0 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total)));
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads, OptimizerState& state) {
    if (params.size() != grads.size()) fail(ErrorKind::dimension, "adam_step: parameter and gradient counts differ");
    if (state.first.empty()) {
        for (const Tensor* p : params) {
            state.first.emplace_back(p->rows(), p->cols());
            state.second.emplace_back(p->rows(), p->cols());
        }
    }
    if (state.first.size() != params.size()) fail(ErrorKind::dimension, "adam_step: optimizer state size mismatch");
    const auto& o = state.options;
    state.lr = o.cosine ? cosine_lr(o.lr, state.step, o.total_steps) : o.lr;
    ++state.step;
    const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = *grads[k];
        Tensor& m = state.first[k];
        Tensor& v = state.second[k];
        if (!p.same_shape(g) || !p.same_shape(m))
            fail(ErrorKind::dimension, "adam_step: shape mismatch " + p.shape_str() + " vs " + g.shape_str());
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
            v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
            p[i] -= state.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + o.eps);
        }
    }
}

std::string_view to_string(PositiveReduction r) { return r == PositiveReduction::sum ? "sum" : "mean"; }

PositiveReduction parse_positive_reduction(std::string_view s) {
    if (s == "sum") return PositiveReduction::sum;
    if (s == "mean") return PositiveReduction::mean;
    throw Error(ErrorKind::config, "unknown positive reduction '" + std::string(s) + "'", {"positive_reduction"});
}

}  // namespace dgcl
