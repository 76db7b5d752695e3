#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "dgcl/featurebank.hpp"
#include "dgcl/graph.hpp"
#include "dgcl/tensor.hpp"

namespace dgcl {

enum class PositiveReduction { sum, mean };

struct ContrastiveOptions {
    double tau = 0.1;
    bool normalize_projections = true;
    PositiveReduction reduction = PositiveReduction::sum;
};

// Tags for anchors and pool members. Pool domain tags are the training
// domain of the task that owns the sampled class.
struct LossBatch {
    std::vector<ClassId> anchor_classes;
    std::vector<DomainId> anchor_domains;
    std::vector<ClassId> pool_classes;
    std::vector<DomainId> pool_domains;
    double lambda = 0.5;
    ContrastiveOptions options;
};

// A×N positive mask for the class and domain criteria.
Tensor class_positive_mask(const LossBatch& batch);
Tensor domain_positive_mask(const LossBatch& batch);

// anchors A×m, pool N×m, projection m×m_proj, mask A×N of {0,1}.
NodeId contrastive_loss(Graph& g, NodeId anchors, NodeId pool, NodeId projection, const Tensor& mask,
                        const ContrastiveOptions& options);
NodeId loss_cls(Graph& g, NodeId anchors, NodeId pool, NodeId p_cls, const LossBatch& batch);
NodeId loss_dom(Graph& g, NodeId anchors, NodeId pool, NodeId p_dom, const LossBatch& batch);
NodeId loss_dot(Graph& g, NodeId anchors, NodeId pool, NodeId p_cls, NodeId p_dom, const LossBatch& batch);

// Linear head over the classes seen so far, rows in arrival order.
struct OutputHead {
    Tensor weight;  // C×m
    Tensor bias;    // 1×C
    std::vector<ClassId> classes;

    std::size_t size() const { return classes.size(); }
    std::size_t row_of(ClassId c) const;
    Tensor logits(const Tensor& x) const;  // n×C
    // Appends zero-initialised rows.
    void append(const std::vector<ClassId>& new_classes, std::size_t m);
};

// Mean cross-entropy of logits (n×C) against row labels.
NodeId cross_entropy(Graph& g, NodeId logits, const std::vector<std::size_t>& labels);

// mean CE(h(real)) + mean CE(h(pseudo)); pseudo may be omitted (class-only alignment).
NodeId loss_oa(Graph& g, NodeId weight, NodeId bias, NodeId real, const std::vector<std::size_t>& real_labels,
               std::optional<NodeId> pseudo, const std::vector<std::size_t>& pseudo_labels);

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t total_steps = 1;  // cosine span
    bool cosine = true;
};

struct OptimizerState {
    AdamOptions options;
    std::vector<Tensor> first;
    std::vector<Tensor> second;
    std::size_t step = 0;
    double lr = 0.0;  // rate used by the most recent step

    explicit OptimizerState(AdamOptions opts = {}) : options(opts) {}
};

// Cosine decay from lr0 at step 0 towards 0 at step == total.
double cosine_lr(double lr0, std::size_t step, std::size_t total);

void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads, OptimizerState& state);

std::string_view to_string(PositiveReduction r);
PositiveReduction parse_positive_reduction(std::string_view s);

}  // namespace dgcl
