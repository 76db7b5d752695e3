#pragma once

#include <array>
#include <cstddef>
#include <string_view>
#include <vector>

#include "dgcl/graph.hpp"
#include "dgcl/rng.hpp"
#include "dgcl/tensor.hpp"

namespace dgcl {

enum class Activation { relu, gelu, identity };
enum class AttentionScale { per_head, full_width };
enum class ReadoutInit { zero, gaussian };

struct DotConfig {
    std::size_t m = 0;
    std::size_t m_proj = 0;  // 0 means m
    std::size_t heads = 4;
    Activation activation = Activation::relu;
    AttentionScale scale = AttentionScale::per_head;
    ReadoutInit readout_init = ReadoutInit::zero;
};

struct DotParameters {
    Tensor w_sem, w_dom, w_q, w_k, w_v, w_o;
    Tensor p_cls, p_dom;  // m×m_proj
    std::size_t heads = 1;
    Activation activation = Activation::relu;
    AttentionScale scale = AttentionScale::per_head;

    static constexpr std::size_t kCount = 8;
    static constexpr std::array<std::string_view, kCount> kNames = {"w_sem", "w_dom", "w_q", "w_k",
                                                                     "w_v",   "w_o",   "p_cls", "p_dom"};
    std::array<Tensor*, kCount> tensors();
    std::array<const Tensor*, kCount> tensors() const;

    std::size_t m() const { return w_sem.rows(); }
    double score_scale() const;
};

// N(0, 1/m) weights; W_O zero unless readout_init is gaussian.
DotParameters init_dot(const DotConfig& config, Rng& rng);

struct Embedding {
    Tensor e_sem;  // 1×m
    Tensor e_dom;  // L×m
};

Embedding embed(const DotParameters& p, const Tensor& r_cls, const Tensor& R_dom);
// Optional weights receives one 1×L row per head.
Tensor attend(const DotParameters& p, const Tensor& e_sem, const Tensor& e_dom, std::vector<Tensor>* weights = nullptr);
Tensor readout(const DotParameters& p, const Tensor& r_cls, const Tensor& a);
Tensor dot_forward(const DotParameters& p, const Tensor& r_cls, const Tensor& R_dom);

// Row i of r_cls is paired with R_dom[i]; returns n×m pseudo-features.
Tensor dot_forward_batch(const DotParameters& p, const Tensor& r_cls, const std::vector<const Tensor*>& R_dom);

Tensor apply_activation(Activation act, const Tensor& x);

struct DotNodes {
    std::array<NodeId, DotParameters::kCount> ids{};
    NodeId w_sem() const { return ids[0]; }
    NodeId w_dom() const { return ids[1]; }
    NodeId w_q() const { return ids[2]; }
    NodeId w_k() const { return ids[3]; }
    NodeId w_v() const { return ids[4]; }
    NodeId w_o() const { return ids[5]; }
    NodeId p_cls() const { return ids[6]; }
    NodeId p_dom() const { return ids[7]; }
};

DotNodes add_parameters(Graph& g, const DotParameters& p, bool trainable);
// Records dot_forward for a single 1×m feature and its L×m prototype stack.
NodeId dot_forward(Graph& g, const DotNodes& nodes, const DotParameters& p, NodeId r_cls, NodeId R_dom);

std::string_view to_string(Activation a);
std::string_view to_string(AttentionScale s);
std::string_view to_string(ReadoutInit r);
Activation parse_activation(std::string_view s);
AttentionScale parse_attention_scale(std::string_view s);
ReadoutInit parse_readout_init(std::string_view s);

}  // namespace dgcl
