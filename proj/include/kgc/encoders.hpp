#pragma once

#include <memory>
#include <string>
#include <vector>

#include "kgc/autodiff.hpp"
#include "kgc/data.hpp"
#include "kgc/random.hpp"

namespace kgc {

enum class EncoderKind { mlp, rgcn, compgcn, kbgat };
enum class Activation { tanh, relu, identity };

EncoderKind parse_encoder_kind(const std::string& s);
std::string to_string(EncoderKind k);
Activation parse_activation(const std::string& s);
std::string to_string(Activation a);

struct EncoderConfig {
    EncoderKind kind = EncoderKind::mlp;
    /// Widths d_0 .. d_K; K = dims.size() - 1 layers.
    std::vector<std::size_t> dims{200, 200, 200};
    Activation activation = Activation::tanh;
    double leaky_slope = 0.2;
    /// MLP only: transform the relation table per layer (CompGCN-style) or pass it through.
    bool mlp_relation_transform = true;

    std::size_t layers() const { return dims.empty() ? 0 : dims.size() - 1; }
    std::size_t output_width() const { return dims.back(); }
    /// Width of the input relation table.
    std::size_t relation_width() const;
    void validate() const;
};

/// Edge lists regrouped for the layer kernels. Built once per graph.
struct GraphPlan {
    struct Group {
        ad::IndexList centers;
        ad::IndexList neighbors;
        ad::IndexList relations;
        std::vector<double> norms;  // RGCN 1/c_{h,r}, one per edge
    };

    std::size_t num_entities = 0;
    std::size_t num_relations = 0;  // R
    /// RGCN: one group per relation id in [0, 2R], empty groups dropped.
    std::vector<std::pair<RelationId, Group>> by_relation;
    /// CompGCN: original and inverse directions; self loops handled separately.
    Group original, inverse;
    /// KBGAT: every edge, grouped by center, with a self loop for isolated entities.
    Group attention;
    ad::IndexList attention_offsets;
};

GraphPlan build_graph_plan(const Adjacency& adj, std::size_t num_relations);

template <typename T>
struct Embeddings {
    ad::Var<T> entities;
    ad::Var<T> relations;
};

template <typename T>
ad::Var<T> activate(ad::Var<T> x, Activation g);

/// x'_h = g( sum_{(r,t) in N_h} W_r x_t / c_{h,r} + W_o x_h ).
/// `relation_weights[r]` for r in [0, 2R].
template <typename T>
ad::Var<T> rgcn_layer(const GraphPlan& plan, ad::Var<T> x, const std::vector<ad::Var<T>>& relation_weights,
                      ad::Var<T> self_weight, Activation g);

template <typename T>
struct CompGcnWeights {
    ad::Var<T> original, inverse, self, relation;
};

/// x'_t = g( sum_{(h,r) in N_t + self} W_dir(r) ccorr(x_r, x_h) ), R' = R W_rel^T.
template <typename T>
Embeddings<T> compgcn_layer(const GraphPlan& plan, ad::Var<T> x, ad::Var<T> rel, const CompGcnWeights<T>& w,
                            Activation g);

/// Attention layer; `rel` is the layer-shared relation table.
template <typename T>
ad::Var<T> kbgat_layer(const GraphPlan& plan, ad::Var<T> x, ad::Var<T> rel, ad::Var<T> w1, ad::Var<T> w2,
                       Activation g, T leaky_slope);

/// Attention coefficients the layer would use, one per edge of `plan.attention`.
template <typename T>
ad::Var<T> kbgat_attention(const GraphPlan& plan, ad::Var<T> x, ad::Var<T> rel, ad::Var<T> w1, ad::Var<T> w2,
                           T leaky_slope);

/// One MLP layer: x' = g(W x) row-wise; relations R W_rel^T when `w_rel` is valid.
template <typename T>
Embeddings<T> mlp_layer(ad::Var<T> x, ad::Var<T> rel, ad::Var<T> w, ad::Var<T> w_rel, Activation g);

template <typename T>
void init_encoder_params(const EncoderConfig& cfg, std::size_t num_entities, std::size_t num_relations,
                         ad::ParameterStore<T>& store, Rng& rng);

/// All K layers over the graph described by `plan`.
template <typename T>
Embeddings<T> encode(const EncoderConfig& cfg, const GraphPlan& plan, ad::Tape<T>& tape,
                     const ad::ParameterStore<T>& store);

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
template <typename T>
ad::Tensor<T> uniform_init(ad::Shape shape, std::size_t fan_in, Rng& rng);

std::string layer_param(std::size_t layer, const std::string& name);

}  // namespace kgc
