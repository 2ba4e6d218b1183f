#include "kgc/encoders.hpp"

#include <cmath>
#include <map>

#include "kgc/error.hpp"

namespace kgc {

using ad::Index;
using ad::IndexList;
using ad::make_indices;
using ad::Var;

EncoderKind parse_encoder_kind(const std::string& s) {
    if (s == "mlp") return EncoderKind::mlp;
    if (s == "rgcn") return EncoderKind::rgcn;
    if (s == "compgcn") return EncoderKind::compgcn;
    if (s == "kbgat") return EncoderKind::kbgat;
    throw ConfigError("encoder.kind: unknown encoder '" + s + "' (expected mlp, rgcn, compgcn or kbgat)");
}

std::string to_string(EncoderKind k) {
    switch (k) {
        case EncoderKind::mlp: return "mlp";
        case EncoderKind::rgcn: return "rgcn";
        case EncoderKind::compgcn: return "compgcn";
        case EncoderKind::kbgat: return "kbgat";
    }
    return "unknown";
}

Activation parse_activation(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    if (s == "identity") return Activation::identity;
    throw ConfigError("encoder.activation: unknown activation '" + s + "' (expected tanh, relu or identity)");
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
        case Activation::identity: return "identity";
    }
    return "unknown";
}

std::size_t EncoderConfig::relation_width() const {
    switch (kind) {
        case EncoderKind::compgcn: return dims.front();
        case EncoderKind::mlp: return mlp_relation_transform ? dims.front() : dims.back();
        case EncoderKind::rgcn:
        case EncoderKind::kbgat: return dims.back();
    }
    return dims.back();
}

void EncoderConfig::validate() const {
    if (dims.size() < 2) throw ConfigError("encoder.dims: need at least two widths (K >= 1 layers)");
    for (std::size_t d : dims)
        if (d == 0) throw ConfigError("encoder.dims: widths must be positive");
    if (!(leaky_slope >= 0.0 && leaky_slope < 1.0))
        throw ConfigError("encoder.leaky_slope: must lie in [0, 1)");
}

std::string layer_param(std::size_t layer, const std::string& name) {
    return "layer" + std::to_string(layer) + "." + name;
}

// ---------------------------------------------------------------------------

GraphPlan build_graph_plan(const Adjacency& adj, std::size_t num_relations) {
    GraphPlan plan;
    plan.num_entities = adj.num_entities;
    plan.num_relations = num_relations;
    const auto R = static_cast<RelationId>(num_relations);
    const RelationId self = 2 * R;

    struct Lists {
        std::vector<Index> c, n, r;
        std::vector<double> norms;
    };
    std::map<RelationId, Lists> rel_lists;
    Lists orig, inv, att;
    std::vector<Index> att_offsets{0};

    for (std::size_t e = 0; e < adj.num_entities; ++e) {
        const std::size_t b = adj.offsets[e], end = adj.offsets[e + 1];
        std::map<RelationId, std::size_t> counts;
        for (std::size_t i = b; i < end; ++i) ++counts[adj.relation[i]];
        for (std::size_t i = b; i < end; ++i) {
            const RelationId r = adj.relation[i];
            const EntityId n = adj.neighbor[i];
            if (r > self) throw ConfigError("graph: edge uses relation id " + std::to_string(r) + " beyond 2R");
            Lists& l = rel_lists[r];
            l.c.push_back(static_cast<Index>(e));
            l.n.push_back(n);
            l.r.push_back(r);
            l.norms.push_back(1.0 / static_cast<double>(counts[r]));
            if (r < R) {
                orig.c.push_back(static_cast<Index>(e));
                orig.n.push_back(n);
                orig.r.push_back(r);
            } else if (r < self) {
                inv.c.push_back(static_cast<Index>(e));
                inv.n.push_back(n);
                inv.r.push_back(r);
            }
            att.c.push_back(static_cast<Index>(e));
            att.n.push_back(n);
            att.r.push_back(r);
        }
        if (b == end) {
            att.c.push_back(static_cast<Index>(e));
            att.n.push_back(static_cast<Index>(e));
            att.r.push_back(self);
        }
        att_offsets.push_back(static_cast<Index>(att.c.size()));
    }

    auto to_group = [](Lists& l) {
        GraphPlan::Group g;
        g.centers = make_indices(std::move(l.c));
        g.neighbors = make_indices(std::move(l.n));
        g.relations = make_indices(std::move(l.r));
        g.norms = std::move(l.norms);
        return g;
    };
    for (auto& [r, l] : rel_lists) plan.by_relation.emplace_back(r, to_group(l));
    plan.original = to_group(orig);
    plan.inverse = to_group(inv);
    plan.attention = to_group(att);
    plan.attention_offsets = make_indices(std::move(att_offsets));
    return plan;
}

// ---------------------------------------------------------------------------

template <typename T>
Var<T> activate(Var<T> x, Activation g) {
    switch (g) {
        case Activation::tanh: return ad::tanh(x);
        case Activation::relu: return ad::relu(x);
        case Activation::identity: return x;
    }
    return x;
}

template <typename T>
Var<T> rgcn_layer(const GraphPlan& plan, Var<T> x, const std::vector<Var<T>>& relation_weights, Var<T> self_weight,
                  Activation g) {
    ad::Tape<T>& tape = *x.tape();
    Var<T> out = ad::matmul(x, self_weight, false, true);
    std::vector<Var<T>> messages;
    std::vector<Index> centers;
    for (const auto& [r, grp] : plan.by_relation) {
        if (r >= relation_weights.size())
            throw ConfigError("rgcn: no weight matrix for relation id " + std::to_string(r));
        Var<T> nb = ad::gather_rows(x, grp.neighbors);
        ad::Tensor<T> norms({grp.norms.size()});
        for (std::size_t i = 0; i < grp.norms.size(); ++i) norms[i] = static_cast<T>(grp.norms[i]);
        nb = ad::scale_rows(nb, tape.constant(std::move(norms)));
        messages.push_back(ad::matmul(nb, relation_weights[r], false, true));
        centers.insert(centers.end(), grp.centers->begin(), grp.centers->end());
    }
    if (!messages.empty()) {
        Var<T> all = messages.size() == 1 ? messages[0] : ad::concat<T>(messages, 0);
        out = ad::add(out, ad::scatter_add_rows(all, make_indices(std::move(centers)), plan.num_entities));
    }
    return activate(out, g);
}

template <typename T>
Embeddings<T> compgcn_layer(const GraphPlan& plan, Var<T> x, Var<T> rel, const CompGcnWeights<T>& w,
                            Activation g) {
    const std::size_t N = plan.num_entities;
    std::vector<Var<T>> messages;
    std::vector<Index> centers;
    auto direction = [&](const GraphPlan::Group& grp, Var<T> weight) {
        if (grp.centers->empty()) return;
        Var<T> composed = ad::ccorr_rows(ad::gather_rows(rel, grp.relations), ad::gather_rows(x, grp.neighbors));
        messages.push_back(ad::matmul(composed, weight, false, true));
        centers.insert(centers.end(), grp.centers->begin(), grp.centers->end());
    };
    direction(plan.original, w.original);
    direction(plan.inverse, w.inverse);

    const auto self_rel = static_cast<Index>(2 * plan.num_relations);
    Var<T> self_composed = ad::ccorr_rows(ad::gather_rows(rel, make_indices(std::vector<Index>(N, self_rel))), x);
    Var<T> self_msg = ad::matmul(self_composed, w.self, false, true);

    Var<T> aggregated;
    if (messages.empty()) {
        aggregated = self_msg;
    } else {
        messages.push_back(self_msg);
        for (std::size_t e = 0; e < N; ++e) centers.push_back(static_cast<Index>(e));
        aggregated = ad::scatter_add_rows(ad::concat<T>(messages, 0), make_indices(std::move(centers)), N);
    }
    return {activate(aggregated, g), ad::matmul(rel, w.relation, false, true)};
}

template <typename T>
Var<T> kbgat_attention_impl(const GraphPlan& plan, Var<T> x, Var<T> rel, Var<T> w1, Var<T> w2, T slope,
                            Var<T>* projected) {
    const auto& grp = plan.attention;
    std::vector<Var<T>> parts{ad::gather_rows(x, grp.centers), ad::gather_rows(x, grp.neighbors),
                              ad::gather_rows(rel, grp.relations)};
    Var<T> c = ad::matmul(ad::concat<T>(parts, 1), w1, false, true);
    Var<T> logits = ad::leaky_relu(ad::matmul(c, w2, false, true), slope);
    logits = ad::reshape(logits, {grp.centers->size()});
    if (projected) *projected = c;
    return ad::segment_softmax(logits, plan.attention_offsets);
}

template <typename T>
Var<T> kbgat_attention(const GraphPlan& plan, Var<T> x, Var<T> rel, Var<T> w1, Var<T> w2, T slope) {
    return kbgat_attention_impl<T>(plan, x, rel, w1, w2, slope, nullptr);
}

template <typename T>
Var<T> kbgat_layer(const GraphPlan& plan, Var<T> x, Var<T> rel, Var<T> w1, Var<T> w2, Activation g, T slope) {
    Var<T> c;
    Var<T> alpha = kbgat_attention_impl(plan, x, rel, w1, w2, slope, &c);
    Var<T> weighted = ad::scale_rows(c, alpha);
    return activate(ad::scatter_add_rows(weighted, plan.attention.centers, plan.num_entities), g);
}

template <typename T>
Embeddings<T> mlp_layer(Var<T> x, Var<T> rel, Var<T> w, Var<T> w_rel, Activation g) {
    Var<T> xe = activate(ad::matmul(x, w, false, true), g);
    Var<T> xr = w_rel.valid() ? ad::matmul(rel, w_rel, false, true) : rel;
    return {xe, xr};
}

// ---------------------------------------------------------------------------

template <typename T>
ad::Tensor<T> uniform_init(ad::Shape shape, std::size_t fan_in, Rng& rng) {
    ad::Tensor<T> t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.storage()) v = static_cast<T>(rng.uniform(-bound, bound));
    return t;
}

template <typename T>
void init_encoder_params(const EncoderConfig& cfg, std::size_t N, std::size_t R, ad::ParameterStore<T>& store,
                         Rng& rng) {
    cfg.validate();
    const std::size_t slots = 2 * R + 1;
    const std::size_t d0 = cfg.dims.front(), dr = cfg.relation_width(), dK = cfg.dims.back();
    store.add("entity", uniform_init<T>({N, d0}, d0, rng));
    store.add("relation", uniform_init<T>({slots, dr}, dr, rng));
    for (std::size_t k = 0; k < cfg.layers(); ++k) {
        const std::size_t din = cfg.dims[k], dout = cfg.dims[k + 1];
        auto square = [&](const std::string& name) {
            store.add(layer_param(k, name), uniform_init<T>({dout, din}, din, rng));
        };
        switch (cfg.kind) {
            case EncoderKind::mlp:
                square("W");
                if (cfg.mlp_relation_transform) square("W_rel");
                break;
            case EncoderKind::rgcn:
                for (std::size_t r = 0; r < slots; ++r) square("W_r" + std::to_string(r));
                square("W_o");
                break;
            case EncoderKind::compgcn:
                square("W_orig");
                square("W_inv");
                square("W_self");
                square("W_rel");
                break;
            case EncoderKind::kbgat:
                store.add(layer_param(k, "W1"), uniform_init<T>({dout, 2 * din + dK}, 2 * din + dK, rng));
                store.add(layer_param(k, "W2"), uniform_init<T>({1, dout}, dout, rng));
                break;
        }
    }
}

template <typename T>
Embeddings<T> encode(const EncoderConfig& cfg, const GraphPlan& plan, ad::Tape<T>& tape,
                     const ad::ParameterStore<T>& store) {
    Embeddings<T> emb{tape.param(store, "entity"), tape.param(store, "relation")};
    auto p = [&](std::size_t k, const std::string& name) { return tape.param(store, layer_param(k, name)); };
    const std::size_t slots = 2 * plan.num_relations + 1;
    for (std::size_t k = 0; k < cfg.layers(); ++k) {
        switch (cfg.kind) {
            case EncoderKind::mlp:
                emb = mlp_layer(emb.entities, emb.relations, p(k, "W"),
                                cfg.mlp_relation_transform ? p(k, "W_rel") : Var<T>(), cfg.activation);
                break;
            case EncoderKind::rgcn: {
                std::vector<Var<T>> wr;
                wr.reserve(slots);
                for (std::size_t r = 0; r < slots; ++r) wr.push_back(p(k, "W_r" + std::to_string(r)));
                emb.entities = rgcn_layer(plan, emb.entities, wr, p(k, "W_o"), cfg.activation);
                break;
            }
            case EncoderKind::compgcn:
                emb = compgcn_layer(plan, emb.entities, emb.relations,
                                    CompGcnWeights<T>{p(k, "W_orig"), p(k, "W_inv"), p(k, "W_self"), p(k, "W_rel")},
                                    cfg.activation);
                break;
            case EncoderKind::kbgat:
                emb.entities = kbgat_layer(plan, emb.entities, emb.relations, p(k, "W1"), p(k, "W2"),
                                           cfg.activation, static_cast<T>(cfg.leaky_slope));
                break;
        }
    }
    return emb;
}

#define KGC_INSTANTIATE_ENCODERS(T)                                                                              \
    template Var<T> activate<T>(Var<T>, Activation);                                                             \
    template Var<T> rgcn_layer<T>(const GraphPlan&, Var<T>, const std::vector<Var<T>>&, Var<T>, Activation);     \
    template Embeddings<T> compgcn_layer<T>(const GraphPlan&, Var<T>, Var<T>, const CompGcnWeights<T>&,          \
                                            Activation);                                                         \
    template Var<T> kbgat_layer<T>(const GraphPlan&, Var<T>, Var<T>, Var<T>, Var<T>, Activation, T);             \
    template Var<T> kbgat_attention<T>(const GraphPlan&, Var<T>, Var<T>, Var<T>, Var<T>, T);                     \
    template Embeddings<T> mlp_layer<T>(Var<T>, Var<T>, Var<T>, Var<T>, Activation);                             \
    template ad::Tensor<T> uniform_init<T>(ad::Shape, std::size_t, Rng&);                                        \
    template void init_encoder_params<T>(const EncoderConfig&, std::size_t, std::size_t, ad::ParameterStore<T>&, \
                                         Rng&);                                                                  \
    template Embeddings<T> encode<T>(const EncoderConfig&, const GraphPlan&, ad::Tape<T>&,                       \
                                     const ad::ParameterStore<T>&);

KGC_INSTANTIATE_ENCODERS(float)
KGC_INSTANTIATE_ENCODERS(double)

}  // namespace kgc
