#include "kgc/model.hpp"

#include <algorithm>

#include "kgc/error.hpp"

namespace kgc {

using ad::Index;
using ad::make_indices;

void ModelConfig::validate() const {
    encoder.validate();
    scorer.validate(encoder.output_width());
}

template <typename T>
ad::ParameterStore<T> init_model(const ModelConfig& cfg, std::size_t N, std::size_t R, std::uint64_t seed) {
    cfg.validate();
    ad::ParameterStore<T> store(seed);
    Rng rng(derive_seed(seed, 1));
    init_encoder_params(cfg.encoder, N, R, store, rng);
    init_scorer_params(cfg.scorer, cfg.encoder.kind, cfg.encoder.output_width(), N, R, store, rng);
    return store;
}

GraphPlan model_plan(const ModelConfig& cfg, const KnowledgeGraph& kg) {
    if (cfg.graph_mode == kg.graph_mode && (cfg.graph_mode != GraphMode::random || cfg.graph_seed == kg.graph_seed))
        return build_graph_plan(kg.adjacency, kg.num_relations());
    return build_graph_plan(
        build_adjacency(kg.train_aug, kg.num_entities(), kg.num_relations(), cfg.graph_mode, cfg.graph_seed),
        kg.num_relations());
}

template <typename T>
BatchForward<T> forward_batch(const ModelConfig& cfg, const GraphPlan& plan, ad::Tape<T>& tape,
                              const ad::ParameterStore<T>& store, std::span<const Triple> batch,
                              DropoutContext dropout) {
    std::vector<Index> heads(batch.size()), rels(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        heads[i] = batch[i].head;
        rels[i] = batch[i].rel;
    }
    BatchForward<T> f;
    f.emb = encode(cfg.encoder, plan, tape, store);
    f.queries = query_vectors(cfg.scorer, cfg.encoder.kind, plan.num_relations, tape, store, f.emb,
                              make_indices(std::move(heads)), make_indices(std::move(rels)), dropout);
    return f;
}

FrozenModel::FrozenModel(ModelConfig cfg, ad::ParameterStore<float> params, const GraphPlan& plan)
    : cfg_(std::move(cfg)), params_(std::move(params)), num_relations_(plan.num_relations) {
    ad::Tape<float> tape;
    Embeddings<float> emb = encode(cfg_.encoder, plan, tape, params_);
    entities_ = emb.entities.value();
    relations_ = emb.relations.value();
}

void FrozenModel::score_rows(std::span<const Query> queries, std::span<double> out) const {
    const std::size_t N = num_entities();
    if (out.size() != queries.size() * N) throw ShapeError("score_rows: output buffer has the wrong size");
    if (queries.empty()) return;
    std::vector<Index> heads(queries.size()), rels(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        if (queries[i].head >= N || queries[i].rel >= 2 * num_relations_)
            throw ContractError("score_rows: query id out of range");
        heads[i] = queries[i].head;
        rels[i] = queries[i].rel;
    }
    ad::Tape<float> tape;
    Embeddings<float> emb{tape.constant_ref(entities_), tape.constant_ref(relations_)};
    auto q = query_vectors(cfg_.scorer, cfg_.encoder.kind, num_relations_, tape, params_, emb,
                           make_indices(std::move(heads)), make_indices(std::move(rels)));
    const auto& s = score_all(cfg_.scorer, tape, params_, emb.entities, q).value();
    std::copy(s.storage().begin(), s.storage().end(), out.begin());
}

template ad::ParameterStore<float> init_model<float>(const ModelConfig&, std::size_t, std::size_t, std::uint64_t);
template ad::ParameterStore<double> init_model<double>(const ModelConfig&, std::size_t, std::size_t,
                                                       std::uint64_t);
template BatchForward<float> forward_batch<float>(const ModelConfig&, const GraphPlan&, ad::Tape<float>&,
                                                  const ad::ParameterStore<float>&, std::span<const Triple>,
                                                  DropoutContext);
template BatchForward<double> forward_batch<double>(const ModelConfig&, const GraphPlan&, ad::Tape<double>&,
                                                    const ad::ParameterStore<double>&, std::span<const Triple>,
                                                    DropoutContext);

}  // namespace kgc
