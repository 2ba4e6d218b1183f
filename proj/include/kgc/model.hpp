#pragma once

#include <span>

#include "kgc/data.hpp"
#include "kgc/encoders.hpp"
#include "kgc/scorers.hpp"

namespace kgc {

struct ModelConfig {
    EncoderConfig encoder;
    ScorerConfig scorer;
    GraphMode graph_mode = GraphMode::original;
    std::uint64_t graph_seed = 0;

    void validate() const;
};

/// Encoder and scorer parameters, drawn from `seed`.
template <typename T>
ad::ParameterStore<T> init_model(const ModelConfig& cfg, std::size_t num_entities, std::size_t num_relations,
                                 std::uint64_t seed);

/// Plan over the graph the model's graph_mode asks for.
GraphPlan model_plan(const ModelConfig& cfg, const KnowledgeGraph& kg);

/// Training-time forward pass for one batch: encode then build query vectors.
template <typename T>
struct BatchForward {
    Embeddings<T> emb;
    ad::Var<T> queries;
};

template <typename T>
BatchForward<T> forward_batch(const ModelConfig& cfg, const GraphPlan& plan, ad::Tape<T>& tape,
                              const ad::ParameterStore<T>& store, std::span<const Triple> batch,
                              DropoutContext dropout = {});

struct Query {
    EntityId head = 0;
    RelationId rel = 0;
};

/// Anything that yields a full score row per query.
class RowScorer {
public:
    virtual ~RowScorer() = default;
    virtual std::size_t num_entities() const = 0;
    /// `out` holds queries.size() rows of num_entities() scores.
    virtual void score_rows(std::span<const Query> queries, std::span<double> out) const = 0;
};

/// Trained parameters with the encoder output computed once.
class FrozenModel : public RowScorer {
public:
    FrozenModel(ModelConfig cfg, ad::ParameterStore<float> params, const GraphPlan& plan);

    std::size_t num_entities() const override { return entities_.rows(); }
    void score_rows(std::span<const Query> queries, std::span<double> out) const override;

    const ModelConfig& config() const { return cfg_; }
    const ad::ParameterStore<float>& params() const { return params_; }
    const ad::Tensor<float>& entities() const { return entities_; }
    const ad::Tensor<float>& relations() const { return relations_; }

private:
    ModelConfig cfg_;
    ad::ParameterStore<float> params_;
    std::size_t num_relations_;
    ad::Tensor<float> entities_, relations_;
};

}  // namespace kgc
