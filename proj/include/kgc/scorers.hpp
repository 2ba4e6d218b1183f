#pragma once

#include <string>

#include "kgc/autodiff.hpp"
#include "kgc/encoders.hpp"
#include "kgc/random.hpp"

namespace kgc {

enum class ScorerKind { distmult, conve };
/// Where DistMult takes its diagonal from. `automatic` picks the independent
/// table for rgcn and the encoder's relation output otherwise.
enum class DiagonalSource { automatic, relation_embedding, independent_table };

ScorerKind parse_scorer_kind(const std::string& s);
std::string to_string(ScorerKind k);
DiagonalSource parse_diagonal_source(const std::string& s);
std::string to_string(DiagonalSource s);

struct ScorerConfig {
    ScorerKind kind = ScorerKind::conve;
    DiagonalSource diagonal = DiagonalSource::automatic;
    // ConvE
    std::size_t rows = 10, cols = 20;
    std::size_t filters = 32;
    std::size_t kernel_h = 3, kernel_w = 3;
    double input_dropout = 0.0, feature_dropout = 0.0, hidden_dropout = 0.0;
    bool tail_bias = true;

    /// Resolved diagonal source for this encoder.
    DiagonalSource diagonal_for(EncoderKind encoder) const;
    /// Throws ConfigError when the scorer cannot consume width `d`.
    void validate(std::size_t d) const;
    std::size_t conv_out_h() const { return 2 * rows - kernel_h + 1; }
    std::size_t conv_out_w() const { return cols - kernel_w + 1; }
};

/// Dropout masks are drawn only when `rng` is set (training).
struct DropoutContext {
    Rng* rng = nullptr;
    bool active() const { return rng != nullptr; }
};

template <typename T>
void init_scorer_params(const ScorerConfig& cfg, EncoderKind encoder, std::size_t d, std::size_t num_entities,
                        std::size_t num_relations, ad::ParameterStore<T>& store, Rng& rng);

/// Query vectors q with score(h, r, t) = q . x_t (+ bias_t): one row per
/// (heads[i], rels[i]). `relations` is the encoder's relation output.
template <typename T>
ad::Var<T> query_vectors(const ScorerConfig& cfg, EncoderKind encoder, std::size_t num_relations,
                         ad::Tape<T>& tape, const ad::ParameterStore<T>& store, const Embeddings<T>& emb,
                         ad::IndexList heads, ad::IndexList rels, DropoutContext dropout = {});

/// [B, N] scores against every entity.
template <typename T>
ad::Var<T> score_all(const ScorerConfig& cfg, ad::Tape<T>& tape, const ad::ParameterStore<T>& store,
                     ad::Var<T> entities, ad::Var<T> queries);

/// Scores of query i against candidates[i*per_query .. (i+1)*per_query), flattened to [B*per_query].
template <typename T>
ad::Var<T> score_candidates(const ScorerConfig& cfg, ad::Tape<T>& tape, const ad::ParameterStore<T>& store,
                            ad::Var<T> entities, ad::Var<T> queries, ad::IndexList candidates,
                            std::size_t per_query);

/// sum_i x_h[i] * r_diag[i] * x_t[i] over rank-1 inputs; shape {1}.
template <typename T>
ad::Var<T> distmult_score(ad::Var<T> x_h, ad::Var<T> r_diag, ad::Var<T> x_t);

/// Single-triple ConvE score over rank-1 inputs; bias not included.
/// `filters` is [F,1,kh,kw], `projection` is [F*Ho*Wo, d].
template <typename T>
ad::Var<T> conve_score(const ScorerConfig& cfg, ad::Var<T> x_h, ad::Var<T> x_r, ad::Var<T> x_t,
                       ad::Var<T> filters, ad::Var<T> projection);

}  // namespace kgc
