#include "kgc/scorers.hpp"

#include "kgc/error.hpp"

namespace kgc {

using ad::Index;
using ad::IndexList;
using ad::make_indices;
using ad::Tensor;
using ad::Var;

ScorerKind parse_scorer_kind(const std::string& s) {
    if (s == "distmult") return ScorerKind::distmult;
    if (s == "conve") return ScorerKind::conve;
    throw ConfigError("scorer.kind: unknown scorer '" + s + "' (expected distmult or conve)");
}

std::string to_string(ScorerKind k) { return k == ScorerKind::distmult ? "distmult" : "conve"; }

DiagonalSource parse_diagonal_source(const std::string& s) {
    if (s == "auto") return DiagonalSource::automatic;
    if (s == "relation_embedding") return DiagonalSource::relation_embedding;
    if (s == "independent_table") return DiagonalSource::independent_table;
    throw ConfigError("scorer.diagonal: unknown source '" + s +
                      "' (expected auto, relation_embedding or independent_table)");
}

std::string to_string(DiagonalSource s) {
    switch (s) {
        case DiagonalSource::automatic: return "auto";
        case DiagonalSource::relation_embedding: return "relation_embedding";
        case DiagonalSource::independent_table: return "independent_table";
    }
    return "auto";
}

DiagonalSource ScorerConfig::diagonal_for(EncoderKind encoder) const {
    if (diagonal != DiagonalSource::automatic) return diagonal;
    return encoder == EncoderKind::rgcn ? DiagonalSource::independent_table : DiagonalSource::relation_embedding;
}

void ScorerConfig::validate(std::size_t d) const {
    if (kind != ScorerKind::conve) return;
    if (rows * cols != d)
        throw ConfigError("scorer.rows/cols: " + std::to_string(rows) + "x" + std::to_string(cols) +
                          " does not reshape width " + std::to_string(d));
    if (filters == 0) throw ConfigError("scorer.filters: must be positive");
    if (kernel_h == 0 || kernel_w == 0 || kernel_h > 2 * rows || kernel_w > cols)
        throw ConfigError("scorer.kernel: must fit the stacked " + std::to_string(2 * rows) + "x" +
                          std::to_string(cols) + " input");
    for (double p : {input_dropout, feature_dropout, hidden_dropout})
        if (!(p >= 0.0 && p < 1.0)) throw ConfigError("scorer.dropout: rates must lie in [0, 1)");
}

template <typename T>
void init_scorer_params(const ScorerConfig& cfg, EncoderKind encoder, std::size_t d, std::size_t N, std::size_t R,
                        ad::ParameterStore<T>& store, Rng& rng) {
    cfg.validate(d);
    if (cfg.kind == ScorerKind::distmult) {
        if (cfg.diagonal_for(encoder) == DiagonalSource::independent_table)
            store.add("distmult.diag", uniform_init<T>({R, d}, d, rng));
        return;
    }
    const std::size_t fan = cfg.kernel_h * cfg.kernel_w;
    store.add("conve.filters", uniform_init<T>({cfg.filters, 1, cfg.kernel_h, cfg.kernel_w}, fan, rng));
    const std::size_t flat = cfg.filters * cfg.conv_out_h() * cfg.conv_out_w();
    store.add("conve.proj", uniform_init<T>({flat, d}, flat, rng));
    if (cfg.tail_bias) store.add("conve.bias", Tensor<T>({N}));
}

namespace {

template <typename T>
Var<T> dropout(Var<T> x, double p, DropoutContext ctx) {
    if (!ctx.active() || p <= 0.0) return x;
    Tensor<T> mask(x.shape());
    const T keep = static_cast<T>(1.0 / (1.0 - p));
    for (auto& m : mask.storage()) m = ctx.rng->uniform() < p ? T(0) : keep;
    return ad::mul(x, x.tape()->constant(std::move(mask)));
}

// [B,d] head and relation rows -> [B,d] ConvE query.
template <typename T>
Var<T> conve_query(const ScorerConfig& cfg, Var<T> xh, Var<T> xr, Var<T> filters, Var<T> proj,
                   DropoutContext ctx) {
    const std::size_t B = xh.dim(0);
    std::vector<Var<T>> maps{ad::reshape(xh, {B, 1, cfg.rows, cfg.cols}), ad::reshape(xr, {B, 1, cfg.rows, cfg.cols})};
    Var<T> img = dropout(ad::concat<T>(maps, 2), cfg.input_dropout, ctx);
    Var<T> feat = dropout(ad::relu(ad::conv2d(img, filters)), cfg.feature_dropout, ctx);
    Var<T> flat = ad::reshape(feat, {B, cfg.filters * cfg.conv_out_h() * cfg.conv_out_w()});
    return ad::relu(dropout(ad::matmul(flat, proj), cfg.hidden_dropout, ctx));
}

}  // namespace

template <typename T>
Var<T> query_vectors(const ScorerConfig& cfg, EncoderKind encoder, std::size_t R, ad::Tape<T>& tape,
                     const ad::ParameterStore<T>& store, const Embeddings<T>& emb, IndexList heads, IndexList rels,
                     DropoutContext ctx) {
    Var<T> xh = ad::gather_rows(emb.entities, heads);
    if (cfg.kind == ScorerKind::distmult) {
        if (cfg.diagonal_for(encoder) == DiagonalSource::independent_table) {
            std::vector<Index> shared(rels->size());
            for (std::size_t i = 0; i < shared.size(); ++i) shared[i] = static_cast<Index>((*rels)[i] % R);
            return ad::mul(xh, ad::gather_rows(tape.param(store, "distmult.diag"), make_indices(std::move(shared))));
        }
        return ad::mul(xh, ad::gather_rows(emb.relations, rels));
    }
    return conve_query(cfg, xh, ad::gather_rows(emb.relations, rels), tape.param(store, "conve.filters"),
                       tape.param(store, "conve.proj"), ctx);
}

template <typename T>
Var<T> score_all(const ScorerConfig& cfg, ad::Tape<T>& tape, const ad::ParameterStore<T>& store, Var<T> entities,
                 Var<T> queries) {
    Var<T> s = ad::matmul(queries, entities, false, true);
    if (cfg.kind == ScorerKind::conve && cfg.tail_bias) {
        const std::size_t B = queries.dim(0), N = entities.dim(0);
        Var<T> ones = tape.constant(Tensor<T>({B, 1}, T(1)));
        s = ad::add(s, ad::matmul(ones, ad::reshape(tape.param(store, "conve.bias"), {1, N})));
    }
    return s;
}

template <typename T>
Var<T> score_candidates(const ScorerConfig& cfg, ad::Tape<T>& tape, const ad::ParameterStore<T>& store,
                        Var<T> entities, Var<T> queries, IndexList candidates, std::size_t per_query) {
    const std::size_t B = queries.dim(0);
    if (candidates->size() != B * per_query)
        throw ShapeError("score_candidates: " + std::to_string(candidates->size()) + " candidates for " +
                         std::to_string(B) + " queries x " + std::to_string(per_query));
    std::vector<Index> rep(candidates->size());
    for (std::size_t i = 0; i < rep.size(); ++i) rep[i] = static_cast<Index>(i / per_query);
    Var<T> q = ad::gather_rows(queries, make_indices(std::move(rep)));
    Var<T> s = ad::row_sum(ad::mul(q, ad::gather_rows(entities, candidates)));
    if (cfg.kind == ScorerKind::conve && cfg.tail_bias) {
        const std::size_t N = entities.dim(0);
        Var<T> bias = ad::reshape(tape.param(store, "conve.bias"), {N, 1});
        s = ad::add(s, ad::reshape(ad::gather_rows(bias, candidates), {candidates->size()}));
    }
    return s;
}

template <typename T>
Var<T> distmult_score(Var<T> x_h, Var<T> r_diag, Var<T> x_t) {
    if (x_h.shape() != r_diag.shape() || x_h.shape() != x_t.shape())
        throw ShapeError("distmult_score: length mismatch");
    return ad::sum(ad::mul(ad::mul(x_h, r_diag), x_t));
}

template <typename T>
Var<T> conve_score(const ScorerConfig& cfg, Var<T> x_h, Var<T> x_r, Var<T> x_t, Var<T> filters, Var<T> projection) {
    const std::size_t d = x_h.value().size();
    if (x_r.value().size() != d || x_t.value().size() != d) throw ShapeError("conve_score: length mismatch");
    cfg.validate(d);
    Var<T> q = conve_query(cfg, ad::reshape(x_h, {1, d}), ad::reshape(x_r, {1, d}), filters, projection, {});
    return ad::sum(ad::mul(ad::reshape(q, {d}), x_t));
}

#define KGC_INSTANTIATE_SCORERS(T)                                                                             \
    template void init_scorer_params<T>(const ScorerConfig&, EncoderKind, std::size_t, std::size_t,            \
                                        std::size_t, ad::ParameterStore<T>&, Rng&);                            \
    template Var<T> query_vectors<T>(const ScorerConfig&, EncoderKind, std::size_t, ad::Tape<T>&,              \
                                     const ad::ParameterStore<T>&, const Embeddings<T>&, IndexList, IndexList, \
                                     DropoutContext);                                                          \
    template Var<T> score_all<T>(const ScorerConfig&, ad::Tape<T>&, const ad::ParameterStore<T>&, Var<T>,      \
                                 Var<T>);                                                                      \
    template Var<T> score_candidates<T>(const ScorerConfig&, ad::Tape<T>&, const ad::ParameterStore<T>&,       \
                                        Var<T>, Var<T>, IndexList, std::size_t);                               \
    template Var<T> distmult_score<T>(Var<T>, Var<T>, Var<T>);                                                 \
    template Var<T> conve_score<T>(const ScorerConfig&, Var<T>, Var<T>, Var<T>, Var<T>, Var<T>);

KGC_INSTANTIATE_SCORERS(float)
KGC_INSTANTIATE_SCORERS(double)

}  // namespace kgc
