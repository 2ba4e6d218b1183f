#include "kgc/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "kgc/error.hpp"
#include "kgc/evaluation.hpp"

namespace kgc {

using ad::Index;
using ad::make_indices;
using ad::Tensor;

LossRegime parse_loss_regime(const std::string& s) {
    if (s == "with_sampling") return LossRegime::with_sampling;
    if (s == "without_sampling") return LossRegime::without_sampling;
    throw ConfigError("loss.regime: unknown regime '" + s + "' (expected with_sampling or without_sampling)");
}

std::string to_string(LossRegime r) { return r == LossRegime::with_sampling ? "with_sampling" : "without_sampling"; }

std::size_t LossConfig::resolve_k(std::size_t N) const {
    if (N < 2) throw ConfigError("loss.k: need at least two entities");
    if (k == "N" || k == "N-1") return N - 1;
    if (k == "0.5N") return std::min(N - 1, (N + 1) / 2);
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(k.data(), k.data() + k.size(), v);
    if (ec != std::errc() || p != k.data() + k.size() || v == 0)
        throw ConfigError("loss.k: '" + k + "' is not a positive integer, 0.5N, N or N-1");
    if (v > N - 1)
        throw ConfigError("loss.k: " + k + " negatives exceed N-1 = " + std::to_string(N - 1) + " corruptions");
    return v;
}

void LossConfig::validate(std::size_t N) const {
    if (regime == LossRegime::with_sampling) resolve_k(N);
}

std::string LossConfig::label() const { return regime == LossRegime::without_sampling ? "w/o" : "with " + k; }

void TrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("train.epochs: must be positive");
    if (batch_size == 0) throw ConfigError("train.batch_size: must be positive");
    if (!(lr > 0.0)) throw ConfigError("train.lr: must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("train.beta1: must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train.beta2: must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps: must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay: must be non-negative");
    if (eval_every == 0) throw ConfigError("train.eval_every: must be positive");
}

std::vector<EntityId> sample_negatives(EntityId tail, std::size_t k, std::size_t N, Rng& rng) {
    if (N == 0 || tail >= N) throw ContractError("sample_negatives: tail outside the entity range");
    const std::size_t M = N - 1;
    if (k > M) throw ConfigError("loss.k: " + std::to_string(k) + " negatives exceed N-1 = " + std::to_string(M));
    std::vector<EntityId> out;
    out.reserve(k);
    // Floyd's algorithm over [0, M); ids at or above the tail shift up by one.
    if (4 * k > M) {
        std::vector<char> taken(M, 0);
        for (std::size_t j = M - k; j < M; ++j) {
            std::size_t t = rng.index(j + 1);
            if (taken[t]) t = j;
            taken[t] = 1;
            out.push_back(static_cast<EntityId>(t));
        }
    } else {
        std::unordered_set<std::size_t> taken;
        for (std::size_t j = M - k; j < M; ++j) {
            std::size_t t = rng.index(j + 1);
            if (!taken.insert(t).second) {
                t = j;
                taken.insert(t);
            }
            out.push_back(static_cast<EntityId>(t));
        }
    }
    for (auto& e : out)
        if (e >= tail) ++e;
    return out;
}

double bce_loss(std::span<const double> pos, std::span<const double> neg, double eps) {
    auto sig = [eps](double s) { return std::clamp(1.0 / (1.0 + std::exp(-s)), eps, 1.0 - eps); };
    double loss = 0.0;
    for (double s : pos) loss -= std::log(sig(s));
    for (double s : neg) loss -= std::log(1.0 - sig(s));
    if (!std::isfinite(loss)) throw NumericError("bce_loss: non-finite loss");
    return loss;
}

template <typename T>
ad::Var<T> batch_loss(const ModelConfig& model, const LossConfig& loss, const GraphPlan& plan, ad::Tape<T>& tape,
                      const ad::ParameterStore<T>& params, std::span<const Triple> batch, Rng& rng, bool dropout) {
    DropoutContext ctx{dropout ? &rng : nullptr};
    BatchForward<T> f = forward_batch(model, plan, tape, params, batch, ctx);
    const std::size_t N = plan.num_entities, B = batch.size();
    if (loss.regime == LossRegime::without_sampling) {
        Tensor<T> targets({B, N});
        for (std::size_t i = 0; i < B; ++i) targets.at(i, batch[i].tail) = T(1);
        return ad::bce_with_logits(score_all(model.scorer, tape, params, f.emb.entities, f.queries), targets);
    }
    const std::size_t k = loss.resolve_k(N);
    std::vector<Index> cand;
    cand.reserve(B * (k + 1));
    Tensor<T> targets({B * (k + 1)});
    for (std::size_t i = 0; i < B; ++i) {
        targets[i * (k + 1)] = T(1);
        cand.push_back(batch[i].tail);
        for (EntityId e : sample_negatives(batch[i].tail, k, N, rng)) cand.push_back(e);
    }
    auto s = score_candidates(model.scorer, tape, params, f.emb.entities, f.queries, make_indices(std::move(cand)),
                              k + 1);
    return ad::bce_with_logits(s, targets);
}

template <typename T>
void Adam<T>::step(ad::ParameterStore<T>& params, const ad::Gradients<T>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (const auto& name : params.names()) {
        auto it = grads.find(name);
        if (it == grads.end()) continue;
        Tensor<T>& p = params.get(name);
        const Tensor<T>& g = it->second;
        if (g.size() != p.size()) throw ShapeError("adam: gradient shape mismatch for " + name);
        Moments& st = state_[name];
        if (st.m.empty()) {
            st.m.assign(p.size(), 0.0);
            st.v.assign(p.size(), 0.0);
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = static_cast<double>(g[i]) + cfg_.weight_decay * static_cast<double>(p[i]);
            st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * gi;
            st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * gi * gi;
            const double mh = st.m[i] / c1, vh = st.v[i] / c2;
            p[i] = static_cast<T>(static_cast<double>(p[i]) - cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps));
        }
    }
}

template class Adam<float>;
template class Adam<double>;

TrainResult train(const ModelConfig& model, const LossConfig& loss, const TrainConfig& cfg, const KnowledgeGraph& kg,
                  std::uint64_t seed, const TrainObserver& observer) {
    model.validate();
    loss.validate(kg.num_entities());
    cfg.validate();
    if (kg.train_aug.empty()) throw ConfigError("dataset: training split is empty");

    const GraphPlan plan = model_plan(model, kg);
    ad::ParameterStore<float> params = init_model<float>(model, kg.num_entities(), kg.num_relations(), seed);
    Adam<float> adam({cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay});
    Rng shuffle_rng(derive_seed(seed, 2)), sample_rng(derive_seed(seed, 3));
    const bool use_dropout = model.scorer.kind == ScorerKind::conve &&
                             (model.scorer.input_dropout > 0 || model.scorer.feature_dropout > 0 ||
                              model.scorer.hidden_dropout > 0);

    TrainResult result;
    result.best = params;
    std::vector<std::size_t> order(kg.train_aug.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<Triple> batch;
    std::size_t stale = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
        double epoch_loss = 0.0;
        for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
            const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
            batch.clear();
            for (std::size_t i = lo; i < hi; ++i) batch.push_back(kg.train_aug[order[i]]);
            ad::Tape<float> tape;
            ad::Gradients<float> grads;
            double value = 0.0;
            try {
                auto l = batch_loss(model, loss, plan, tape, params, batch, sample_rng, use_dropout);
                value = l.value().item();
                grads = tape.backward(l, params);
            } catch (const NumericError& e) {
                throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
            }
            if (!std::isfinite(value))
                throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": loss is not finite");
            adam.step(params, grads);
            epoch_loss += value;
        }
        for (const auto& name : params.names())
            if (!params.get(name).all_finite())
                throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": parameter " + name +
                                   " is not finite");

        EpochLog log{epoch, epoch_loss, -1.0};
        result.epochs_run = epoch;
        const bool last = epoch == cfg.epochs;
        if (epoch % cfg.eval_every == 0 || last) {
            const std::span<const Triple> valid = kg.valid.empty() ? std::span<const Triple>(kg.train)
                                                                   : std::span<const Triple>(kg.valid);
            FrozenModel frozen(model, params, plan);
            log.valid_mrr = evaluate(frozen, valid, kg.filter, kg.num_relations()).all.mrr;
            if (log.valid_mrr > result.best_valid_mrr) {
                result.best_valid_mrr = log.valid_mrr;
                result.best_epoch = epoch;
                result.best = params;
                stale = 0;
            } else {
                ++stale;
            }
        }
        result.history.push_back(log);
        if (observer) observer(log);
        if (log.valid_mrr >= 0.0 && stale >= cfg.patience && cfg.patience > 0) break;
    }
    return result;
}

template ad::Var<float> batch_loss<float>(const ModelConfig&, const LossConfig&, const GraphPlan&, ad::Tape<float>&,
                                          const ad::ParameterStore<float>&, std::span<const Triple>, Rng&, bool);
template ad::Var<double> batch_loss<double>(const ModelConfig&, const LossConfig&, const GraphPlan&,
                                            ad::Tape<double>&, const ad::ParameterStore<double>&,
                                            std::span<const Triple>, Rng&, bool);

}  // namespace kgc
