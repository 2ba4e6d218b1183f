#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "kgc/data.hpp"
#include "kgc/model.hpp"
#include "kgc/random.hpp"

namespace kgc {

enum class LossRegime { with_sampling, without_sampling };

struct LossConfig {
    LossRegime regime = LossRegime::without_sampling;
    /// Negative count for with_sampling: a positive integer, "0.5N" (rounded
    /// up), "N" or "N-1" (both meaning every corruption).
    std::string k = "10";

    /// Throws ConfigError naming the loss section when k is invalid for N.
    std::size_t resolve_k(std::size_t num_entities) const;
    void validate(std::size_t num_entities) const;
    /// "w/o" or "with k".
    std::string label() const;
};

LossRegime parse_loss_regime(const std::string& s);
std::string to_string(LossRegime r);

struct TrainConfig {
    std::size_t epochs = 500;
    std::size_t batch_size = 256;
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    double weight_decay = 0.0;
    /// Evaluations without improvement before stopping.
    std::size_t patience = 20;
    std::size_t eval_every = 5;

    void validate() const;
};

/// k distinct ids drawn uniformly from [0, N) without `tail`.
std::vector<EntityId> sample_negatives(EntityId tail, std::size_t k, std::size_t num_entities, Rng& rng);

/// -sum log s(p) - sum log(1 - s(n)), with s clamped to [eps, 1-eps].
double bce_loss(std::span<const double> pos_scores, std::span<const double> neg_scores, double eps = 1e-7);

/// BCE over one batch of augmented training triples, as recorded on `tape`.
template <typename T>
ad::Var<T> batch_loss(const ModelConfig& model, const LossConfig& loss, const GraphPlan& plan, ad::Tape<T>& tape,
                      const ad::ParameterStore<T>& params, std::span<const Triple> batch, Rng& rng,
                      bool dropout = false);

struct AdamConfig {
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 0.0;
};

/// Bias-corrected Adam with L2 weight decay added to the gradient.
template <typename T>
class Adam {
public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
    void step(ad::ParameterStore<T>& params, const ad::Gradients<T>& grads);
    std::size_t steps() const { return t_; }

private:
    struct Moments {
        std::vector<double> m, v;
    };
    AdamConfig cfg_;
    std::size_t t_ = 0;
    std::map<std::string, Moments> state_;
};

struct EpochLog {
    std::size_t epoch = 0;
    double loss = 0.0;
    /// Set on evaluation epochs.
    double valid_mrr = -1.0;
};

struct TrainResult {
    ad::ParameterStore<float> best;
    double best_valid_mrr = -1.0;
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    std::vector<EpochLog> history;
};

using TrainObserver = std::function<void(const EpochLog&)>;

/// Mini-batch training over the shuffled augmented set. Keeps the parameters
/// with the best validation MRR; throws NumericError on divergence.
TrainResult train(const ModelConfig& model, const LossConfig& loss, const TrainConfig& cfg, const KnowledgeGraph& kg,
                  std::uint64_t seed, const TrainObserver& observer = {});

}  // namespace kgc
