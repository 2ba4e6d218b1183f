#include "kgc/gradcheck_suite.hpp"

#include <chrono>
#include <cstdio>
#include <memory>

#include "kgc/training.hpp"

namespace kgc {

KnowledgeGraph toy_graph(GraphMode mode) {
    std::vector<NamedTriple> train;
    const char* rels[] = {"likes", "knows", "part_of"};
    for (int i = 0; i < 20; ++i) {
        const int h = i % 10, t = (3 * i + 1) % 10 == h ? (h + 5) % 10 : (3 * i + 1) % 10;
        train.push_back({"e" + std::to_string(h), rels[i % 3], "e" + std::to_string(t)});
    }
    std::vector<NamedTriple> valid{{"e0", "likes", "e7"}, {"e4", "knows", "e2"}};
    std::vector<NamedTriple> test{{"e1", "part_of", "e8"}, {"e6", "likes", "e3"}};
    return make_knowledge_graph(train, valid, test, mode, 0, "toy");
}

ModelConfig toy_model_config(EncoderKind encoder, ScorerKind scorer) {
    ModelConfig c;
    c.encoder.kind = encoder;
    c.encoder.dims = {8, 8, 8};
    c.encoder.activation = Activation::tanh;
    c.scorer.kind = scorer;
    c.scorer.rows = 2;
    c.scorer.cols = 4;
    c.scorer.filters = 2;
    c.scorer.kernel_h = c.scorer.kernel_w = 3;
    return c;
}

bool SuiteReport::passed() const {
    for (const auto& e : entries)
        if (!(e.result.max_rel_error < threshold)) return false;
    return !entries.empty();
}

std::string SuiteReport::format() const {
    std::string out;
    char buf[256];
    for (const auto& e : entries) {
        std::snprintf(buf, sizeof buf, "%-8s %-9s max_rel_error=%.3e  params=%zu  worst=%s[%zu] (%.3e vs %.3e)  %.2fs  %s\n",
                      to_string(e.encoder).c_str(), to_string(e.scorer).c_str(), e.result.max_rel_error,
                      e.result.components, e.result.worst_parameter.c_str(), e.result.worst_index,
                      e.result.analytic, e.result.numeric, e.seconds,
                      e.result.max_rel_error < threshold ? "ok" : "FAIL");
        out += buf;
    }
    std::snprintf(buf, sizeof buf, "total %.2fs, threshold %.0e: %s\n", seconds, threshold,
                  passed() ? "PASS" : "FAIL");
    return out + buf;
}

SuiteReport run_gradcheck_suite(double threshold, const std::optional<std::string>& fault_op) {
    using clock = std::chrono::steady_clock;
    std::unique_ptr<ad::ScopedAdjointFault> fault;
    if (fault_op) fault = std::make_unique<ad::ScopedAdjointFault>(*fault_op);

    const KnowledgeGraph kg = toy_graph();
    const GraphPlan plan = build_graph_plan(kg.adjacency, kg.num_relations());
    const std::span<const Triple> all(kg.train_aug);
    // Tail queries for the first batch, inverse (head) queries for the second.
    const std::vector<Triple> dense_batch{all[0], all[7], all[13], all[20], all[31]};
    const std::vector<Triple> sampled_batch{all[2], all[25], all[38]};
    LossConfig dense, sampled;
    sampled.regime = LossRegime::with_sampling;
    sampled.k = "3";

    SuiteReport report;
    report.threshold = threshold;
    const auto t0 = clock::now();
    for (EncoderKind enc : {EncoderKind::mlp, EncoderKind::rgcn, EncoderKind::compgcn, EncoderKind::kbgat}) {
        for (ScorerKind sc : {ScorerKind::distmult, ScorerKind::conve}) {
            const ModelConfig cfg = toy_model_config(enc, sc);
            auto params = init_model<double>(cfg, kg.num_entities(), kg.num_relations(), 7);
            // Check at O(1) parameter values so no gradient sits at the roundoff floor.
            Rng draw(derive_seed(7, static_cast<std::uint64_t>(enc) * 2 + static_cast<std::uint64_t>(sc)));
            for (const auto& name : params.names())
                for (auto& v : params.get(name).storage()) v = draw.uniform(-1.0, 1.0);
            auto expr = [&](ad::Tape<double>& tape) {
                Rng rng(11);
                auto a = batch_loss(cfg, dense, plan, tape, params, dense_batch, rng);
                auto b = batch_loss(cfg, sampled, plan, tape, params, sampled_batch, rng);
                return ad::add(a, b);
            };
            const auto s0 = clock::now();
            SuiteEntry e{enc, sc, ad::check_gradients(expr, params, 1e-5), 0.0};
            e.seconds = std::chrono::duration<double>(clock::now() - s0).count();
            report.entries.push_back(std::move(e));
        }
    }
    report.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    return report;
}

}  // namespace kgc
