#include "doctest.h"

#include <cmath>
#include <set>

#include "kgc/gradcheck_suite.hpp"
#include "kgc/training.hpp"

using namespace kgc;
using ad::Tensor;

namespace {

// Upper 1% point of chi-square with `dof` degrees of freedom (Wilson-Hilferty).
double chi2_critical_01(double dof) {
    const double z = 2.326347874;
    const double a = 2.0 / (9.0 * dof);
    return dof * std::pow(1.0 - a + z * std::sqrt(a), 3);
}

double eval_loss(const ModelConfig& m, const LossConfig& l, const GraphPlan& plan, const ad::ParameterStore<double>& p,
                 std::span<const Triple> batch, std::uint64_t seed) {
    ad::Tape<double> tape;
    Rng rng(seed);
    return batch_loss(m, l, plan, tape, p, batch, rng).value().item();
}

}  // namespace

TEST_CASE("negative sampling edge cases") {
    Rng rng(1);
    auto v = sample_negatives(0, 2, 3, rng);
    CHECK(std::set<EntityId>(v.begin(), v.end()) == std::set<EntityId>{1, 2});

    auto all = sample_negatives(4, 9, 10, rng);
    std::set<EntityId> s(all.begin(), all.end());
    CHECK(s.size() == 9);
    CHECK(s.count(4) == 0);

    CHECK_THROWS_AS(sample_negatives(0, 3, 3, rng), ConfigError);
    CHECK(sample_negatives(0, 0, 3, rng).empty());

    Rng a(5), b(5);
    CHECK(sample_negatives(7, 10, 100, a) == sample_negatives(7, 10, 100, b));
}

TEST_CASE("negative sampling is uniform over non-tail entities") {
    const std::size_t N = 100, k = 10, draws = 100000;
    const EntityId tail = 37;
    Rng rng(2024);
    std::vector<std::size_t> counts(N, 0);
    bool distinct = true, tail_seen = false;
    for (std::size_t i = 0; i < draws; ++i) {
        auto v = sample_negatives(tail, k, N, rng);
        std::set<EntityId> s(v.begin(), v.end());
        distinct &= s.size() == k;
        for (EntityId e : v) {
            tail_seen |= e == tail;
            ++counts[e];
        }
    }
    CHECK(distinct);
    CHECK_FALSE(tail_seen);
    const double expected = static_cast<double>(draws * k) / (N - 1);
    double chi2 = 0;
    for (std::size_t e = 0; e < N; ++e)
        if (e != tail) chi2 += (counts[e] - expected) * (counts[e] - expected) / expected;
    CHECK(chi2 < chi2_critical_01(N - 2));
}

TEST_CASE("bce oracle values") {
    std::vector<double> zero{0.0};
    CHECK(bce_loss(zero, zero) == doctest::Approx(2 * std::log(2.0)).epsilon(1e-12));
    std::vector<double> big{50.0};
    CHECK(bce_loss(big, {}) < 1e-6);
    CHECK(bce_loss(big, {}) >= 0.0);

    Rng rng(3);
    std::vector<double> pos(2), neg(8);
    for (auto& v : pos) v = rng.uniform(-3, 3);
    for (auto& v : neg) v = rng.uniform(-3, 3);
    double expect = 0;
    for (double s : pos) expect -= std::log(1.0 / (1.0 + std::exp(-s)));
    for (double s : neg) expect -= std::log(1.0 - 1.0 / (1.0 + std::exp(-s)));
    CHECK(bce_loss(pos, neg) == doctest::Approx(expect).epsilon(1e-12));

    // The clamp bounds each term by -log(eps).
    std::vector<double> awful{-1000.0};
    CHECK(bce_loss(awful, {}) == doctest::Approx(-std::log(1e-7)).epsilon(1e-9));
}

TEST_CASE("tape bce matches the scalar oracle") {
    Rng rng(4);
    Tensor<double> s({2, 5}), y({2, 5});
    for (auto& v : s.storage()) v = rng.uniform(-4, 4);
    y[1] = 1.0;
    y[8] = 1.0;
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < s.size(); ++i) (y[i] > 0 ? pos : neg).push_back(s[i]);
    ad::Tape<double> tape;
    CHECK(ad::bce_with_logits(tape.constant(s), y).value().item() ==
          doctest::Approx(bce_loss(pos, neg)).epsilon(1e-12));
}

TEST_CASE("loss regimes agree at k = N-1") {
    const KnowledgeGraph kg = toy_graph();
    const GraphPlan plan = build_graph_plan(kg.adjacency, kg.num_relations());
    LossConfig without, with;
    with.regime = LossRegime::with_sampling;
    with.k = "N-1";
    for (EncoderKind enc : {EncoderKind::mlp, EncoderKind::compgcn}) {
        for (ScorerKind sc : {ScorerKind::distmult, ScorerKind::conve}) {
            ModelConfig m = toy_model_config(enc, sc);
            auto p = init_model<double>(m, kg.num_entities(), kg.num_relations(), 3);
            Rng pick(9);
            for (int b = 0; b < 10; ++b) {
                std::vector<Triple> batch;
                for (int i = 0; i < 4; ++i) batch.push_back(kg.train_aug[pick.index(kg.train_aug.size())]);
                const double a = eval_loss(m, without, plan, p, batch, 1);
                const double c = eval_loss(m, with, plan, p, batch, 2);
                CHECK(std::abs(a - c) <= 1e-10 * std::abs(a));
            }
        }
    }
}

TEST_CASE("loss k parsing") {
    LossConfig l;
    l.regime = LossRegime::with_sampling;
    l.k = "0.5N";
    CHECK(l.resolve_k(15) == 8);
    l.k = "N";
    CHECK(l.resolve_k(15) == 14);
    l.k = "N-1";
    CHECK(l.resolve_k(15) == 14);
    l.k = "50";
    CHECK(l.resolve_k(100) == 50);
    CHECK(l.label() == "with 50");
    try {
        l.validate(20);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).rfind("loss.k", 0) == 0);
    }
    l.k = "0";
    CHECK_THROWS_AS(l.validate(20), ConfigError);
    l.k = "many";
    CHECK_THROWS_AS(l.validate(20), ConfigError);
    LossConfig w;
    CHECK(w.label() == "w/o");
    CHECK_NOTHROW(w.validate(2));
}

TEST_CASE("adam") {
    SUBCASE("zero gradient leaves parameters alone") {
        ad::ParameterStore<double> p;
        p.add("w", Tensor<double>({3}, std::vector<double>{1, -2, 3}));
        const auto before = p;
        Adam<double> opt(AdamConfig{});
        ad::Gradients<double> g{{"w", Tensor<double>({3})}};
        for (int i = 0; i < 3; ++i) opt.step(p, g);
        CHECK(p == before);
        CHECK(opt.steps() == 3);
    }
    SUBCASE("first step moves lr against the gradient sign") {
        ad::ParameterStore<double> p;
        p.add("w", Tensor<double>({4}, 0.0));
        AdamConfig c;
        c.lr = 0.01;
        Adam<double> opt(c);
        ad::Gradients<double> g{{"w", Tensor<double>({4}, std::vector<double>{3.0, -0.5, 1e-3, -200})}};
        opt.step(p, g);
        for (std::size_t i = 0; i < 4; ++i)
            CHECK(p.get("w")[i] == doctest::Approx(-c.lr * std::copysign(1.0, g.at("w")[i])).epsilon(1e-4));
    }
    SUBCASE("quadratic decreases") {
        ad::ParameterStore<double> p;
        p.add("w", Tensor<double>({2}, std::vector<double>{2.0, -1.5}));
        AdamConfig c;
        c.lr = 0.01;
        Adam<double> opt(c);
        auto loss = [&] { return 3 * p.get("w")[0] * p.get("w")[0] + 0.5 * p.get("w")[1] * p.get("w")[1]; };
        double prev = loss();
        for (int step = 1; step <= 100; ++step) {
            ad::Gradients<double> g{{"w", Tensor<double>({2}, std::vector<double>{6 * p.get("w")[0], p.get("w")[1]})}};
            opt.step(p, g);
            const double cur = loss();
            if (step > 5) CHECK(cur < prev);
            prev = cur;
        }
    }
}

TEST_CASE("one small step lowers a single-positive batch loss") {
    const KnowledgeGraph kg = toy_graph();
    const GraphPlan plan = build_graph_plan(kg.adjacency, kg.num_relations());
    for (double lr : {1e-3, 1e-4}) {
        for (ScorerKind sc : {ScorerKind::distmult, ScorerKind::conve}) {
            ModelConfig m = toy_model_config(EncoderKind::compgcn, sc);
            auto p = init_model<double>(m, kg.num_entities(), kg.num_relations(), 5);
            LossConfig l;
            std::vector<Triple> batch{kg.train_aug[3]};
            const double before = eval_loss(m, l, plan, p, batch, 0);
            ad::Tape<double> tape;
            Rng rng(0);
            auto g = tape.backward(batch_loss(m, l, plan, tape, p, batch, rng), p);
            AdamConfig c;
            c.lr = lr;
            Adam<double> opt(c);
            opt.step(p, g);
            CHECK(eval_loss(m, l, plan, p, batch, 0) < before);
        }
    }
}

TEST_CASE("train smoke and determinism") {
    const KnowledgeGraph kg = toy_graph();
    ModelConfig m = toy_model_config(EncoderKind::compgcn, ScorerKind::conve);
    LossConfig l;
    l.regime = LossRegime::with_sampling;
    l.k = "3";
    TrainConfig t;
    t.epochs = 1;
    t.batch_size = 8;
    std::size_t observed = 0;
    TrainResult r = train(m, l, t, kg, 0, [&](const EpochLog& e) {
        ++observed;
        CHECK(std::isfinite(e.loss));
    });
    CHECK(r.epochs_run == 1);
    CHECK(observed == 1);
    CHECK(r.best_valid_mrr >= 0.0);
    CHECK(r.best.contains("entity"));

    t.epochs = 6;
    t.eval_every = 2;
    TrainResult a = train(m, l, t, kg, 11), b = train(m, l, t, kg, 11);
    CHECK(a.best_valid_mrr == b.best_valid_mrr);
    CHECK(a.best == b.best);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].loss == b.history[i].loss);
    TrainResult c = train(m, l, t, kg, 12);
    CHECK_FALSE(a.best == c.best);
}

TEST_CASE("patience stops training") {
    const KnowledgeGraph kg = toy_graph();
    ModelConfig m = toy_model_config(EncoderKind::mlp, ScorerKind::distmult);
    TrainConfig t;
    t.epochs = 400;
    t.eval_every = 1;
    t.patience = 2;
    t.lr = 1e-12;
    TrainResult r = train(m, LossConfig{}, t, kg, 0);
    CHECK(r.epochs_run == 3);
}

TEST_CASE("train config validation") {
    TrainConfig t;
    CHECK_NOTHROW(t.validate());
    t.batch_size = 0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
    t = TrainConfig{};
    t.lr = -1;
    CHECK_THROWS_AS(t.validate(), ConfigError);
}
