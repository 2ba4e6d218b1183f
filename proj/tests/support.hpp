#pragma once
// Shared fixtures for the unit tests and the acceptance binary.

#include <algorithm>
#include <functional>
#include <vector>

#include "kgc/evaluation.hpp"
#include "kgc/model.hpp"
#include "kgc/random.hpp"

namespace kgc::testing {

/// Score rows drawn from a seeded stream per (head, relation): small integers so ties are common.
class TableScorer : public RowScorer {
public:
    TableScorer(std::size_t n, std::uint64_t seed, int levels = 8) : n_(n), seed_(seed), levels_(levels) {}

    std::size_t num_entities() const override { return n_; }

    std::vector<double> row(Query q) const {
        Rng rng(derive_seed(seed_, (std::uint64_t{q.head} << 32) | q.rel));
        std::vector<double> r(n_);
        for (auto& v : r) v = static_cast<double>(rng.index(levels_)) + 0.25 * static_cast<double>(rng.index(2));
        return r;
    }

    void score_rows(std::span<const Query> qs, std::span<double> out) const override {
        for (std::size_t i = 0; i < qs.size(); ++i) {
            auto r = row(qs[i]);
            std::copy(r.begin(), r.end(), out.begin() + static_cast<std::ptrdiff_t>(i * n_));
        }
    }

private:
    std::size_t n_;
    std::uint64_t seed_;
    int levels_;
};

/// Rank by sorting the surviving candidates and averaging the positions of gt's tie block.
inline double sorted_rank(const std::vector<double>& scores, EntityId gt, std::span<const EntityId> filter) {
    std::vector<double> kept;
    for (EntityId e = 0; e < scores.size(); ++e)
        if (e == gt || std::find(filter.begin(), filter.end(), e) == filter.end()) kept.push_back(scores[e]);
    std::sort(kept.begin(), kept.end(), std::greater<>());
    const double s = scores[gt];
    std::size_t first = 0;
    while (kept[first] != s) ++first;
    std::size_t last = first;
    while (last + 1 < kept.size() && kept[last + 1] == s) ++last;
    return (static_cast<double>(first + 1) + static_cast<double>(last + 1)) / 2.0;
}

/// Metrics from ranks, written out independently of the library.
inline Metrics brute_metrics(const std::vector<double>& ranks) {
    double mrr = 0, h1 = 0, h3 = 0, h10 = 0;
    for (double r : ranks) {
        mrr += 1.0 / r;
        if (r <= 1) h1 += 1;
        if (r <= 3) h3 += 1;
        if (r <= 10) h10 += 1;
    }
    const double n = static_cast<double>(ranks.size());
    return Metrics{mrr / n, h1 / n, h3 / n, h10 / n, ranks.size()};
}

/// Random split over N entities and R relations with extra known-true tails in the filter.
struct RankingFixture {
    std::size_t N, R;
    std::vector<Triple> split;
    FilterIndex filter;
};

inline RankingFixture make_ranking_fixture(std::size_t N, std::size_t R, std::size_t triples, std::uint64_t seed) {
    RankingFixture f{N, R, {}, {}};
    Rng rng(seed);
    for (std::size_t i = 0; i < triples; ++i) {
        Triple t{static_cast<EntityId>(rng.index(N)), static_cast<RelationId>(rng.index(R)),
                 static_cast<EntityId>(rng.index(N))};
        f.split.push_back(t);
        f.filter.insert(t.head, t.rel, t.tail);
        f.filter.insert(t.tail, static_cast<RelationId>(t.rel + R), t.head);
        const std::size_t extra = rng.index(6);
        for (std::size_t j = 0; j < extra; ++j) {
            f.filter.insert(t.head, t.rel, static_cast<EntityId>(rng.index(N)));
            f.filter.insert(t.tail, static_cast<RelationId>(t.rel + R), static_cast<EntityId>(rng.index(N)));
        }
    }
    f.filter.finalize();
    return f;
}

}  // namespace kgc::testing
