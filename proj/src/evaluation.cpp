#include "kgc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <sstream>

#include "kgc/error.hpp"

namespace kgc {

using nlohmann::json;

namespace {

struct Counts {
    std::size_t greater = 0, equal = 0;
};

Counts count_against(std::span<const double> scores, EntityId gt) {
    if (gt >= scores.size())
        throw ContractError("rank_of: ground truth " + std::to_string(gt) + " outside " +
                            std::to_string(scores.size()) + " candidates");
    const double s = scores[gt];
    Counts c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] > s) ++c.greater;
        else if (scores[i] == s && i != gt) ++c.equal;
    }
    return c;
}

double to_rank(Counts c) { return 1.0 + static_cast<double>(c.greater) + static_cast<double>(c.equal) / 2.0; }

}  // namespace

double raw_rank(std::span<const double> scores, EntityId gt) { return to_rank(count_against(scores, gt)); }

double rank_of(std::span<const double> scores, EntityId gt, std::span<const EntityId> filter) {
    Counts c = count_against(scores, gt);
    std::vector<EntityId> tmp;
    if (!std::is_sorted(filter.begin(), filter.end()) ||
        std::adjacent_find(filter.begin(), filter.end()) != filter.end()) {
        tmp.assign(filter.begin(), filter.end());
        std::sort(tmp.begin(), tmp.end());
        tmp.erase(std::unique(tmp.begin(), tmp.end()), tmp.end());
        filter = tmp;
    }
    const double s = scores[gt];
    for (EntityId f : filter) {
        if (f == gt) continue;
        if (f >= scores.size()) throw ContractError("rank_of: filter id out of range");
        if (scores[f] > s) --c.greater;
        else if (scores[f] == s) --c.equal;
    }
    return to_rank(c);
}

Metrics metrics_from_ranks(std::span<const double> ranks) {
    Metrics m;
    m.queries = ranks.size();
    if (ranks.empty()) return m;
    for (double r : ranks) {
        m.mrr += 1.0 / r;
        m.hits1 += r <= 1.0;
        m.hits3 += r <= 3.0;
        m.hits10 += r <= 10.0;
    }
    const double n = static_cast<double>(ranks.size());
    m.mrr /= n;
    m.hits1 /= n;
    m.hits3 /= n;
    m.hits10 /= n;
    return m;
}

SplitResult evaluate(const RowScorer& scorer, std::span<const Triple> split, const FilterIndex& filter,
                     std::size_t R, std::size_t batch_size) {
    const std::size_t N = scorer.num_entities();
    const std::size_t Q = 2 * split.size();
    SplitResult out;
    out.records.resize(Q);
    for (std::size_t i = 0; i < split.size(); ++i) {
        const Triple& t = split[i];
        out.records[i].query = t;
        out.records[split.size() + i].query = {t.tail, static_cast<RelationId>(t.rel + R), t.head};
    }
    batch_size = std::max<std::size_t>(1, batch_size);
    const std::size_t batches = (Q + batch_size - 1) / batch_size;

    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::size_t b = 0; b < batches; ++b) {
        try {
            const std::size_t lo = b * batch_size, hi = std::min(Q, lo + batch_size);
            std::vector<Query> queries;
            for (std::size_t i = lo; i < hi; ++i)
                queries.push_back({out.records[i].query.head, out.records[i].query.rel});
            std::vector<double> rows(queries.size() * N);
            scorer.score_rows(queries, rows);
            for (std::size_t i = lo; i < hi; ++i) {
                RankRecord& rec = out.records[i];
                std::span<const double> row(rows.data() + (i - lo) * N, N);
                rec.raw = raw_rank(row, rec.query.tail);
                rec.filtered = rank_of(row, rec.query.tail, filter.tails(rec.query.head, rec.query.rel));
            }
        } catch (...) {
#pragma omp critical(kgc_eval_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<double> all(Q), tail(split.size()), head(split.size());
    for (std::size_t i = 0; i < Q; ++i) all[i] = out.records[i].filtered;
    std::copy(all.begin(), all.begin() + split.size(), tail.begin());
    std::copy(all.begin() + split.size(), all.end(), head.begin());
    out.all = metrics_from_ranks(all);
    out.tail = metrics_from_ranks(tail);
    out.head = metrics_from_ranks(head);
    return out;
}

// ---------------------------------------------------------------------------

void MetricsReport::add_seed(std::uint64_t seed, const SplitResult& r) {
    seeds.push_back(seed);
    per_seed.push_back(r.all);
    per_seed_tail.push_back(r.tail);
    per_seed_head.push_back(r.head);
}

namespace {

template <typename F>
Metrics reduce(const std::vector<Metrics>& v, F f) {
    Metrics m;
    m.mrr = f([](const Metrics& x) { return x.mrr; });
    m.hits1 = f([](const Metrics& x) { return x.hits1; });
    m.hits3 = f([](const Metrics& x) { return x.hits3; });
    m.hits10 = f([](const Metrics& x) { return x.hits10; });
    m.queries = v.empty() ? 0 : v.front().queries;
    return m;
}

Metrics mean_of(const std::vector<Metrics>& v) {
    return reduce(v, [&](auto get) {
        double s = 0;
        for (const auto& m : v) s += get(m);
        return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    });
}

Metrics std_of(const std::vector<Metrics>& v) {
    const Metrics mu = mean_of(v);
    return reduce(v, [&](auto get) {
        if (v.empty()) return 0.0;
        double s = 0;
        const double c = get(mu);
        for (const auto& m : v) s += (get(m) - c) * (get(m) - c);
        return std::sqrt(s / static_cast<double>(v.size()));
    });
}

json metrics_json(const Metrics& m) {
    return {{"mrr", m.mrr}, {"hits1", m.hits1}, {"hits3", m.hits3}, {"hits10", m.hits10}, {"queries", m.queries}};
}

Metrics metrics_from_json(const json& j) {
    Metrics m;
    m.mrr = j.at("mrr").get<double>();
    m.hits1 = j.at("hits1").get<double>();
    m.hits3 = j.at("hits3").get<double>();
    m.hits10 = j.at("hits10").get<double>();
    m.queries = j.value("queries", std::size_t{0});
    return m;
}

}  // namespace

Metrics MetricsReport::mean() const { return mean_of(per_seed); }
Metrics MetricsReport::stddev() const { return std_of(per_seed); }

json to_json(const MetricsReport& r) {
    const Metrics mu = r.mean(), sd = r.stddev();
    json j = metrics_json(mu);
    j["std"] = metrics_json(sd);
    j["dataset"] = r.dataset;
    j["split"] = r.split;
    j["config_hash"] = r.config_hash;
    j["seeds"] = r.seeds;
    json per = json::array();
    for (std::size_t i = 0; i < r.per_seed.size(); ++i) {
        json s = metrics_json(r.per_seed[i]);
        s["seed"] = i < r.seeds.size() ? r.seeds[i] : i;
        s["tail"] = metrics_json(r.per_seed_tail.at(i));
        s["head"] = metrics_json(r.per_seed_head.at(i));
        per.push_back(std::move(s));
    }
    j["per_seed"] = std::move(per);
    j["direction_split"] = {{"tail", metrics_json(mean_of(r.per_seed_tail))},
                            {"head", metrics_json(mean_of(r.per_seed_head))}};
    return j;
}

MetricsReport report_from_json(const json& j) {
    try {
        MetricsReport r;
        r.dataset = j.at("dataset").get<std::string>();
        r.split = j.value("split", std::string{});
        r.config_hash = j.at("config_hash").get<std::string>();
        r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        for (const auto& s : j.at("per_seed")) {
            r.per_seed.push_back(metrics_from_json(s));
            r.per_seed_tail.push_back(metrics_from_json(s.at("tail")));
            r.per_seed_head.push_back(metrics_from_json(s.at("head")));
        }
        return r;
    } catch (const json::exception& e) {
        throw ParseError(std::string("report: ") + e.what());
    }
}

std::string format_cell(double mean, double std, bool with_std) {
    char buf[64];
    if (with_std) std::snprintf(buf, sizeof buf, "%.1f±%.1f", mean * 100.0, std * 100.0);
    else std::snprintf(buf, sizeof buf, "%.1f", mean * 100.0);
    return buf;
}

std::string format_table(std::span<const std::pair<std::string, MetricsReport>> rows) {
    std::vector<std::vector<std::string>> cells{{"Model", "MRR", "Hits@1", "Hits@3", "Hits@10"}};
    for (const auto& [name, rep] : rows) {
        const Metrics mu = rep.mean(), sd = rep.stddev();
        const bool multi = rep.per_seed.size() > 1;
        cells.push_back({name, format_cell(mu.mrr, sd.mrr, multi), format_cell(mu.hits1, sd.hits1, multi),
                         format_cell(mu.hits3, sd.hits3, multi), format_cell(mu.hits10, sd.hits10, multi)});
    }
    // "±" is two bytes but one column.
    auto width = [](const std::string& s) {
        std::size_t w = 0;
        for (unsigned char c : s) w += (c & 0xC0) != 0x80;
        return w;
    };
    std::vector<std::size_t> w(5, 0);
    for (const auto& row : cells)
        for (std::size_t c = 0; c < 5; ++c) w[c] = std::max(w[c], width(row[c]));
    std::ostringstream os;
    for (std::size_t r = 0; r < cells.size(); ++r) {
        for (std::size_t c = 0; c < 5; ++c) {
            const std::string& s = cells[r][c];
            const std::string pad(w[c] - width(s), ' ');
            if (c == 0) os << s << pad;
            else os << "  " << pad << s;
        }
        os << '\n';
        if (r == 0) {
            std::size_t total = w[0];
            for (std::size_t c = 1; c < 5; ++c) total += 2 + w[c];
            os << std::string(total, '-') << '\n';
        }
    }
    return os.str();
}

}  // namespace kgc
