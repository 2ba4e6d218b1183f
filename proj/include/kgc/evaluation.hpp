#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "kgc/data.hpp"
#include "kgc/model.hpp"

namespace kgc {

/// 1 + #{score > s_gt} + #{score == s_gt, other}/2 over all candidates.
double raw_rank(std::span<const double> scores, EntityId gt);

/// As raw_rank with the candidates in `filter` (other than gt) removed.
/// `filter` may be unsorted and contain duplicates.
double rank_of(std::span<const double> scores, EntityId gt, std::span<const EntityId> filter);

struct RankRecord {
    Triple query;  // (head, rel, expected answer); rel >= R for head prediction
    double raw = 0.0;
    double filtered = 0.0;
};

struct Metrics {
    double mrr = 0.0, hits1 = 0.0, hits3 = 0.0, hits10 = 0.0;
    std::size_t queries = 0;

    friend bool operator==(const Metrics&, const Metrics&) = default;
};

Metrics metrics_from_ranks(std::span<const double> filtered_ranks);

struct SplitResult {
    Metrics all, tail, head;
    std::vector<RankRecord> records;  // tail queries for each triple, then head queries
};

/// Ranks (h, r, ?) and (t, r+R, ?) for every triple of `split`.
SplitResult evaluate(const RowScorer& scorer, std::span<const Triple> split, const FilterIndex& filter,
                     std::size_t num_relations, std::size_t batch_size = 256);

/// Metrics of one or more seeds plus run metadata.
struct MetricsReport {
    std::string dataset;
    std::string split;
    std::string config_hash;
    std::vector<std::uint64_t> seeds;
    std::vector<Metrics> per_seed, per_seed_tail, per_seed_head;

    void add_seed(std::uint64_t seed, const SplitResult& r);
    Metrics mean() const;
    /// Population standard deviation over seeds.
    Metrics stddev() const;

    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

nlohmann::json to_json(const MetricsReport& r);
MetricsReport report_from_json(const nlohmann::json& j);

/// "33.4" for one seed, "33.4±0.2" for several.
std::string format_cell(double mean, double std, bool with_std);

/// Name, MRR, Hits@1, Hits@3, Hits@10; values x100 to one decimal.
std::string format_table(std::span<const std::pair<std::string, MetricsReport>> rows);

}  // namespace kgc
