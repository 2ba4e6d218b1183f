#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace kgc {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

/// A triple as it appears in a split file.
struct NamedTriple {
    std::string head;
    std::string relation;
    std::string tail;

    friend bool operator==(const NamedTriple&, const NamedTriple&) = default;
};

/// A triple over dense ids. Inverse relations occupy [R, 2R); 2R is the self-loop.
struct Triple {
    EntityId head = 0;
    RelationId rel = 0;
    EntityId tail = 0;

    friend bool operator==(const Triple&, const Triple&) = default;
};

/// Bijection between names and dense ids, assigned in first-seen order.
class Vocab {
public:
    EntityId add_entity(const std::string& name);
    RelationId add_relation(const std::string& name);

    std::optional<EntityId> entity_id(const std::string& name) const;
    std::optional<RelationId> relation_id(const std::string& name) const;
    const std::string& entity_name(EntityId id) const { return entities_.at(id); }
    const std::string& relation_name(RelationId id) const { return relations_.at(id); }

    /// Entity count N.
    std::size_t num_entities() const { return entities_.size(); }
    /// Base relation count R (inverses excluded).
    std::size_t num_relations() const { return relations_.size(); }

    RelationId inverse_of(RelationId r) const;
    RelationId self_loop() const { return static_cast<RelationId>(2 * relations_.size()); }

    /// SHA-1 over the ordered name lists; identifies the id assignment.
    std::string hash() const;

private:
    std::vector<std::string> entities_;
    std::vector<std::string> relations_;
    std::unordered_map<std::string, EntityId> entity_ids_;
    std::unordered_map<std::string, RelationId> relation_ids_;
};

/// Parse `head\trelation\ttail` lines. Blank lines are skipped; the file must
/// contain at least one triple.
std::vector<NamedTriple> load_split(const std::filesystem::path& path);

/// Parse from an in-memory buffer; `source` is used in error messages.
std::vector<NamedTriple> parse_split(const std::string& text, const std::string& source);

Vocab build_vocab(std::span<const NamedTriple> train, std::span<const NamedTriple> valid,
                  std::span<const NamedTriple> test);

std::vector<Triple> encode_triples(std::span<const NamedTriple> triples, const Vocab& vocab);
std::vector<NamedTriple> decode_triples(std::span<const Triple> triples, const Vocab& vocab);

/// Originals followed by (t, r+R, h) for each (h, r, t), in the same order.
std::vector<Triple> augment_inverse(std::span<const Triple> train, const Vocab& vocab);

enum class GraphMode { original, self_loops_only, random };

GraphMode parse_graph_mode(const std::string& name);
std::string to_string(GraphMode mode);

/// Incoming neighbour lists in CSR form: entity e's tuples are
/// (relation[i], neighbor[i]) for i in [offsets[e], offsets[e+1]).
struct Adjacency {
    std::size_t num_entities = 0;
    std::vector<std::size_t> offsets;
    std::vector<RelationId> relation;
    std::vector<EntityId> neighbor;

    std::size_t num_edges() const { return relation.size(); }
    std::size_t degree(EntityId e) const { return offsets[e + 1] - offsets[e]; }
};

/// original: triple (h, r, t) adds (r, h) to t's list.
/// self_loops_only: every entity gets exactly (2R, itself).
/// random: |train_aug| edges, both endpoints uniform from `seed`, relations kept.
Adjacency build_adjacency(std::span<const Triple> train_aug, std::size_t num_entities,
                          std::size_t num_relations, GraphMode mode, std::uint64_t seed = 0);

/// Known-true tails per (head, relation) across all splits, both directions.
class FilterIndex {
public:
    void insert(EntityId head, RelationId rel, EntityId tail);
    /// Sorts and deduplicates; called once after all inserts.
    void finalize();

    /// Sorted tails for (head, rel); empty when the query is unknown.
    std::span<const EntityId> tails(EntityId head, RelationId rel) const;
    bool contains(EntityId head, RelationId rel, EntityId tail) const;
    std::size_t num_keys() const { return index_.size(); }

private:
    static std::uint64_t key(EntityId h, RelationId r) { return (std::uint64_t{h} << 32) | r; }
    std::unordered_map<std::uint64_t, std::vector<EntityId>> index_;
};

FilterIndex build_filter_index(std::span<const Triple> train, std::span<const Triple> valid,
                               std::span<const Triple> test, const Vocab& vocab);

struct KnowledgeGraph {
    std::string name;
    Vocab vocab;
    std::vector<Triple> train, valid, test;
    std::vector<Triple> train_aug;
    Adjacency adjacency;
    GraphMode graph_mode = GraphMode::original;
    std::uint64_t graph_seed = 0;
    FilterIndex filter;

    std::size_t num_entities() const { return vocab.num_entities(); }
    std::size_t num_relations() const { return vocab.num_relations(); }
    const std::vector<Triple>& split(const std::string& name) const;
};

KnowledgeGraph make_knowledge_graph(std::span<const NamedTriple> train, std::span<const NamedTriple> valid,
                                    std::span<const NamedTriple> test, GraphMode mode = GraphMode::original,
                                    std::uint64_t graph_seed = 0, std::string name = "");

/// Reads train.txt / valid.txt / test.txt from `dir`.
KnowledgeGraph load_knowledge_graph(const std::filesystem::path& dir, GraphMode mode = GraphMode::original,
                                    std::uint64_t graph_seed = 0);

/// Published sizes of the benchmark datasets, for ingestion validation.
struct DatasetStats {
    std::string name;
    std::size_t entities, relations, train, valid, test;
};

std::optional<DatasetStats> known_dataset_stats(const std::string& name);

/// Mismatches between `graph` and the published sizes of `name` (empty if none
/// or if `name` is not a known dataset).
std::vector<std::string> validate_against_known(const KnowledgeGraph& graph, const std::string& name);

}  // namespace kgc
