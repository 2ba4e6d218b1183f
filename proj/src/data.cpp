#include "kgc/data.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "kgc/error.hpp"
#include "kgc/hash.hpp"
#include "kgc/random.hpp"

namespace kgc {

// ---------------------------------------------------------------------------
// Vocab

EntityId Vocab::add_entity(const std::string& name) {
    auto [it, inserted] = entity_ids_.emplace(name, static_cast<EntityId>(entities_.size()));
    if (inserted) entities_.push_back(name);
    return it->second;
}

RelationId Vocab::add_relation(const std::string& name) {
    auto [it, inserted] = relation_ids_.emplace(name, static_cast<RelationId>(relations_.size()));
    if (inserted) relations_.push_back(name);
    return it->second;
}

std::optional<EntityId> Vocab::entity_id(const std::string& name) const {
    auto it = entity_ids_.find(name);
    if (it == entity_ids_.end()) return std::nullopt;
    return it->second;
}

std::optional<RelationId> Vocab::relation_id(const std::string& name) const {
    auto it = relation_ids_.find(name);
    if (it == relation_ids_.end()) return std::nullopt;
    return it->second;
}

RelationId Vocab::inverse_of(RelationId r) const {
    const auto R = static_cast<RelationId>(relations_.size());
    if (r < R) return r + R;
    if (r < 2 * R) return r - R;
    throw ContractError("inverse_of: relation id " + std::to_string(r) + " has no inverse");
}

std::string Vocab::hash() const {
    std::string buf;
    for (const auto& e : entities_) {
        buf += e;
        buf.push_back('\n');
    }
    buf.push_back('\0');
    for (const auto& r : relations_) {
        buf += r;
        buf.push_back('\n');
    }
    return sha1_hex(buf);
}

// ---------------------------------------------------------------------------
// Parsing

std::vector<NamedTriple> parse_split(const std::string& text, const std::string& source) {
    std::vector<NamedTriple> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;

        std::vector<std::string> fields;
        if (line.find('\t') != std::string::npos) {
            std::size_t start = 0;
            while (true) {
                const std::size_t tab = line.find('\t', start);
                fields.push_back(line.substr(start, tab - start));
                if (tab == std::string::npos) break;
                start = tab + 1;
            }
        } else {
            std::istringstream ws(line);
            for (std::string tok; ws >> tok;) fields.push_back(tok);
        }
        if (fields.size() != 3)
            throw ParseError(source, lineno, "expected 3 tab-separated fields, found " + std::to_string(fields.size()));
        for (const auto& f : fields)
            if (f.empty()) throw ParseError(source, lineno, "empty field");
        out.push_back({fields[0], fields[1], fields[2]});
    }
    if (out.empty()) throw ParseError(source + ": file contains no triples");
    return out;
}

std::vector<NamedTriple> load_split(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("split file '" + path.string() + "' does not exist");
    return parse_split(read_file(path), path.string());
}

Vocab build_vocab(std::span<const NamedTriple> train, std::span<const NamedTriple> valid,
                  std::span<const NamedTriple> test) {
    Vocab vocab;
    for (auto split : {train, valid, test})
        for (const auto& t : split) {
            vocab.add_entity(t.head);
            vocab.add_relation(t.relation);
            vocab.add_entity(t.tail);
        }
    return vocab;
}

std::vector<Triple> encode_triples(std::span<const NamedTriple> triples, const Vocab& vocab) {
    std::vector<Triple> out;
    out.reserve(triples.size());
    for (const auto& t : triples) {
        auto h = vocab.entity_id(t.head);
        auto r = vocab.relation_id(t.relation);
        auto tl = vocab.entity_id(t.tail);
        if (!h || !r || !tl)
            throw ContractError("encode_triples: (" + t.head + ", " + t.relation + ", " + t.tail +
                                ") uses a name outside the vocabulary");
        out.push_back({*h, *r, *tl});
    }
    return out;
}

std::vector<NamedTriple> decode_triples(std::span<const Triple> triples, const Vocab& vocab) {
    std::vector<NamedTriple> out;
    out.reserve(triples.size());
    for (const auto& t : triples)
        out.push_back({vocab.entity_name(t.head), vocab.relation_name(t.rel), vocab.entity_name(t.tail)});
    return out;
}

std::vector<Triple> augment_inverse(std::span<const Triple> train, const Vocab& vocab) {
    const auto R = static_cast<RelationId>(vocab.num_relations());
    std::vector<Triple> out(train.begin(), train.end());
    out.reserve(2 * train.size());
    for (const auto& t : train) {
        if (t.rel >= R) throw ContractError("augment_inverse: relation id " + std::to_string(t.rel) + " >= R");
        out.push_back({t.tail, t.rel + R, t.head});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Graph

GraphMode parse_graph_mode(const std::string& name) {
    if (name == "original") return GraphMode::original;
    if (name == "self_loops_only") return GraphMode::self_loops_only;
    if (name == "random") return GraphMode::random;
    throw ConfigError("graph_mode: unknown mode '" + name + "' (expected original, self_loops_only or random)");
}

std::string to_string(GraphMode mode) {
    switch (mode) {
        case GraphMode::original: return "original";
        case GraphMode::self_loops_only: return "self_loops_only";
        case GraphMode::random: return "random";
    }
    return "unknown";
}

namespace {

Adjacency incoming_csr(std::span<const Triple> edges, std::size_t n) {
    Adjacency adj;
    adj.num_entities = n;
    adj.offsets.assign(n + 1, 0);
    for (const auto& e : edges) ++adj.offsets[e.tail + 1];
    for (std::size_t i = 0; i < n; ++i) adj.offsets[i + 1] += adj.offsets[i];
    adj.relation.resize(edges.size());
    adj.neighbor.resize(edges.size());
    std::vector<std::size_t> cursor(adj.offsets.begin(), adj.offsets.end() - 1);
    for (const auto& e : edges) {
        const std::size_t slot = cursor[e.tail]++;
        adj.relation[slot] = e.rel;
        adj.neighbor[slot] = e.head;
    }
    return adj;
}

}  // namespace

Adjacency build_adjacency(std::span<const Triple> train_aug, std::size_t num_entities, std::size_t num_relations,
                          GraphMode mode, std::uint64_t seed) {
    for (const auto& t : train_aug)
        if (t.head >= num_entities || t.tail >= num_entities || t.rel >= 2 * num_relations)
            throw ContractError("build_adjacency: triple references an id outside the vocabulary");

    switch (mode) {
        case GraphMode::original: return incoming_csr(train_aug, num_entities);
        case GraphMode::self_loops_only: {
            std::vector<Triple> loops;
            loops.reserve(num_entities);
            const auto self = static_cast<RelationId>(2 * num_relations);
            for (std::size_t e = 0; e < num_entities; ++e)
                loops.push_back({static_cast<EntityId>(e), self, static_cast<EntityId>(e)});
            return incoming_csr(loops, num_entities);
        }
        case GraphMode::random: {
            Rng rng(seed);
            std::vector<Triple> edges;
            edges.reserve(train_aug.size());
            for (const auto& t : train_aug) {
                const auto h = static_cast<EntityId>(rng.index(num_entities));
                const auto tl = static_cast<EntityId>(rng.index(num_entities));
                edges.push_back({h, t.rel, tl});
            }
            return incoming_csr(edges, num_entities);
        }
    }
    throw ConfigError("build_adjacency: unknown graph mode");
}

// ---------------------------------------------------------------------------
// Filter index

void FilterIndex::insert(EntityId head, RelationId rel, EntityId tail) { index_[key(head, rel)].push_back(tail); }

void FilterIndex::finalize() {
    for (auto& [_, tails] : index_) {
        std::sort(tails.begin(), tails.end());
        tails.erase(std::unique(tails.begin(), tails.end()), tails.end());
    }
}

std::span<const EntityId> FilterIndex::tails(EntityId head, RelationId rel) const {
    auto it = index_.find(key(head, rel));
    if (it == index_.end()) return {};
    return it->second;
}

bool FilterIndex::contains(EntityId head, RelationId rel, EntityId tail) const {
    auto t = tails(head, rel);
    return std::binary_search(t.begin(), t.end(), tail);
}

FilterIndex build_filter_index(std::span<const Triple> train, std::span<const Triple> valid,
                               std::span<const Triple> test, const Vocab& vocab) {
    const auto R = static_cast<RelationId>(vocab.num_relations());
    FilterIndex index;
    for (auto split : {train, valid, test})
        for (const auto& t : split) {
            index.insert(t.head, t.rel, t.tail);
            index.insert(t.tail, t.rel + R, t.head);
        }
    index.finalize();
    return index;
}

// ---------------------------------------------------------------------------
// KnowledgeGraph

const std::vector<Triple>& KnowledgeGraph::split(const std::string& which) const {
    if (which == "train") return train;
    if (which == "valid") return valid;
    if (which == "test") return test;
    throw ConfigError("split: unknown split '" + which + "' (expected train, valid or test)");
}

KnowledgeGraph make_knowledge_graph(std::span<const NamedTriple> train, std::span<const NamedTriple> valid,
                                    std::span<const NamedTriple> test, GraphMode mode, std::uint64_t graph_seed,
                                    std::string name) {
    KnowledgeGraph g;
    g.name = std::move(name);
    g.vocab = build_vocab(train, valid, test);
    g.train = encode_triples(train, g.vocab);
    g.valid = encode_triples(valid, g.vocab);
    g.test = encode_triples(test, g.vocab);
    g.train_aug = augment_inverse(g.train, g.vocab);
    g.graph_mode = mode;
    g.graph_seed = graph_seed;
    g.adjacency = build_adjacency(g.train_aug, g.num_entities(), g.num_relations(), mode, graph_seed);
    g.filter = build_filter_index(g.train, g.valid, g.test, g.vocab);
    return g;
}

KnowledgeGraph load_knowledge_graph(const std::filesystem::path& dir, GraphMode mode, std::uint64_t graph_seed) {
    if (!std::filesystem::is_directory(dir)) throw IoError("dataset directory '" + dir.string() + "' not found");
    auto train = load_split(dir / "train.txt");
    auto valid = load_split(dir / "valid.txt");
    auto test = load_split(dir / "test.txt");
    std::string name = std::filesystem::path(dir).lexically_normal().filename().string();
    if (name.empty()) name = std::filesystem::path(dir).lexically_normal().parent_path().filename().string();
    return make_knowledge_graph(train, valid, test, mode, graph_seed, name);
}

namespace {

std::string normalize_name(const std::string& s) {
    std::string out;
    for (unsigned char c : s)
        if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
    return out;
}

}  // namespace

std::optional<DatasetStats> known_dataset_stats(const std::string& name) {
    static const DatasetStats table[] = {
        {"FB15k-237", 14541, 237, 272115, 17535, 20466},
        {"WN18RR", 40943, 11, 86835, 3034, 3134},
        {"WN18", 40943, 18, 141442, 5000, 5000},
        {"FB15k", 14951, 1345, 483142, 50000, 59071},
        {"NELL-995", 75492, 200, 126176, 13912, 14125},
    };
    const std::string key = normalize_name(name);
    for (const auto& s : table)
        if (normalize_name(s.name) == key) return s;
    return std::nullopt;
}

std::vector<std::string> validate_against_known(const KnowledgeGraph& graph, const std::string& name) {
    std::vector<std::string> issues;
    auto stats = known_dataset_stats(name);
    if (!stats) return issues;
    auto check = [&](const char* what, std::size_t got, std::size_t expected) {
        if (got != expected)
            issues.push_back(std::string(what) + ": " + std::to_string(got) + " (published " +
                             std::to_string(expected) + ")");
    };
    check("entities", graph.num_entities(), stats->entities);
    check("relations", graph.num_relations(), stats->relations);
    check("train triples", graph.train.size(), stats->train);
    check("valid triples", graph.valid.size(), stats->valid);
    check("test triples", graph.test.size(), stats->test);
    return issues;
}

}  // namespace kgc
