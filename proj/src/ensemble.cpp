#include "kgc/ensemble.hpp"

#include <sstream>

#include "kgc/error.hpp"
#include "kgc/hash.hpp"

namespace kgc {

EnsembleScorer::EnsembleScorer(std::vector<std::shared_ptr<const RowScorer>> members) : members_(std::move(members)) {
    if (members_.empty()) throw ConfigError("ensemble: member list is empty");
    num_entities_ = members_.front()->num_entities();
    for (const auto& m : members_)
        if (m->num_entities() != num_entities_) throw ConfigError("ensemble: members disagree on the entity count");
}

void EnsembleScorer::score_rows(std::span<const Query> queries, std::span<double> out) const {
    members_.front()->score_rows(queries, out);
    std::vector<double> buf(out.size());
    for (std::size_t m = 1; m < members_.size(); ++m) {
        members_[m]->score_rows(queries, buf);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += buf[i];
    }
}

std::vector<double> ensemble_scores(std::span<const RowScorer* const> members, Query query) {
    if (members.empty()) throw ConfigError("ensemble: member list is empty");
    const std::size_t N = members.front()->num_entities();
    std::vector<double> sum(N, 0.0), row(N);
    for (const RowScorer* m : members) {
        if (m->num_entities() != N) throw ConfigError("ensemble: members disagree on the entity count");
        m->score_rows(std::span<const Query>(&query, 1), row);
        for (std::size_t i = 0; i < N; ++i) sum[i] += row[i];
    }
    return sum;
}

EnsembleSpec parse_ensemble_spec(const std::string& text, const std::filesystem::path& base_dir,
                                 const std::string& source) {
    EnsembleSpec spec;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string{};
        return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(source, lineno, "expected key = value");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (value.empty()) throw ParseError(source, lineno, "empty value for '" + key + "'");
        if (key == "dataset") spec.dataset = value;
        else if (key == "vocab_hash") spec.vocab_hash = value;
        else if (key == "member") {
            std::filesystem::path p(value);
            spec.members.push_back(p.is_absolute() ? p : base_dir / p);
        } else throw ParseError(source, lineno, "unknown key '" + key + "'");
    }
    if (spec.members.empty()) throw ConfigError(source + ": ensemble spec lists no members");
    return spec;
}

EnsembleSpec load_ensemble_spec(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError(path.string() + ": ensemble spec not found");
    return parse_ensemble_spec(read_file(path), path.parent_path(), path.string());
}

std::vector<EnsembleMember> load_ensemble_members(const EnsembleSpec& spec, const KnowledgeGraph& kg) {
    const std::string expected = kg.vocab.hash();
    if (spec.vocab_hash != "auto" && spec.vocab_hash != expected)
        throw ConfigError("ensemble.vocab_hash: spec expects " + spec.vocab_hash + " but the dataset has " + expected);
    std::vector<EnsembleMember> out;
    for (const auto& path : spec.members) {
        EnsembleMember m;
        m.path = path;
        m.checkpoint = load_checkpoint(path);
        if (m.checkpoint.vocab_hash != expected)
            throw ConfigError("ensemble.member " + path.string() + ": vocab hash " + m.checkpoint.vocab_hash +
                              " does not match the dataset (" + expected + ")");
        m.model = std::make_shared<FrozenModel>(m.checkpoint.model, m.checkpoint.params,
                                                model_plan(m.checkpoint.model, kg));
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace kgc
