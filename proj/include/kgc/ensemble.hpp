#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "kgc/checkpoint.hpp"
#include "kgc/model.hpp"

namespace kgc {

/// Sum of member score rows, added in member order. No weighting.
class EnsembleScorer : public RowScorer {
public:
    explicit EnsembleScorer(std::vector<std::shared_ptr<const RowScorer>> members);

    std::size_t num_entities() const override { return num_entities_; }
    void score_rows(std::span<const Query> queries, std::span<double> out) const override;
    std::size_t size() const { return members_.size(); }

private:
    std::vector<std::shared_ptr<const RowScorer>> members_;
    std::size_t num_entities_ = 0;
};

/// One summed row for a single query.
std::vector<double> ensemble_scores(std::span<const RowScorer* const> members, Query query);

/// Key-value spec file:
///
///   # comment
///   dataset    = FB15k-237
///   vocab_hash = auto            (or a 40-digit hex hash)
///   member     = runs/a/seed0/model.ckpt
///   member     = runs/b/seed0/model.ckpt
///
/// Member paths are relative to the spec file.
struct EnsembleSpec {
    std::string dataset;
    std::string vocab_hash = "auto";
    std::vector<std::filesystem::path> members;
};

EnsembleSpec parse_ensemble_spec(const std::string& text, const std::filesystem::path& base_dir,
                                 const std::string& source);
EnsembleSpec load_ensemble_spec(const std::filesystem::path& path);

struct EnsembleMember {
    std::filesystem::path path;
    Checkpoint checkpoint;
    std::shared_ptr<const FrozenModel> model;
};

/// Loads every member checkpoint and checks each vocab hash against
/// `vocab_hash` and against the spec. Missing files raise IoError, mismatches
/// ConfigError.
std::vector<EnsembleMember> load_ensemble_members(const EnsembleSpec& spec, const KnowledgeGraph& kg);

}  // namespace kgc
