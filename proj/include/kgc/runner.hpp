#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kgc/checkpoint.hpp"
#include "kgc/config.hpp"
#include "kgc/evaluation.hpp"

namespace kgc {

struct SeedOutcome {
    std::uint64_t seed = 0;
    TrainResult train;
    SplitResult valid, test;
};

struct RunOutcome {
    std::string config_hash;
    std::vector<SeedOutcome> seeds;
    MetricsReport valid, test;
};

using RunLog = std::function<void(const std::string&)>;

/// Throws ConfigError for anything the dataset makes invalid (e.g. k > N-1).
void validate_run(const RunConfig& cfg, const KnowledgeGraph& kg);

/// Trains every seed and evaluates the best parameters on valid and test.
/// With `out_dir`, writes resolved_config.json, manifest.json, report.json,
/// report_valid.json and seed<s>/{model.ckpt,report.json}.
RunOutcome execute_run(const RunConfig& cfg, const KnowledgeGraph& kg,
                       const std::optional<std::filesystem::path>& out_dir, const RunLog& log = {},
                       const std::optional<std::filesystem::path>& config_source = {});

Checkpoint make_checkpoint(const RunConfig& cfg, const KnowledgeGraph& kg, const SeedOutcome& seed);

/// Single-seed report for a stored checkpoint.
MetricsReport evaluate_checkpoint(const Checkpoint& ckpt, const KnowledgeGraph& kg, const std::string& split);

/// Git-style hashes of the dataset files and the config file.
nlohmann::json run_manifest(const RunConfig& cfg, const KnowledgeGraph& kg,
                            const std::optional<std::filesystem::path>& config_source);

}  // namespace kgc
