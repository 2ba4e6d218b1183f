#pragma once

#include <string>
#include <vector>

#include "kgc/config.hpp"

namespace kgc {

enum class AblationMode { mlp_swap, random_graph, neg_sweep, scorer_swap };

AblationMode parse_ablation_mode(const std::string& s);
std::string to_string(AblationMode m);

/// "CompGCN", "RGCN", "KBGAT", "MLP".
std::string encoder_display_name(EncoderKind k);

struct AblationVariant {
    std::string name;
    RunConfig config;
    /// Non-empty when the variant cannot run on this dataset (row kept, marked).
    std::string skipped;
};

/// Rows of the comparison table, base configuration first where it is one of them.
///   mlp_swap:     X, X-MLP
///   random_graph: Original, Random
///   neg_sweep:    10, 50, 200, 0.5N, N (with_sampling)
///   scorer_swap:  DistMult, ConvE
std::vector<AblationVariant> ablation_variants(const RunConfig& base, AblationMode mode, std::size_t num_entities);

}  // namespace kgc
