#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kgc/data.hpp"
#include "kgc/gradcheck.hpp"
#include "kgc/model.hpp"

namespace kgc {

/// 10 entities, 3 relations, 20 training triples.
KnowledgeGraph toy_graph(GraphMode mode = GraphMode::original);

/// Width-8, two-layer model of the given kinds, sized for the toy graph.
ModelConfig toy_model_config(EncoderKind encoder, ScorerKind scorer);

struct SuiteEntry {
    EncoderKind encoder;
    ScorerKind scorer;
    ad::GradCheckResult result;
    double seconds = 0.0;
};

struct SuiteReport {
    std::vector<SuiteEntry> entries;
    double seconds = 0.0;
    double threshold = 1e-4;

    bool passed() const;
    std::string format() const;
};

/// Every encoder x scorer pair in double precision. With `fault_op` set, that
/// primitive's adjoint is sign-flipped for the whole run.
SuiteReport run_gradcheck_suite(double threshold = 1e-4, const std::optional<std::string>& fault_op = {});

}  // namespace kgc
