#include "kgc/ablation.hpp"

#include <cctype>

#include "kgc/error.hpp"

namespace kgc {

AblationMode parse_ablation_mode(const std::string& s) {
    if (s == "mlp_swap") return AblationMode::mlp_swap;
    if (s == "random_graph") return AblationMode::random_graph;
    if (s == "neg_sweep") return AblationMode::neg_sweep;
    if (s == "scorer_swap") return AblationMode::scorer_swap;
    throw ConfigError("ablate.mode: unknown mode '" + s +
                      "' (expected mlp_swap, random_graph, neg_sweep or scorer_swap)");
}

std::string to_string(AblationMode m) {
    switch (m) {
        case AblationMode::mlp_swap: return "mlp_swap";
        case AblationMode::random_graph: return "random_graph";
        case AblationMode::neg_sweep: return "neg_sweep";
        case AblationMode::scorer_swap: return "scorer_swap";
    }
    return "unknown";
}

std::string encoder_display_name(EncoderKind k) {
    switch (k) {
        case EncoderKind::mlp: return "MLP";
        case EncoderKind::rgcn: return "RGCN";
        case EncoderKind::compgcn: return "CompGCN";
        case EncoderKind::kbgat: return "KBGAT";
    }
    return "?";
}

std::vector<AblationVariant> ablation_variants(const RunConfig& base, AblationMode mode, std::size_t N) {
    std::vector<AblationVariant> out;
    auto slug = [&](const std::string& s) {
        std::string r;
        for (char c : s) r += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
        return r;
    };
    auto variant = [&](const std::string& name) {
        AblationVariant v{name, base, ""};
        v.config.out = base.out / slug(name);
        return v;
    };
    switch (mode) {
        case AblationMode::mlp_swap: {
            if (base.model.encoder.kind == EncoderKind::mlp)
                throw ConfigError("encoder.kind: mlp_swap needs a message-passing encoder in the base config");
            const std::string name = encoder_display_name(base.model.encoder.kind);
            out.push_back(variant(name));
            AblationVariant mlp = variant(name + "-MLP");
            mlp.config.model.encoder.mlp_relation_transform = base.model.encoder.kind == EncoderKind::compgcn;
            mlp.config.model.encoder.kind = EncoderKind::mlp;
            mlp.config.model.graph_mode = GraphMode::original;
            out.push_back(std::move(mlp));
            break;
        }
        case AblationMode::random_graph: {
            AblationVariant orig = variant("Original");
            orig.config.model.graph_mode = GraphMode::original;
            AblationVariant rnd = variant("Random");
            rnd.config.model.graph_mode = GraphMode::random;
            out.push_back(std::move(orig));
            out.push_back(std::move(rnd));
            break;
        }
        case AblationMode::neg_sweep: {
            for (const char* k : {"10", "50", "200", "0.5N", "N"}) {
                AblationVariant v = variant(k);
                v.config.loss.regime = LossRegime::with_sampling;
                v.config.loss.k = k;
                try {
                    v.config.loss.validate(N);
                } catch (const ConfigError& e) {
                    v.skipped = e.what();
                }
                out.push_back(std::move(v));
            }
            break;
        }
        case AblationMode::scorer_swap: {
            AblationVariant d = variant("DistMult");
            d.config.model.scorer.kind = ScorerKind::distmult;
            AblationVariant c = variant("ConvE");
            c.config.model.scorer.kind = ScorerKind::conve;
            out.push_back(std::move(d));
            out.push_back(std::move(c));
            break;
        }
    }
    for (auto& v : out)
        if (v.skipped.empty()) v.config.model.validate();
    return out;
}

}  // namespace kgc
