#include "kgc/runner.hpp"

#include <cstdio>

#include "kgc/error.hpp"
#include "kgc/hash.hpp"

namespace kgc {

using nlohmann::json;

void validate_run(const RunConfig& cfg, const KnowledgeGraph& kg) {
    cfg.model.validate();
    cfg.train.validate();
    cfg.loss.validate(kg.num_entities());
    if (cfg.seeds.empty()) throw ConfigError("seeds: need at least one seed");
}

Checkpoint make_checkpoint(const RunConfig& cfg, const KnowledgeGraph& kg, const SeedOutcome& s) {
    Checkpoint c;
    c.model = cfg.model;
    c.loss = cfg.loss;
    c.train = cfg.train;
    c.dataset = kg.name;
    c.vocab_hash = kg.vocab.hash();
    c.best_valid_mrr = s.train.best_valid_mrr;
    c.epoch = s.train.best_epoch;
    c.seed = s.seed;
    c.params = s.train.best;
    return c;
}

MetricsReport evaluate_checkpoint(const Checkpoint& ckpt, const KnowledgeGraph& kg, const std::string& split) {
    if (ckpt.vocab_hash != kg.vocab.hash())
        throw ConfigError("checkpoint: vocab hash " + ckpt.vocab_hash + " does not match dataset '" + kg.name +
                          "' (" + kg.vocab.hash() + ")");
    FrozenModel model(ckpt.model, ckpt.params, model_plan(ckpt.model, kg));
    MetricsReport r;
    r.dataset = kg.name;
    r.split = split;
    r.config_hash = config_hash(ckpt.model, ckpt.loss, ckpt.train, kg.name);
    r.add_seed(ckpt.seed, evaluate(model, kg.split(split), kg.filter, kg.num_relations()));
    return r;
}

json run_manifest(const RunConfig& cfg, const KnowledgeGraph& kg,
                  const std::optional<std::filesystem::path>& config_source) {
    json inputs = json::object();
    for (const char* f : {"train.txt", "valid.txt", "test.txt"}) {
        const auto p = cfg.dataset / f;
        if (std::filesystem::exists(p)) inputs[f] = git_blob_hash_of_file(p);
    }
    json m{{"dataset", kg.name},
           {"dataset_path", cfg.dataset.string()},
           {"vocab_hash", kg.vocab.hash()},
           {"config_hash", config_hash(cfg)},
           {"inputs", inputs}};
    if (config_source) m["config"] = {{"path", config_source->string()}, {"blob", git_blob_hash_of_file(*config_source)}};
    return m;
}

RunOutcome execute_run(const RunConfig& cfg, const KnowledgeGraph& kg,
                       const std::optional<std::filesystem::path>& out_dir, const RunLog& log,
                       const std::optional<std::filesystem::path>& config_source) {
    validate_run(cfg, kg);
    RunOutcome out;
    out.config_hash = config_hash(cfg.model, cfg.loss, cfg.train, kg.name);
    for (MetricsReport* r : {&out.valid, &out.test}) {
        r->dataset = kg.name;
        r->config_hash = out.config_hash;
    }
    out.valid.split = "valid";
    out.test.split = "test";

    if (out_dir) {
        std::filesystem::create_directories(*out_dir);
        write_file_atomic(*out_dir / "resolved_config.json", to_json(cfg).dump(2) + "\n");
        write_file_atomic(*out_dir / "manifest.json", run_manifest(cfg, kg, config_source).dump(2) + "\n");
    }

    for (std::uint64_t seed : cfg.seeds) {
        SeedOutcome s;
        s.seed = seed;
        s.train = train(cfg.model, cfg.loss, cfg.train, kg, seed, [&](const EpochLog& e) {
            if (!log || e.valid_mrr < 0) return;
            char buf[160];
            std::snprintf(buf, sizeof buf, "seed %llu epoch %zu loss %.4f valid_mrr %.4f",
                          static_cast<unsigned long long>(seed), e.epoch, e.loss, e.valid_mrr);
            log(buf);
        });
        FrozenModel best(cfg.model, s.train.best, model_plan(cfg.model, kg));
        s.valid = evaluate(best, kg.valid, kg.filter, kg.num_relations());
        s.test = evaluate(best, kg.test, kg.filter, kg.num_relations());
        out.valid.add_seed(seed, s.valid);
        out.test.add_seed(seed, s.test);

        if (out_dir) {
            const auto dir = *out_dir / ("seed" + std::to_string(seed));
            std::filesystem::create_directories(dir);
            save_checkpoint(dir / "model.ckpt", make_checkpoint(cfg, kg, s));
            MetricsReport v, t;
            for (auto [rep, res, name] : {std::tuple{&v, &s.valid, "valid"}, std::tuple{&t, &s.test, "test"}}) {
                rep->dataset = kg.name;
                rep->split = name;
                rep->config_hash = out.config_hash;
                rep->add_seed(seed, *res);
            }
            json j{{"valid", to_json(v)}, {"test", to_json(t)}, {"best_epoch", s.train.best_epoch},
                   {"epochs_run", s.train.epochs_run}};
            write_file_atomic(dir / "report.json", j.dump(2) + "\n");
        }
        out.seeds.push_back(std::move(s));
    }

    if (out_dir) {
        write_file_atomic(*out_dir / "report.json", to_json(out.test).dump(2) + "\n");
        write_file_atomic(*out_dir / "report_valid.json", to_json(out.valid).dump(2) + "\n");
    }
    return out;
}

}  // namespace kgc
