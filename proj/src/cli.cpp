#include "kgc/cli.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <omp.h>

#include "CLI11.hpp"
#include "kgc/ablation.hpp"
#include "kgc/ensemble.hpp"
#include "kgc/error.hpp"
#include "kgc/gradcheck_suite.hpp"
#include "kgc/hash.hpp"
#include "kgc/runner.hpp"

namespace kgc {

using nlohmann::json;
namespace fs = std::filesystem;

void apply_thread_limit() {
    const char* env = std::getenv("KGC_THREADS");
    if (!env || !*env) return;
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*end != '\0' || n <= 0) throw ConfigError("KGC_THREADS: expected a positive integer, got '" + std::string(env) + "'");
    omp_set_num_threads(static_cast<int>(n));
    Eigen::setNbThreads(static_cast<int>(n));
}

namespace {

struct Options {
    std::string config, seeds, out, format = "table", split = "test";
    std::string checkpoint, dataset, spec, mode, inject;
};

void check_format(const Options& o) {
    if (o.format != "table" && o.format != "json")
        throw ConfigError("--format: expected table or json, got '" + o.format + "'");
    if (o.split != "valid" && o.split != "test")
        throw ConfigError("--split: expected valid or test, got '" + o.split + "'");
}

std::string model_label(const ModelConfig& m, const LossConfig& l) {
    return encoder_display_name(m.encoder.kind) + "+" +
           (m.scorer.kind == ScorerKind::distmult ? std::string("DistMult") : std::string("ConvE")) + " " + l.label();
}

RunConfig load_with_overrides(const Options& o) {
    RunConfig cfg = load_run_config(o.config);
    if (!o.seeds.empty()) cfg.seeds = parse_seed_list(o.seeds);
    if (!o.out.empty()) cfg.out = o.out;
    return cfg;
}

void emit(const Options& o, const json& j, const std::string& table) {
    if (o.format == "json") std::cout << j.dump(2) << "\n";
    else std::cout << table;
}

void log_line(const std::string& s) { std::cerr << s << "\n"; }

int cmd_train(const Options& o) {
    check_format(o);
    RunConfig cfg = load_with_overrides(o);
    const KnowledgeGraph kg = load_knowledge_graph(cfg.dataset);
    validate_run(cfg, kg);
    RunOutcome run = execute_run(cfg, kg, cfg.out, log_line, fs::path(o.config));
    const MetricsReport& rep = o.split == "valid" ? run.valid : run.test;
    std::vector<std::pair<std::string, MetricsReport>> rows{{model_label(cfg.model, cfg.loss), rep}};
    emit(o, to_json(rep), format_table(rows));
    std::cerr << "run directory: " << cfg.out.string() << "\n";
    return 0;
}

int cmd_eval(const Options& o) {
    check_format(o);
    if (o.checkpoint.empty()) throw ConfigError("--checkpoint: required");
    if (o.dataset.empty()) throw ConfigError("--dataset: required");
    const Checkpoint ckpt = load_checkpoint(o.checkpoint);
    const KnowledgeGraph kg = load_knowledge_graph(o.dataset);
    const MetricsReport rep = evaluate_checkpoint(ckpt, kg, o.split);
    if (!o.out.empty()) write_file_atomic(o.out, to_json(rep).dump(2) + "\n");
    std::vector<std::pair<std::string, MetricsReport>> rows{{model_label(ckpt.model, ckpt.loss), rep}};
    emit(o, to_json(rep), format_table(rows));
    return 0;
}

int cmd_ensemble(const Options& o) {
    check_format(o);
    if (o.spec.empty()) throw ConfigError("--spec: required");
    const EnsembleSpec spec = load_ensemble_spec(o.spec);
    fs::path data_dir = o.dataset;
    if (data_dir.empty()) {
        data_dir = fs::path(o.spec).parent_path() / spec.dataset;
        if (!fs::is_directory(data_dir))
            throw ConfigError("--dataset: required (spec names '" + spec.dataset + "', which is not a directory)");
    }
    const KnowledgeGraph kg = load_knowledge_graph(data_dir);
    const auto members = load_ensemble_members(spec, kg);

    std::vector<std::pair<std::string, MetricsReport>> rows;
    std::vector<std::shared_ptr<const RowScorer>> scorers;
    json jmembers = json::array();
    const bool all_mlp = std::all_of(members.begin(), members.end(), [](const EnsembleMember& m) {
        return m.checkpoint.model.encoder.kind == EncoderKind::mlp;
    });
    for (const auto& m : members) {
        MetricsReport rep = evaluate_checkpoint(m.checkpoint, kg, o.split);
        const std::string name = model_label(m.checkpoint.model, m.checkpoint.loss);
        jmembers.push_back({{"name", name}, {"path", m.path.string()}, {"report", to_json(rep)}});
        rows.emplace_back(name, std::move(rep));
        scorers.push_back(m.model);
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (rows[i].second.mean().mrr > rows[best].second.mean().mrr) best = i;
    const std::string prefix = all_mlp ? "MLP" : "member";
    MetricsReport best_rep = rows[best].second;

    EnsembleScorer ens(scorers);
    MetricsReport ens_rep;
    ens_rep.dataset = kg.name;
    ens_rep.split = o.split;
    std::string hashes;
    for (const auto& m : members) hashes += git_blob_hash_of_file(m.path);
    ens_rep.config_hash = sha1_hex(hashes);
    ens_rep.add_seed(0, evaluate(ens, kg.split(o.split), kg.filter, kg.num_relations()));

    rows.emplace_back(prefix + "-best", best_rep);
    rows.emplace_back(prefix + "-ensemble", ens_rep);
    json j{{"dataset", kg.name},
           {"split", o.split},
           {"members", jmembers},
           {"best", jmembers[best]["name"]},
           {"ensemble", to_json(ens_rep)}};
    if (!o.out.empty()) write_file_atomic(o.out, j.dump(2) + "\n");
    emit(o, j, format_table(rows));
    return 0;
}

int cmd_ablate(const Options& o) {
    check_format(o);
    if (o.mode.empty()) throw ConfigError("--mode: required (mlp_swap, random_graph, neg_sweep or scorer_swap)");
    const AblationMode mode = parse_ablation_mode(o.mode);
    RunConfig base = load_with_overrides(o);
    const KnowledgeGraph kg = load_knowledge_graph(base.dataset);
    auto variants = ablation_variants(base, mode, kg.num_entities());
    for (const auto& v : variants)
        if (v.skipped.empty()) validate_run(v.config, kg);

    std::vector<std::pair<std::string, MetricsReport>> rows;
    json jrows = json::array();
    for (const auto& v : variants) {
        if (!v.skipped.empty()) {
            std::cerr << "skipping " << v.name << ": " << v.skipped << "\n";
            jrows.push_back({{"name", v.name}, {"skipped", v.skipped}});
            continue;
        }
        std::cerr << "== " << v.name << "\n";
        RunOutcome run = execute_run(v.config, kg, v.config.out, log_line, fs::path(o.config));
        const MetricsReport& rep = o.split == "valid" ? run.valid : run.test;
        jrows.push_back({{"name", v.name}, {"report", to_json(rep)}});
        rows.emplace_back(v.name, rep);
    }
    json j{{"mode", to_string(mode)}, {"dataset", kg.name}, {"split", o.split}, {"rows", jrows}};
    fs::create_directories(base.out);
    write_file_atomic(base.out / "ablation.json", j.dump(2) + "\n");
    std::string table = format_table(rows);
    for (const auto& v : variants)
        if (!v.skipped.empty()) table += v.name + ": not run (" + v.skipped + ")\n";
    write_file_atomic(base.out / "ablation.txt", table);
    emit(o, j, table);
    return 0;
}

int cmd_gradcheck(const Options& o) {
    static const std::vector<std::string> ops{
        "matmul", "add", "sub", "mul", "scale", "scale_rows", "concat", "reshape", "conv2d", "sigmoid", "tanh",
        "relu", "leaky_relu", "softmax", "sum", "row_sum", "gather_rows", "scatter_add_rows", "ccorr", "ccorr_rows",
        "bce_with_logits"};
    std::optional<std::string> fault;
    if (!o.inject.empty()) {
        if (std::find(ops.begin(), ops.end(), o.inject) == ops.end()) {
            std::string known;
            for (const auto& op : ops) known += (known.empty() ? "" : ", ") + op;
            throw ConfigError("--inject-sign-flip: unknown primitive '" + o.inject + "' (one of " + known + ")");
        }
        fault = o.inject;
    }
    const SuiteReport rep = run_gradcheck_suite(1e-4, fault);
    std::cout << rep.format();
    return rep.passed() ? 0 : 1;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Knowledge-graph completion: train, evaluate, ablate and ensemble"};
    app.require_subcommand(1);
    Options o;

    auto* train = app.add_subcommand("train", "Train one model per seed and report metrics");
    train->add_option("config,--config", o.config, "Run config (JSON)")->required();
    train->add_option("--seeds", o.seeds, "Comma-separated seed list (overrides the config)");
    train->add_option("--out", o.out, "Run directory (overrides the config)");
    train->add_option("--format", o.format, "table or json");
    train->add_option("--split", o.split, "Split reported on stdout: valid or test");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval->add_option("checkpoint,--checkpoint", o.checkpoint, "Checkpoint file")->required();
    eval->add_option("--dataset", o.dataset, "Dataset directory")->required();
    eval->add_option("--split", o.split, "valid or test");
    eval->add_option("--format", o.format, "table or json");
    eval->add_option("--out", o.out, "Also write the JSON report here");

    auto* ens = app.add_subcommand("ensemble", "Evaluate a score-sum ensemble");
    ens->add_option("spec,--spec", o.spec, "Ensemble spec file")->required();
    ens->add_option("--dataset", o.dataset, "Dataset directory");
    ens->add_option("--split", o.split, "valid or test");
    ens->add_option("--format", o.format, "table or json");
    ens->add_option("--out", o.out, "Also write the JSON report here");

    auto* abl = app.add_subcommand("ablate", "Run a base config against its ablated variants");
    abl->add_option("config,--config", o.config, "Base run config (JSON)")->required();
    abl->add_option("--mode", o.mode, "mlp_swap, random_graph, neg_sweep or scorer_swap")->required();
    abl->add_option("--seeds", o.seeds, "Comma-separated seed list");
    abl->add_option("--out", o.out, "Output directory");
    abl->add_option("--format", o.format, "table or json");
    abl->add_option("--split", o.split, "valid or test");

    auto* gc = app.add_subcommand("gradcheck", "Central-difference check of every encoder x scorer pair");
    gc->add_option("--inject-sign-flip", o.inject, "Negate one primitive's adjoint (test fixture)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        apply_thread_limit();
        if (*train) return cmd_train(o);
        if (*eval) return cmd_eval(o);
        if (*ens) return cmd_ensemble(o);
        if (*abl) return cmd_ablate(o);
        if (*gc) return cmd_gradcheck(o);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}

}  // namespace kgc
