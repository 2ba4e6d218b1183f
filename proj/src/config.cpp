#include "kgc/config.hpp"

#include <set>
#include <sstream>

#include "kgc/error.hpp"
#include "kgc/hash.hpp"

namespace kgc {

using nlohmann::json;

namespace {

void only_keys(const json& j, const std::string& section, std::initializer_list<const char*> keys) {
    if (!j.is_object()) throw ConfigError(section + ": expected an object");
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw ConfigError(section + "." + k + ": unknown field");
}

template <typename V>
V field(const json& j, const std::string& section, const char* key, V fallback) {
    auto it = j.find(key);
    if (it == j.end()) return fallback;
    try {
        return it->get<V>();
    } catch (const json::exception&) {
        throw ConfigError(section + "." + key + ": wrong type (" + it->dump() + ")");
    }
}

}  // namespace

json to_json(const ModelConfig& c) {
    const auto& e = c.encoder;
    const auto& s = c.scorer;
    return {
        {"encoder",
         {{"kind", to_string(e.kind)},
          {"dims", e.dims},
          {"activation", to_string(e.activation)},
          {"leaky_slope", e.leaky_slope},
          {"relation_transform", e.mlp_relation_transform}}},
        {"scorer",
         {{"kind", to_string(s.kind)},
          {"diagonal", to_string(s.diagonal)},
          {"rows", s.rows},
          {"cols", s.cols},
          {"filters", s.filters},
          {"kernel", {s.kernel_h, s.kernel_w}},
          {"tail_bias", s.tail_bias},
          {"dropout", {{"input", s.input_dropout}, {"feature", s.feature_dropout}, {"hidden", s.hidden_dropout}}}}},
        {"graph", {{"mode", to_string(c.graph_mode)}, {"seed", c.graph_seed}}},
    };
}

namespace {

void read_model_sections(const json& j, ModelConfig& c) {
    if (auto it = j.find("encoder"); it != j.end()) {
        const json& e = *it;
        only_keys(e, "encoder", {"kind", "dims", "activation", "leaky_slope", "relation_transform"});
        auto& o = c.encoder;
        o.kind = parse_encoder_kind(field<std::string>(e, "encoder", "kind", to_string(o.kind)));
        o.dims = field<std::vector<std::size_t>>(e, "encoder", "dims", o.dims);
        o.activation = parse_activation(field<std::string>(e, "encoder", "activation", to_string(o.activation)));
        o.leaky_slope = field<double>(e, "encoder", "leaky_slope", o.leaky_slope);
        o.mlp_relation_transform = field<bool>(e, "encoder", "relation_transform", o.mlp_relation_transform);
    }
    if (auto it = j.find("scorer"); it != j.end()) {
        const json& s = *it;
        only_keys(s, "scorer", {"kind", "diagonal", "rows", "cols", "filters", "kernel", "tail_bias", "dropout"});
        auto& o = c.scorer;
        o.kind = parse_scorer_kind(field<std::string>(s, "scorer", "kind", to_string(o.kind)));
        o.diagonal = parse_diagonal_source(field<std::string>(s, "scorer", "diagonal", to_string(o.diagonal)));
        o.rows = field<std::size_t>(s, "scorer", "rows", o.rows);
        o.cols = field<std::size_t>(s, "scorer", "cols", o.cols);
        o.filters = field<std::size_t>(s, "scorer", "filters", o.filters);
        auto kernel = field<std::vector<std::size_t>>(s, "scorer", "kernel", {o.kernel_h, o.kernel_w});
        if (kernel.size() != 2) throw ConfigError("scorer.kernel: expected [height, width]");
        o.kernel_h = kernel[0];
        o.kernel_w = kernel[1];
        o.tail_bias = field<bool>(s, "scorer", "tail_bias", o.tail_bias);
        if (auto d = s.find("dropout"); d != s.end()) {
            only_keys(*d, "scorer.dropout", {"input", "feature", "hidden"});
            o.input_dropout = field<double>(*d, "scorer.dropout", "input", o.input_dropout);
            o.feature_dropout = field<double>(*d, "scorer.dropout", "feature", o.feature_dropout);
            o.hidden_dropout = field<double>(*d, "scorer.dropout", "hidden", o.hidden_dropout);
        }
    }
    if (auto it = j.find("graph"); it != j.end()) {
        only_keys(*it, "graph", {"mode", "seed"});
        c.graph_mode = parse_graph_mode(field<std::string>(*it, "graph", "mode", to_string(c.graph_mode)));
        c.graph_seed = field<std::uint64_t>(*it, "graph", "seed", c.graph_seed);
    }
}

}  // namespace

ModelConfig model_config_from_json(const json& j) {
    only_keys(j, "model", {"encoder", "scorer", "graph"});
    ModelConfig c;
    read_model_sections(j, c);
    return c;
}

json to_json(const LossConfig& c) {
    json j{{"regime", to_string(c.regime)}};
    if (c.regime == LossRegime::with_sampling) j["k"] = c.k;
    return j;
}

LossConfig loss_config_from_json(const json& j) {
    only_keys(j, "loss", {"regime", "k"});
    LossConfig c;
    c.regime = parse_loss_regime(field<std::string>(j, "loss", "regime", to_string(c.regime)));
    if (auto it = j.find("k"); it != j.end()) {
        if (it->is_number_unsigned()) c.k = std::to_string(it->get<std::uint64_t>());
        else if (it->is_string()) c.k = it->get<std::string>();
        else throw ConfigError("loss.k: expected a positive integer or one of \"0.5N\", \"N\", \"N-1\"");
    }
    return c;
}

json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},     {"batch_size", c.batch_size}, {"lr", c.lr},
            {"beta1", c.beta1},       {"beta2", c.beta2},           {"adam_eps", c.adam_eps},
            {"weight_decay", c.weight_decay}, {"patience", c.patience}, {"eval_every", c.eval_every}};
}

TrainConfig train_config_from_json(const json& j) {
    only_keys(j, "train",
              {"epochs", "batch_size", "lr", "beta1", "beta2", "adam_eps", "weight_decay", "patience", "eval_every"});
    TrainConfig c;
    c.epochs = field<std::size_t>(j, "train", "epochs", c.epochs);
    c.batch_size = field<std::size_t>(j, "train", "batch_size", c.batch_size);
    c.lr = field<double>(j, "train", "lr", c.lr);
    c.beta1 = field<double>(j, "train", "beta1", c.beta1);
    c.beta2 = field<double>(j, "train", "beta2", c.beta2);
    c.adam_eps = field<double>(j, "train", "adam_eps", c.adam_eps);
    c.weight_decay = field<double>(j, "train", "weight_decay", c.weight_decay);
    c.patience = field<std::size_t>(j, "train", "patience", c.patience);
    c.eval_every = field<std::size_t>(j, "train", "eval_every", c.eval_every);
    return c;
}

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir) {
    only_keys(j, "config", {"dataset", "graph", "encoder", "scorer", "loss", "train", "seeds", "out"});
    RunConfig c;
    if (!j.contains("dataset")) throw ConfigError("dataset: missing dataset path");
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    };
    c.dataset = resolve(field<std::string>(j, "config", "dataset", ""));
    read_model_sections(j, c.model);
    if (auto it = j.find("loss"); it != j.end()) c.loss = loss_config_from_json(*it);
    if (auto it = j.find("train"); it != j.end()) c.train = train_config_from_json(*it);
    c.seeds = field<std::vector<std::uint64_t>>(j, "config", "seeds", c.seeds);
    if (c.seeds.empty()) throw ConfigError("seeds: need at least one seed");
    if (j.contains("out")) c.out = resolve(field<std::string>(j, "config", "out", ""));
    c.model.validate();
    c.train.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": invalid JSON: " + e.what());
    }
    return run_config_from_json(j, path.parent_path());
}

json to_json(const RunConfig& c) {
    json j = to_json(c.model);
    j["dataset"] = c.dataset.string();
    j["loss"] = to_json(c.loss);
    j["train"] = to_json(c.train);
    j["seeds"] = c.seeds;
    j["out"] = c.out.string();
    return j;
}

std::string config_hash(const ModelConfig& model, const LossConfig& loss, const TrainConfig& train,
                        const std::string& dataset_name) {
    json j = to_json(model);
    j["loss"] = to_json(loss);
    j["train"] = to_json(train);
    j["dataset"] = dataset_name;
    return sha1_hex(j.dump());
}

std::string config_hash(const RunConfig& c) {
    const auto norm = c.dataset.lexically_normal();
    std::string name = norm.filename().string();
    if (name.empty()) name = norm.parent_path().filename().string();
    return config_hash(c.model, c.loss, c.train, name);
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoull(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("seeds: '" + item + "' is not a non-negative integer");
        }
    }
    if (out.empty()) throw ConfigError("seeds: need at least one seed");
    return out;
}

}  // namespace kgc
