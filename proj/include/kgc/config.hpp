#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "kgc/model.hpp"
#include "kgc/training.hpp"

namespace kgc {

/// Everything a `train` or `ablate` run needs. Loaded from JSON:
///
///   {
///     "dataset": "data/toy",              // directory with train/valid/test.txt
///     "graph":   {"mode": "original", "seed": 0},
///     "encoder": {"kind": "compgcn", "dims": [200, 200, 200], "activation": "tanh",
///                 "leaky_slope": 0.2, "relation_transform": true},
///     "scorer":  {"kind": "conve", "diagonal": "auto", "rows": 10, "cols": 20,
///                 "filters": 32, "kernel": [3, 3], "tail_bias": true,
///                 "dropout": {"input": 0.0, "feature": 0.0, "hidden": 0.0}},
///     "loss":    {"regime": "with_sampling", "k": 10},
///     "train":   {"epochs": 500, "batch_size": 256, "lr": 0.001, "beta1": 0.9,
///                 "beta2": 0.999, "adam_eps": 1e-8, "weight_decay": 0.0,
///                 "patience": 20, "eval_every": 5},
///     "seeds":   [0, 1, 2],
///     "out":     "runs/compgcn-conve"
///   }
///
/// Every section and field is optional except "dataset". Unknown fields are
/// rejected. Relative paths resolve against the config file's directory.
struct RunConfig {
    std::filesystem::path dataset;
    ModelConfig model;
    LossConfig loss;
    TrainConfig train;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::filesystem::path out = "runs/latest";
};

RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LossConfig& cfg);
LossConfig loss_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// SHA-1 over the model, loss and train sections plus the dataset name.
std::string config_hash(const RunConfig& cfg);
std::string config_hash(const ModelConfig& model, const LossConfig& loss, const TrainConfig& train,
                        const std::string& dataset_name);

/// "--seeds 0,1,2" style lists.
std::vector<std::uint64_t> parse_seed_list(const std::string& s);

}  // namespace kgc
