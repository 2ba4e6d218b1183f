#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "kgc/config.hpp"

namespace kgc {

struct Checkpoint {
    ModelConfig model;
    LossConfig loss;
    TrainConfig train;
    std::string dataset;
    std::string vocab_hash;
    double best_valid_mrr = -1.0;
    std::size_t epoch = 0;
    std::uint64_t seed = 0;
    ad::ParameterStore<float> params;
};

/// Layout: "KGCCKPT1", u64 header length, JSON header, u32 tensor count, then
/// per tensor: u32 name length, name, u32 rank, u64 extents, float32 values.
/// Integers and floats are little-endian.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace kgc
