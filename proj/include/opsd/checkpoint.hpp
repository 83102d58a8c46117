#pragma once

#include <cstdint>
#include <string>

#include "opsd/model.hpp"

namespace opsd::lm {

struct Checkpoint {
    ModelConfig config;
    std::uint64_t step = 0;
    ParameterSet<float> arrays;  // model parameters plus any "opt.*" state
};

// Binary format: magic, version, ModelConfig, step count, then named
// little-endian float32 arrays. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// FNV-1a over the raw bytes of all arrays in name order.
std::uint64_t params_hash(const ParameterSet<float>& params);

}  // namespace opsd::lm
