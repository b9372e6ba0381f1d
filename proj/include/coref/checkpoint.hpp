#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "coref/neural.hpp"

namespace coref {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout, little-endian:
//   "CRCK" | u32 version | u8 kind | u32 input_dim
//   u32 n_hidden | n_hidden x u32
//   u32 n_ant | n_ant x u32 | u32 n_ana | n_ana x u32
//   for each layer in declaration order: weights (out x in, row-major f32), bias (out f32)
std::string serialize_checkpoint(const ModelParams<float>& params);
ModelParams<float> deserialize_checkpoint(const std::string& bytes, const std::string& source = "<memory>");

void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path);
ModelParams<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace coref
