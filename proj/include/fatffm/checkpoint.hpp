#pragma once

#include <filesystem>
#include <string>

#include "fatffm/model.hpp"

namespace fatffm {

// Checkpoint layout (all integers little-endian):
//   magic "FATFFMCK", u32 format version
//   u32 spec length, ModelSpec as JSON text
//   u32 block count, then per block:
//     u32 name length, name bytes, u32 rank, u64 dims[rank],
//     f32 values (row-major), u32 FNV-1a checksum of the value bytes

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const Model<float>& model);
Model<float> deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path,
                     const Model<float>& model);
Model<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace fatffm
