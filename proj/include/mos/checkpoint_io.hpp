#pragma once

// Checkpoint file format ("MOSC", version 1), all integers little-endian:
//
//   char[4]  magic "MOSC"
//   u32      format version
//   u32      tensor count
//   per tensor:
//     u32    name length in bytes, followed by the UTF-8 name
//     u32    rank, followed by rank x u32 dimensions
//   f32[]    flat parameter array (sum of tensor sizes)

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mos/params.hpp"

namespace mos {

inline constexpr char kCheckpointMagic[4] = {'M', 'O', 'S', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ParamVector& params);
ParamVector decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::filesystem::path& path, const ParamVector& params);
ParamVector read_checkpoint(const std::filesystem::path& path);

}  // namespace mos
