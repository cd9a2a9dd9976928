#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "shopagent/model.hpp"

namespace shopagent::model {

inline constexpr char kCheckpointMagic[8] = {'S', 'H', 'O', 'P', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (little-endian):
//   magic[8] | u32 version | u64 architecture hash | u32 N | u32 d |
//   u32 value hidden | u64 parameter count | f32 x count (declaration order)
void write_checkpoint(std::ostream& out, const ModelParameters<float>& params);
ModelParameters<float> read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ModelParameters<float>& params);
ModelParameters<float> load_checkpoint(const std::filesystem::path& path);

/// Checkpoint bytes in memory, used by the inter-process snapshot refresh.
std::string checkpoint_bytes(const ModelParameters<float>& params);
ModelParameters<float> checkpoint_from_bytes(const std::string& bytes);

}  // namespace shopagent::model
