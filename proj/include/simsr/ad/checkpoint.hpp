#pragma once

#include "simsr/ad/tape.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace simsr::ad {

// Binary layout (little-endian): magic "SSCK", version u32, tensor count u32,
// then per tensor: name length u32, UTF-8 name, rank u32, dims u32[rank],
// f32 data.
inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void write_checkpoint(const ParamSet& params, const std::filesystem::path& path);
NamedTensors read_checkpoint(const std::filesystem::path& path);

/// Overwrites values of existing parameters by name; shapes must agree and
/// every parameter must be present in the file.
void load_checkpoint(ParamSet& params, const std::filesystem::path& path);

/// Rounds all values through f32 so the checkpoint round trip is exact.
void round_to_f32(ParamSet& params);

}  // namespace simsr::ad
