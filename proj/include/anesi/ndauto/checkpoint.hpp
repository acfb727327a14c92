#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "anesi/ndauto/params.hpp"
#include "anesi/ndauto/tensor.hpp"

namespace anesi::nd {

inline constexpr char kCheckpointMagic[] = "ANESI1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Binary layout, all integers little-endian:
//   "ANESI1" | u32 version | { u32 name_len | name | u32 rank | u32 dims[rank] | f64 data[] }*
// Tensors run until end of file.
void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::filesystem::path& path);

// In-memory encoders used by the file functions.
std::string encode_checkpoint(const NamedTensors& tensors);
NamedTensors decode_checkpoint(const std::string& bytes);

NamedTensors to_named(const ParamStore& params);

}  // namespace anesi::nd
