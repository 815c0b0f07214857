#pragma once

#include "sodetr/nn.hpp"

#include <string>
#include <vector>

namespace sodetr {

inline constexpr char kCheckpointMagic[] = "SODETR1";

/// Binary layout, little-endian throughout:
///   "SODETR1" (7 bytes), then per tensor until end of file:
///   u32 name length, UTF-8 name, u32 rank, u64 dims[rank], f64 data[prod(dims)].
void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

}  // namespace sodetr
