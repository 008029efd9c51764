#pragma once

#include <string>

#include "prunekit/graph.hpp"

namespace prunekit {

// Checkpoint format (little-endian throughout):
//   magic "PKPT" | u32 version | u32 desc_len | architecture descriptor
//   (UTF-8) | u32 tensor_count | per tensor: u32 name_len, name, u32 ndim,
//   u32 dims[ndim], f32 data.
// load(save(g)) reproduces architecture and parameter buffers bit-exactly.
void save_checkpoint(const NetworkGraph& graph, const std::string& path);
NetworkGraph load_checkpoint(const std::string& path);

}  // namespace prunekit
