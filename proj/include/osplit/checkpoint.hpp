#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "osplit/nn.hpp"
#include "osplit/tensor.hpp"

namespace osplit {

// Parameter checkpoint file: magic "SPLNN1" followed by one record per named
// tensor (u32 name length, name bytes, u32 rank, u32 extents, binary32
// little-endian payload).  Records are read until end of file.
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors);
std::map<std::string, Tensor> load_checkpoint(const std::string& path);

// Stable names for every parameter and running-stat tensor of a network,
// prefixed (e.g. "head.0.w").  Used both to save and to restore in place.
std::vector<std::pair<std::string, Tensor*>> named_tensors(Network& net,
                                                           const std::string& prefix);

void save_network(const std::string& path, Network& net, const std::string& prefix);
// Restores parameters into an already-constructed network of matching
// architecture; throws FormatError on missing names or shape mismatches.
void load_network(const std::string& path, Network& net, const std::string& prefix);

}  // namespace osplit
