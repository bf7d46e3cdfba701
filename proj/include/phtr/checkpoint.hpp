#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "phtr/tensor.hpp"

namespace phtr {

enum class CheckpointDtype : uint8_t { kF32 = 0, kF64 = 1 };

// Versioned binary container for named tensors. Layout (all little-endian):
//   magic "PHTR" | u32 version (1) | u64 entry count | entries...
// Each entry:
//   u32 name length | UTF-8 name | u8 dtype (0=f32, 1=f64) | u32 rank |
//   rank x u64 dims | numel x IEEE-754 values
// Entries are sorted by name, so identical tensors produce identical bytes.
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors,
                     CheckpointDtype dtype = CheckpointDtype::kF64);

// f32 payloads widen to the float64 tensors used everywhere in memory.
std::map<std::string, Tensor> load_checkpoint(const std::string& path);

}  // namespace phtr
