#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace hamlet {

/// HMLT container: magic "HMLT", u32 version=1, u32 tensor_count; per tensor
/// u16 name length, UTF-8 name, u8 dtype (0 = float32), u8 ndim, ndim x u64
/// dims, little-endian row-major float32 payload.
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors);

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path);

/// Raw per-tensor payload bytes keyed by name (for bit-exact comparisons).
std::map<std::string, std::string> checkpoint_payloads(const std::string& path);

/// True iff every "backbone.*" tensor is byte-identical between the two
/// containers. A backbone tensor present on one side only is a structural
/// error.
bool verify_frozen(const std::string& before_path, const std::string& after_path);

}  // namespace hamlet
