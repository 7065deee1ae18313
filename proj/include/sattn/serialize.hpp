#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sattn/tensor.hpp"

namespace sattn {

/// Flat versioned tensor blob, little-endian:
///   magic "SATB" | u32 version (1) | u32 tensor count
/// then per tensor:
///   u16 name length | name bytes | u8 precision (0=double, 1=single)
///   | u8 ndim | u64 extents[ndim] | f64 payload, row-major
/// Payload values are written as IEEE-754 doubles regardless of the
/// precision tag; single-precision tensors are already float-rounded.
void write_tensor_blob(const std::string& path,
                       const std::vector<std::pair<std::string, Tensor>>& tensors);

std::vector<std::pair<std::string, Tensor>> read_tensor_blob(const std::string& path);

}  // namespace sattn
