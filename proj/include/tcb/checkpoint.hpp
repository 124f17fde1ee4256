#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcb/autograd.hpp"

namespace tcb {

/// TCKPT1 file: magic "TCKPT1" | u32 JSON length | JSON block | u32 tensor
/// count | per tensor: u32 name length, name, u8 dtype (1 = f64), u8
/// trainable, u32 x 4 dims, little-endian values.
struct Checkpoint {
  nlohmann::json meta;
  ParamStore params;
};

std::vector<std::uint8_t> serialize_checkpoint(const nlohmann::json& meta, const ParamStore& params);
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::string& path, const nlohmann::json& meta, const ParamStore& params);
Checkpoint load_checkpoint(const std::string& path);

/// Overwrite the values of `dst` with same-named tensors of `src`. Every
/// parameter of dst must be present in src with the same shape.
void copy_params(const ParamStore& src, ParamStore& dst, const std::string& prefix = "");

}  // namespace tcb
