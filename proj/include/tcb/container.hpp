#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tcb/range_coder.hpp"

namespace tcb {

enum class CodecId : std::uint8_t { classic = 0, learned = 1 };

/// TCB1 container:
///   "TCB1" | u8 codec | u32 H | u32 W | u32 C | u32 param length |
///   param block | range-coded payload (rest of the file).
/// The last four bytes of the param block hold the CRC-32 of the payload, so
/// a damaged payload is reported instead of decoded into garbage.
struct Container {
  CodecId codec = CodecId::classic;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 0;
  std::vector<std::uint8_t> params;  // codec-specific, without the CRC
  Bitstream payload;
};

std::vector<std::uint8_t> serialize_container(const Container& c);
Container parse_container(std::span<const std::uint8_t> bytes);

/// Payload size in bits; the unit every reported bpp is computed from.
std::uint64_t payload_bits(std::span<const std::uint8_t> container_bytes);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

}  // namespace tcb
