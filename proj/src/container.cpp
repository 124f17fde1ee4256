#include "tcb/container.hpp"

#include <zlib.h>

#include "tcb/bytes.hpp"
#include "tcb/error.hpp"

namespace tcb {

namespace {
constexpr char kMagic[4] = {'T', 'C', 'B', '1'};
constexpr std::uint32_t kMaxParamBlock = 1u << 20;
}  // namespace

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = crc32(crc, bytes.data() + off, chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> serialize_container(const Container& c) {
  ByteWriter w;
  w.str({kMagic, 4});
  w.u8(static_cast<std::uint8_t>(c.codec));
  w.u32(c.height);
  w.u32(c.width);
  w.u32(c.channels);
  w.u32(static_cast<std::uint32_t>(c.params.size() + 4));
  w.bytes(c.params);
  w.u32(crc32_of(c.payload.bytes));
  w.bytes(c.payload.bytes);
  return w.take();
}

Container parse_container(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.remaining() < 4 || r.str(4) != std::string_view(kMagic, 4)) throw FormatError("not a TCB1 bitstream");
  Container c;
  const std::uint8_t codec = r.u8();
  if (codec > 1) throw FormatError("unknown codec id in TCB1 header");
  c.codec = static_cast<CodecId>(codec);
  c.height = r.u32();
  c.width = r.u32();
  c.channels = r.u32();
  if (c.height == 0 || c.width == 0 || c.channels == 0) throw FormatError("zero dimension in TCB1 header");
  if (c.height > (1u << 16) || c.width > (1u << 16) || c.channels > 4096) throw FormatError("dim overflow");
  const std::uint32_t plen = r.u32();
  if (plen < 4 || plen > kMaxParamBlock) throw FormatError("bad TCB1 parameter block length");
  auto block = r.bytes(plen);
  c.params.assign(block.begin(), block.end() - 4);
  ByteReader crc_reader(block.last(4));
  const std::uint32_t crc = crc_reader.u32();
  auto payload = r.bytes(r.remaining());
  c.payload.bytes.assign(payload.begin(), payload.end());
  if (crc32_of(c.payload.bytes) != crc) throw FormatError("corrupted stream (payload checksum mismatch)");
  return c;
}

std::uint64_t payload_bits(std::span<const std::uint8_t> container_bytes) {
  return parse_container(container_bytes).payload.bits();
}

}  // namespace tcb
