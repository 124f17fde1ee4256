#include "tcb/checkpoint.hpp"

#include "tcb/bytes.hpp"
#include "tcb/error.hpp"

namespace tcb {

namespace {
constexpr std::string_view kMagic = "TCKPT1";
constexpr std::uint8_t kDtypeF64 = 1;
}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const nlohmann::json& meta, const ParamStore& params) {
  ByteWriter w;
  w.str(kMagic);
  const std::string text = meta.dump();
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.str(text);
  std::uint32_t count = 0;
  for (auto it = params.begin(); it != params.end(); ++it) ++count;
  w.u32(count);
  for (const auto& [name, p] : params) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.str(name);
    w.u8(kDtypeF64);
    w.u8(p.trainable ? 1 : 0);
    for (int d : p.value.dims()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : p.value.values()) w.f64(v);
  }
  return w.take();
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < kMagic.size() || std::string_view(reinterpret_cast<const char*>(bytes.data()), kMagic.size()) != kMagic)
    throw FormatError("not a TCKPT1 file");
  r.skip(kMagic.size());
  Checkpoint ck;
  const std::uint32_t len = r.u32();
  const std::string text = r.str(len);
  try {
    ck.meta = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    throw FormatError("checkpoint metadata is not valid JSON");
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str(r.u32());
    if (r.u8() != kDtypeF64) throw FormatError("unsupported tensor dtype");
    const bool trainable = r.u8() != 0;
    std::array<int, 4> dims{};
    std::uint64_t total = 1;
    for (int& d : dims) {
      const std::uint32_t v = r.u32();
      if (v > (1u << 24)) throw FormatError("dim overflow");
      d = static_cast<int>(v);
      total *= v;
    }
    if (total * 8 > r.remaining()) throw FormatError("truncated");
    Tensor t(dims[0], dims[1], dims[2], dims[3]);
    for (double& v : t.values()) v = r.f64();
    ck.params.add(name, std::move(t), "checkpoint").trainable = trainable;
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint");
  return ck;
}

void save_checkpoint(const std::string& path, const nlohmann::json& meta, const ParamStore& params) {
  write_file(path, serialize_checkpoint(meta, params));
}

Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

void copy_params(const ParamStore& src, ParamStore& dst, const std::string& prefix) {
  for (auto& [name, p] : dst) {
    if (name.compare(0, prefix.size(), prefix) != 0) continue;
    if (!src.contains(name)) throw FormatError("checkpoint lacks parameter " + name);
    const Param& s = src.at(name);
    if (!s.value.same_shape(p.value))
      throw FormatError("parameter " + name + " has shape " + s.value.shape_string() + ", expected " + p.value.shape_string());
    p.value = s.value;
  }
}

}  // namespace tcb
