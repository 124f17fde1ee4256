#include "tcb/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tcb/bytes.hpp"
#include "tcb/error.hpp"

namespace tcb {

Raster::Raster(int h, int w, int c, float fill) : height(h), width(w), channels(c) {
  if (h <= 0 || w <= 0 || c <= 0) throw ConfigError("raster dimensions must be positive");
  data.assign(static_cast<std::size_t>(h) * w * c, fill);
}

std::vector<float> Raster::plane(int ch) const {
  std::vector<float> out(pixels());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = data[i * channels + ch];
  return out;
}

void Raster::set_plane(int ch, std::span<const float> values) {
  for (std::size_t i = 0; i < pixels(); ++i) data[i * channels + ch] = values[i];
}

Mask::Mask(int h, int w, std::uint8_t fill) : height(h), width(w) {
  if (h <= 0 || w <= 0) throw ConfigError("mask dimensions must be positive");
  labels.assign(static_cast<std::size_t>(h) * w, fill);
}

double Mask::positive_fraction() const {
  if (labels.empty()) return 0.0;
  return static_cast<double>(std::count(labels.begin(), labels.end(), std::uint8_t{1})) /
         static_cast<double>(labels.size());
}

std::pair<std::vector<Raster>, double> normalize_global_max(std::vector<Raster> dataset) {
  if (dataset.empty()) throw ConfigError("empty dataset");
  float peak = 0.0f;
  for (const auto& r : dataset)
    for (float v : r.data) peak = std::max(peak, v);
  if (peak == 0.0f || peak == 1.0f) return {std::move(dataset), 1.0};
  for (auto& r : dataset)
    for (float& v : r.data) v /= peak;
  return {std::move(dataset), static_cast<double>(peak)};
}

std::vector<Sample> crop_patches(const Raster& raster, const Mask& mask, int size,
                                 std::span<const std::pair<int, int>> centers) {
  if (raster.height != mask.height || raster.width != mask.width)
    throw ConfigError("mask and raster dimensions differ");
  if (size <= 0) throw ConfigError("patch size must be positive");
  if (size > std::min(raster.height, raster.width)) throw ConfigError("patch larger than scene");

  std::vector<Sample> out;
  out.reserve(centers.size());
  for (auto [cr, cc] : centers) {
    if (cr < 0 || cc < 0 || cr >= raster.height || cc >= raster.width)
      throw ConfigError("patch center outside image");
    const int top = std::clamp(cr - size / 2, 0, raster.height - size);
    const int left = std::clamp(cc - size / 2, 0, raster.width - size);
    Sample s{Raster(size, size, raster.channels), Mask(size, size)};
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        for (int ch = 0; ch < raster.channels; ++ch) s.image.at(r, c, ch) = raster.at(top + r, left + c, ch);
        s.mask.at(r, c) = mask.at(top + r, left + c);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

double mse(const Raster& reference, const Raster& reconstruction) {
  if (!reference.same_dims(reconstruction)) throw ConfigError("raster dimensions differ");
  if (reference.data.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < reference.data.size(); ++i) {
    const double d = static_cast<double>(reference.data[i]) - static_cast<double>(reconstruction.data[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(reference.data.size());
}

double psnr_from_mse(double m, double peak) {
  if (m == 0.0) return kPsnrExact;
  return 10.0 * std::log10(peak * peak / m);
}

double psnr(const Raster& reference, const Raster& reconstruction, double peak) {
  if (!(peak > 0.0)) throw ConfigError("peak must be positive");
  return psnr_from_mse(mse(reference, reconstruction), peak);
}

double bits_per_pixel(std::uint64_t bitstream_bits, int height, int width) {
  if (height <= 0 || width <= 0) throw ConfigError("image dimensions must be positive");
  return static_cast<double>(bitstream_bits) / (static_cast<double>(height) * width);
}

namespace {

double f1(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  const std::uint64_t denom = 2 * tp + fp + fn;
  if (denom == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

}  // namespace

F1Scores ConfusionCounts::scores() const {
  F1Scores s;
  s.pos = f1(tp, fp, fn);
  s.neg = f1(tn, fn, fp);
  s.macro = 0.5 * (s.pos + s.neg);
  return s;
}

ConfusionCounts confusion(const Mask& predicted, const Mask& truth) {
  if (predicted.height != truth.height || predicted.width != truth.width)
    throw ConfigError("mask dimensions differ");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.labels.size(); ++i) {
    const bool p = predicted.labels[i] != 0;
    const bool t = truth.labels[i] != 0;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

F1Scores f1_scores(const Mask& predicted, const Mask& truth) { return confusion(predicted, truth).scores(); }

namespace {

constexpr char kRasMagic[4] = {'R', 'A', 'S', '1'};
constexpr std::uint32_t kTagFloat32 = 0;
constexpr std::uint32_t kTagU8 = 1;
// Upper bound on samples accepted from a header; guards against overflow and
// absurd allocations from corrupted files.
constexpr std::uint64_t kMaxSamples = std::uint64_t{1} << 32;

void write_header(ByteWriter& w, std::uint32_t h, std::uint32_t wd, std::uint32_t c, std::uint32_t tag) {
  w.str({kRasMagic, 4});
  w.u32(h);
  w.u32(wd);
  w.u32(c);
  w.u32(tag);
}

struct RasHeader {
  std::uint32_t height, width, channels, tag;
  std::uint64_t samples;
};

RasHeader read_header(ByteReader& r) {
  if (r.remaining() < 4 || r.str(4) != std::string_view(kRasMagic, 4)) throw FormatError("not a RAS1 file");
  RasHeader h{};
  h.height = r.u32();
  h.width = r.u32();
  h.channels = r.u32();
  h.tag = r.u32();
  if (h.height == 0 || h.width == 0 || h.channels == 0) throw FormatError("zero dimension in RAS1 header");
  if (h.height > 0x7fffffffu || h.width > 0x7fffffffu || h.channels > 0x7fffffffu)
    throw FormatError("dim overflow");
  h.samples = std::uint64_t{h.height} * h.width;
  if (h.samples > kMaxSamples || h.samples * h.channels > kMaxSamples) throw FormatError("dim overflow");
  h.samples *= h.channels;
  return h;
}

}  // namespace

std::vector<std::uint8_t> encode_ras1(const Raster& raster) {
  ByteWriter w;
  write_header(w, raster.height, raster.width, raster.channels, kTagFloat32);
  w.buffer().reserve(20 + raster.data.size() * 4);
  for (float v : raster.data) w.f32(v);
  return w.take();
}

std::vector<std::uint8_t> encode_ras1(const Mask& mask) {
  ByteWriter w;
  write_header(w, mask.height, mask.width, 1, kTagU8);
  w.bytes(mask.labels);
  return w.take();
}

Raster decode_ras1_raster(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const RasHeader h = read_header(r);
  if (h.tag != kTagFloat32) throw FormatError("RAS1 dtype is not float32");
  if (r.remaining() < h.samples * 4) throw FormatError("truncated");
  if (r.remaining() != h.samples * 4) throw FormatError("trailing bytes after RAS1 payload");
  Raster out(static_cast<int>(h.height), static_cast<int>(h.width), static_cast<int>(h.channels));
  for (float& v : out.data) v = r.f32();
  return out;
}

Mask decode_ras1_mask(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const RasHeader h = read_header(r);
  if (h.tag != kTagU8) throw FormatError("RAS1 dtype is not u8 mask");
  if (h.channels != 1) throw FormatError("mask must have one channel");
  if (r.remaining() < h.samples) throw FormatError("truncated");
  if (r.remaining() != h.samples) throw FormatError("trailing bytes after RAS1 payload");
  Mask out(static_cast<int>(h.height), static_cast<int>(h.width));
  auto payload = r.bytes(h.samples);
  for (std::size_t i = 0; i < payload.size(); ++i) {
    if (payload[i] > 1) throw FormatError("mask label not in {0,1}");
    out.labels[i] = payload[i];
  }
  return out;
}

void write_raster(const std::string& path, const Raster& raster) { write_file(path, encode_ras1(raster)); }
Raster read_raster(const std::string& path) { return decode_ras1_raster(read_file(path)); }
void write_mask(const std::string& path, const Mask& mask) { write_file(path, encode_ras1(mask)); }
Mask read_mask(const std::string& path) { return decode_ras1_mask(read_file(path)); }

std::uint64_t dataset_checksum(std::span<const Sample> samples) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& s : samples) {
    const auto img = encode_ras1(s.image);
    const auto msk = encode_ras1(s.mask);
    h = fnv1a64(img, h);
    h = fnv1a64(msk, h);
  }
  return h;
}

}  // namespace tcb
