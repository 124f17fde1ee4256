#include "tcb/classic_codec.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "tcb/bytes.hpp"
#include "tcb/container.hpp"
#include "tcb/error.hpp"
#include "tcb/range_coder.hpp"

namespace tcb {

int quantize_deadzone(double coeff, double step) {
  if (!(step > 0.0)) throw ConfigError("quantizer step must be positive");
  const double q = std::floor(std::abs(coeff) / step);
  if (q > 1e9) throw ConfigError("quantized value overflows");
  const int m = static_cast<int>(q);
  return coeff < 0.0 ? -m : m;
}

double dequantize(int q, double step) {
  if (q == 0) return 0.0;
  const double mag = (std::abs(static_cast<double>(q)) + 0.5) * step;
  return q < 0 ? -mag : mag;
}

int default_levels(int height, int width) { return std::clamp(max_dwt_levels(height, width) - 2, 1, 5); }

namespace {

/// Zero-order model over [-kMaxMag, kMaxMag] plus an escape symbol. Each
/// coded symbol adds kIncrement to its count and counts are halved once their
/// sum passes kLimit. The table is rebuilt on a doubling schedule (then every
/// kMaxInterval symbols), identically on both sides.
class AdaptiveModel {
 public:
  static constexpr int kMaxMag = 15;
  static constexpr int kEscape = 2 * kMaxMag + 1;
  static constexpr int kSymbols = kEscape + 1;
  static constexpr double kIncrement = 32.0;
  static constexpr double kLimit = 65536.0;
  static constexpr std::uint64_t kMaxInterval = 32;

  AdaptiveModel() {
    counts_.fill(1.0);
    counts_[kMaxMag] = 4.0;
    total_ = kSymbols + 3.0;
    rebuild();
  }

  void encode(RangeEncoder& enc, int v) {
    if (std::abs(v) <= kMaxMag) {
      enc.encode(table_, v + kMaxMag);
      update(v + kMaxMag);
      return;
    }
    enc.encode(table_, kEscape);
    update(kEscape);
    enc.encode_bits(v < 0 ? 1 : 0, 1);
    enc.encode_exp_golomb(static_cast<std::uint32_t>(std::abs(v) - kMaxMag - 1));
  }

  int decode(RangeDecoder& dec) {
    const int s = dec.decode(table_);
    update(s);
    if (s != kEscape) return s - kMaxMag;
    const bool neg = dec.decode_bits(1) != 0;
    const std::uint32_t extra = dec.decode_exp_golomb();
    if (extra > (1u << 30)) throw FormatError("corrupted coefficient escape");
    const int mag = static_cast<int>(extra) + kMaxMag + 1;
    return neg ? -mag : mag;
  }

 private:
  void update(int s) {
    counts_[s] += kIncrement;
    total_ += kIncrement;
    if (total_ > kLimit) {
      total_ = 0.0;
      for (double& c : counts_) {
        c = std::ceil(c / 2.0);
        total_ += c;
      }
    }
    if (++coded_ == next_rebuild_) {
      rebuild();
      next_rebuild_ += std::min(next_rebuild_, kMaxInterval);
    }
  }
  void rebuild() { table_ = build_cdf(counts_); }

  std::array<double, kSymbols> counts_{};
  double total_ = 0.0;
  CdfTable table_;
  std::uint64_t coded_ = 0;
  std::uint64_t next_rebuild_ = 1;
};

struct ClassicParams {
  WaveletKernel kernel;
  int levels;
  double step;
};

std::vector<std::uint8_t> write_params(const ClassicParams& p) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(p.kernel));
  w.u8(static_cast<std::uint8_t>(p.levels));
  w.f64(p.step);
  w.u32(kClassicSampleScale);
  return w.take();
}

ClassicParams read_params(std::span<const std::uint8_t> block) {
  ByteReader r(block);
  ClassicParams p{};
  const std::uint8_t kernel = r.u8();
  if (kernel > 1) throw FormatError("unknown wavelet kernel in bitstream");
  p.kernel = static_cast<WaveletKernel>(kernel);
  p.levels = r.u8();
  p.step = r.f64();
  if (r.u32() != kClassicSampleScale) throw FormatError("unsupported sample scale");
  if (r.remaining() != 0) throw FormatError("bad classic parameter block");
  if (!(p.step >= 0.0) || !std::isfinite(p.step)) throw FormatError("bad quantizer step in bitstream");
  if (p.kernel == WaveletKernel::float9_7 && p.step == 0.0) throw FormatError("bad quantizer step in bitstream");
  return p;
}

/// Subband step in the units of the transform's coefficients; <= 0 means the
/// band is coded exactly.
std::vector<double> band_steps(const ClassicParams& p, int h, int w) {
  const auto weights = synthesis_weights(h, w, p.levels, p.kernel);
  std::vector<double> steps(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    double s = p.step / std::sqrt(weights[i]);
    if (p.kernel == WaveletKernel::int5_3) {
      s *= kClassicSampleScale;
      if (s <= 1.0) s = 0.0;
    }
    steps[i] = s;
  }
  return steps;
}

template <class Fn>
void for_each_in_band(const Subband& b, Fn fn) {
  for (int r = b.row0; r < b.row0 + b.rows; ++r)
    for (int c = b.col0; c < b.col0 + b.cols; ++c) fn(r, c);
}

// LL coefficients are coded as differences from the left (or upper) neighbour.
int ll_prediction(const Plane<int>& q, const Subband& b, int r, int c) {
  if (c > b.col0) return q.at(r, c - 1);
  if (r > b.row0) return q.at(r - 1, c);
  return 0;
}

void encode_plane(RangeEncoder& enc, const Plane<int>& q, const std::vector<Subband>& bands) {
  for (const auto& b : bands) {
    AdaptiveModel model;
    const bool ll = b.orientation == Orientation::LL;
    for_each_in_band(b, [&](int r, int c) {
      const int v = q.at(r, c);
      model.encode(enc, ll ? v - ll_prediction(q, b, r, c) : v);
    });
  }
}

Plane<int> decode_plane(RangeDecoder& dec, int h, int w, const std::vector<Subband>& bands) {
  Plane<int> q(h, w, 0);
  for (const auto& b : bands) {
    AdaptiveModel model;
    const bool ll = b.orientation == Orientation::LL;
    for_each_in_band(b, [&](int r, int c) {
      const int v = model.decode(dec);
      q.at(r, c) = ll ? v + ll_prediction(q, b, r, c) : v;
    });
  }
  return q;
}

std::vector<int> band_lookup(const std::vector<Subband>& bands, int h, int w) {
  std::vector<int> lookup(static_cast<std::size_t>(h) * w, 0);
  for (std::size_t i = 0; i < bands.size(); ++i)
    for_each_in_band(bands[i], [&](int r, int c) { lookup[static_cast<std::size_t>(r) * w + c] = static_cast<int>(i); });
  return lookup;
}

constexpr std::int32_t kIntOffset = 32768;

}  // namespace

std::vector<std::uint8_t> encode_classic(const Raster& raster, const DwtConfig& dwt, const QuantConfig& quant) {
  const int h = raster.height, w = raster.width;
  check_levels(h, w, dwt.levels);
  if (!(quant.step >= 0.0) || !std::isfinite(quant.step)) throw ConfigError("quantizer step must be >= 0");
  if (quant.step == 0.0 && dwt.kernel != WaveletKernel::int5_3)
    throw ConfigError("lossless coding (step 0) requires the int5_3 kernel");

  const ClassicParams params{dwt.kernel, dwt.levels, quant.step};
  const auto bands = subband_layout(h, w, dwt.levels);
  const auto steps = band_steps(params, h, w);
  const auto lookup = band_lookup(bands, h, w);

  RangeEncoder enc;
  for (int ch = 0; ch < raster.channels; ++ch) {
    const auto samples = raster.plane(ch);
    Plane<int> q(h, w, 0);
    if (dwt.kernel == WaveletKernel::int5_3) {
      Plane<std::int32_t> p(h, w);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const double x = std::clamp(static_cast<double>(samples[i]), 0.0, 1.0);
        p.data[i] = static_cast<std::int32_t>(std::lround(x * kClassicSampleScale)) - kIntOffset;
      }
      p = dwt53_forward(std::move(p), dwt.levels);
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
          const double s = steps[lookup[static_cast<std::size_t>(r) * w + c]];
          q.at(r, c) = s > 0.0 ? quantize_deadzone(p.at(r, c), s) : p.at(r, c);
        }
    } else {
      Plane<double> p(h, w);
      for (std::size_t i = 0; i < samples.size(); ++i)
        p.data[i] = std::clamp(static_cast<double>(samples[i]), 0.0, 1.0) - 0.5;
      p = dwt97_forward(std::move(p), dwt.levels);
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) q.at(r, c) = quantize_deadzone(p.at(r, c), steps[lookup[static_cast<std::size_t>(r) * w + c]]);
    }
    encode_plane(enc, q, bands);
  }

  Container c;
  c.codec = CodecId::classic;
  c.height = static_cast<std::uint32_t>(h);
  c.width = static_cast<std::uint32_t>(w);
  c.channels = static_cast<std::uint32_t>(raster.channels);
  c.params = write_params(params);
  c.payload = enc.finish();
  return serialize_container(c);
}

Raster decode_classic(std::span<const std::uint8_t> bytes) {
  const Container c = parse_container(bytes);
  if (c.codec != CodecId::classic) throw FormatError("bitstream was not produced by the classic codec");
  const ClassicParams params = read_params(c.params);
  const int h = static_cast<int>(c.height), w = static_cast<int>(c.width);
  if (params.levels > max_dwt_levels(h, w)) throw FormatError("bad level count in bitstream");

  const auto bands = subband_layout(h, w, params.levels);
  const auto steps = band_steps(params, h, w);
  const auto lookup = band_lookup(bands, h, w);

  Raster out(h, w, static_cast<int>(c.channels));
  RangeDecoder dec(c.payload.bytes);
  std::vector<float> samples(static_cast<std::size_t>(h) * w);
  for (int ch = 0; ch < out.channels; ++ch) {
    const Plane<int> q = decode_plane(dec, h, w, bands);
    if (params.kernel == WaveletKernel::int5_3) {
      Plane<std::int32_t> p(h, w);
      for (int r = 0; r < h; ++r)
        for (int cc = 0; cc < w; ++cc) {
          const double s = steps[lookup[static_cast<std::size_t>(r) * w + cc]];
          const int v = q.at(r, cc);
          p.at(r, cc) = s > 0.0 ? static_cast<std::int32_t>(std::lround(dequantize(v, s))) : v;
        }
      p = dwt53_inverse(std::move(p), params.levels);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::int32_t v = std::clamp<std::int32_t>(p.data[i] + kIntOffset, 0, kClassicSampleScale);
        samples[i] = static_cast<float>(v) / static_cast<float>(kClassicSampleScale);
      }
    } else {
      Plane<double> p(h, w);
      for (int r = 0; r < h; ++r)
        for (int cc = 0; cc < w; ++cc) p.at(r, cc) = dequantize(q.at(r, cc), steps[lookup[static_cast<std::size_t>(r) * w + cc]]);
      p = dwt97_inverse(std::move(p), params.levels);
      for (std::size_t i = 0; i < samples.size(); ++i)
        samples[i] = static_cast<float>(std::clamp(p.data[i] + 0.5, 0.0, 1.0));
    }
    out.set_plane(ch, samples);
  }
  if (!dec.exhausted()) throw FormatError("trailing bytes after classic payload");
  return out;
}

}  // namespace tcb
