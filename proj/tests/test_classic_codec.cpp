#include <doctest.h>

#include <cmath>

#include "tcb/classic_codec.hpp"
#include "tcb/container.hpp"
#include "tcb/error.hpp"
#include "tcb/rng.hpp"
#include "tcb/synth.hpp"

using namespace tcb;

TEST_CASE("deadzone quantizer") {
  CHECK(quantize_deadzone(0.4, 1.0) == 0);
  CHECK(dequantize(0, 1.0) == 0.0);
  CHECK(quantize_deadzone(1.6, 1.0) == 1);
  CHECK(dequantize(1, 1.0) == 1.5);
  CHECK(quantize_deadzone(-2.3, 1.0) == -2);
  CHECK(dequantize(-2, 1.0) == -2.5);
  CHECK_THROWS_AS(quantize_deadzone(1.0, 0.0), ConfigError);
}

TEST_CASE("lossless round trip on 8-bit grid data") {
  Rng rng(1);
  for (int ch : {1, 3}) {
    Raster r(24, 40, ch);
    for (float& v : r.data) v = static_cast<float>(rng.integer(0, 255)) / 255.0f;
    const auto bytes = encode_classic(r, {3, WaveletKernel::int5_3}, {0.0});
    const Raster back = decode_classic(bytes);
    CHECK(back.data == r.data);
  }
}

TEST_CASE("rate-distortion trend across a step sweep") {
  auto spec = desk_preset(SynthTask::building_like, 1, 5);
  spec.channels = 3;
  const Raster img = generate(spec)[0].image;
  for (auto kernel : {WaveletKernel::float9_7, WaveletKernel::int5_3}) {
    double prev_psnr = -1.0;
    std::uint64_t prev_bits = 0;
    for (int k = 1; k <= 8; ++k) {
      const double step = std::ldexp(1.0, -k);
      const auto bytes = encode_classic(img, {4, kernel}, {step});
      const double p = psnr(img, decode_classic(bytes));
      const std::uint64_t bits = payload_bits(bytes);
      MESSAGE(to_string(kernel) << " step 2^-" << k << ": " << bits_per_pixel(bits, 64, 64) << " bpp, " << p << " dB");
      CHECK(p > prev_psnr);
      CHECK(bits >= prev_bits);
      prev_psnr = p;
      prev_bits = bits;
    }
  }
}

TEST_CASE("decoding is deterministic and rejects damage") {
  auto spec = desk_preset(SynthTask::cloud_like, 1, 2);
  const Raster img = generate(spec)[0].image;
  const auto bytes = encode_classic(img, {3, WaveletKernel::float9_7}, {1.0 / 128});
  CHECK(decode_classic(bytes).data == decode_classic(bytes).data);

  auto damaged = bytes;
  damaged[damaged.size() - 3] ^= 0x40;
  CHECK_THROWS_AS(decode_classic(damaged), FormatError);

  auto cut = bytes;
  cut.resize(cut.size() - 5);
  CHECK_THROWS_AS(decode_classic(cut), FormatError);

  auto magic = bytes;
  magic[1] = 'X';
  CHECK_THROWS_AS(decode_classic(magic), FormatError);
}

TEST_CASE("configuration errors") {
  Raster r(16, 16, 1, 0.5f);
  CHECK_THROWS_AS(encode_classic(r, {5, WaveletKernel::float9_7}, {0.1}), ConfigError);
  CHECK_THROWS_AS(encode_classic(r, {2, WaveletKernel::float9_7}, {0.0}), ConfigError);
  CHECK(default_levels(64, 64) == 4);
  CHECK(default_levels(32, 32) == 3);
}
