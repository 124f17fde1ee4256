#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tcb/dwt.hpp"
#include "tcb/raster.hpp"

namespace tcb {

/// Deadzone scalar quantizer step, in normalized sample units. Subband steps
/// are derived from it by dividing by the square root of the subband's
/// synthesis weight. step == 0 selects lossless coding (int5_3 only).
struct QuantConfig {
  double step = 1.0 / 64;
};

/// q = sign(c) * floor(|c| / step)
int quantize_deadzone(double coeff, double step);
/// 0 if q == 0, else sign(q) * (|q| + 0.5) * step
double dequantize(int q, double step);

/// Integer grid used by the reversible path: samples are round(x * 65535).
inline constexpr std::uint32_t kClassicSampleScale = 65535;

/// Decomposition depth used when none is requested: two levels short of the
/// maximum, within [1, 5].
int default_levels(int height, int width);

/// Wavelet baseline: per-channel DWT, deadzone quantization, per-subband
/// adaptive zero-order range coding. Returns a TCB1 container.
std::vector<std::uint8_t> encode_classic(const Raster& raster, const DwtConfig& dwt, const QuantConfig& quant);
Raster decode_classic(std::span<const std::uint8_t> container);

}  // namespace tcb
