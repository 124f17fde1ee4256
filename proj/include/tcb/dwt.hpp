#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tcb {

enum class WaveletKernel : std::uint8_t { int5_3 = 0, float9_7 = 1 };

std::string to_string(WaveletKernel k);
WaveletKernel parse_wavelet_kernel(const std::string& s);

struct DwtConfig {
  int levels = 3;
  WaveletKernel kernel = WaveletKernel::float9_7;
};

template <class T>
struct Plane {
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Plane() = default;
  Plane(int h, int w, T fill = T{}) : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}
  T& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
  const T& at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
};

enum class Orientation : std::uint8_t { LL, HL, LH, HH };

/// Rectangle of one subband inside the in-place (Mallat) coefficient layout.
struct Subband {
  int level = 0;  // 1 = finest
  Orientation orientation = Orientation::LL;
  int row0 = 0, col0 = 0, rows = 0, cols = 0;
};

/// Coarsest LL first, then HL/LH/HH from the coarsest level to the finest.
std::vector<Subband> subband_layout(int height, int width, int levels);

int max_dwt_levels(int height, int width);
/// Throws ConfigError("too many levels") if the plane cannot take `levels`.
void check_levels(int height, int width, int levels);

// One-level 1-D transforms. Output/input layout: ceil(n/2) lowpass samples
// followed by floor(n/2) highpass samples. Whole-sample symmetric extension.
void dwt53_forward_1d(std::span<std::int32_t> x);
void dwt53_inverse_1d(std::span<std::int32_t> x);
void dwt97_forward_1d(std::span<double> x);
void dwt97_inverse_1d(std::span<double> x);

// Multi-level 1-D transforms (recursing on the lowpass prefix).
void dwt53_forward_1d(std::span<std::int32_t> x, int levels);
void dwt53_inverse_1d(std::span<std::int32_t> x, int levels);

// Multi-level separable 2-D transforms in the Mallat layout.
Plane<std::int32_t> dwt53_forward(Plane<std::int32_t> plane, int levels);
Plane<std::int32_t> dwt53_inverse(Plane<std::int32_t> pyramid, int levels);
Plane<double> dwt97_forward(Plane<double> plane, int levels);
Plane<double> dwt97_inverse(Plane<double> pyramid, int levels);

/// Squared L2 norm of a synthesis basis function of each subband (same order
/// as subband_layout). Weighting subband energies by these approximately
/// recovers the image-domain energy.
std::vector<double> synthesis_weights(int height, int width, int levels, WaveletKernel kernel);

}  // namespace tcb
