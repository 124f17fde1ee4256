#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace tcb {

/// H x W x C image, row-major with the channel index fastest:
/// sample (row, col, ch) lives at ((row * width) + col) * channels + ch.
struct Raster {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  Raster() = default;
  Raster(int h, int w, int c, float fill = 0.0f);

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const { return pixels() * channels; }
  float& at(int r, int c, int ch) { return data[(static_cast<std::size_t>(r) * width + c) * channels + ch]; }
  float at(int r, int c, int ch) const { return data[(static_cast<std::size_t>(r) * width + c) * channels + ch]; }

  /// Extract one channel as a contiguous H x W plane.
  std::vector<float> plane(int ch) const;
  void set_plane(int ch, std::span<const float> values);

  bool same_dims(const Raster& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

/// Binary H x W label map.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;

  Mask() = default;
  Mask(int h, int w, std::uint8_t fill = 0);

  std::size_t size() const { return static_cast<std::size_t>(height) * width; }
  std::uint8_t& at(int r, int c) { return labels[static_cast<std::size_t>(r) * width + c]; }
  std::uint8_t at(int r, int c) const { return labels[static_cast<std::size_t>(r) * width + c]; }
  double positive_fraction() const;
};

struct Sample {
  Raster image;
  Mask mask;
};

/// One codec operating point.
struct RdPoint {
  double bpp = 0.0;
  double psnr_db = 0.0;  // +inf when the reconstruction is exact
  double f1_pos = 0.0;
  double f1_macro = 0.0;
};

inline constexpr double kPsnrExact = std::numeric_limits<double>::infinity();

/// Divide every sample of the dataset by the dataset-wide maximum. Returns the
/// scale used, 1.0 when the maximum is zero (dataset left untouched).
std::pair<std::vector<Raster>, double> normalize_global_max(std::vector<Raster> dataset);

/// Cut size x size windows around the given (row, col) centers. Windows that
/// would cross the border are shifted back inside rather than padded.
std::vector<Sample> crop_patches(const Raster& raster, const Mask& mask, int size,
                                 std::span<const std::pair<int, int>> centers);

double mse(const Raster& reference, const Raster& reconstruction);
double psnr(const Raster& reference, const Raster& reconstruction, double peak = 1.0);
double psnr_from_mse(double mse, double peak = 1.0);

/// Bits per spatial pixel. Channels are not part of the denominator.
double bits_per_pixel(std::uint64_t bitstream_bits, int height, int width);

struct F1Scores {
  double pos = 0.0;
  double neg = 0.0;
  double macro = 0.0;
};

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  /// A class absent from both prediction and truth scores 1.
  F1Scores scores() const;
};

ConfusionCounts confusion(const Mask& predicted, const Mask& truth);
F1Scores f1_scores(const Mask& predicted, const Mask& truth);

// RAS1 container. Rasters use dtype tag 0 (float32), masks dtype tag 1 (u8).
std::vector<std::uint8_t> encode_ras1(const Raster& raster);
std::vector<std::uint8_t> encode_ras1(const Mask& mask);
Raster decode_ras1_raster(std::span<const std::uint8_t> bytes);
Mask decode_ras1_mask(std::span<const std::uint8_t> bytes);

void write_raster(const std::string& path, const Raster& raster);
Raster read_raster(const std::string& path);
void write_mask(const std::string& path, const Mask& mask);
Mask read_mask(const std::string& path);

/// Checksum over dims and sample bytes of every image and mask.
std::uint64_t dataset_checksum(std::span<const Sample> samples);

}  // namespace tcb
