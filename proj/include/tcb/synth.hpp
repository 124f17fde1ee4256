#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tcb/raster.hpp"

namespace tcb {

enum class SynthTask { fire_like, cloud_like, building_like };

std::string to_string(SynthTask t);
SynthTask parse_synth_task(const std::string& s);

struct SynthSpec {
  SynthTask task = SynthTask::fire_like;
  int count = 1;
  int height = 32;
  int width = 32;
  int channels = 1;
  std::uint64_t seed = 0;
  double positive_fraction_target = 0.05;
  // Overrides used to force degenerate datasets.
  std::optional<double> blob_amplitude;  // fire_like: peak blob contribution
  std::optional<int> rect_count;         // building_like: rectangles per image

  void validate() const;
};

/// Full-size task presets: 32x32x1 fire patches, 256x256x1 cloud scenes,
/// 128x128x10 building scenes.
SynthSpec full_preset(SynthTask task, int count, std::uint64_t seed);
/// Desk-scale presets: 32x32x1 fire, 64x64x1 cloud, 64x64x8 building.
SynthSpec desk_preset(SynthTask task, int count, std::uint64_t seed);

std::vector<Sample> gen_fire_like(const SynthSpec& spec);
std::vector<Sample> gen_cloud_like(const SynthSpec& spec);
std::vector<Sample> gen_building_like(const SynthSpec& spec);
std::vector<Sample> generate(const SynthSpec& spec);

/// Single image of a dataset; generate(spec)[i] == generate_one(spec, i).
Sample generate_one(const SynthSpec& spec, int index);

/// Isotropic Gaussian blur with mirrored borders, applied in place to an H x W plane.
void gaussian_blur(std::vector<double>& plane, int height, int width, double sigma);

}  // namespace tcb
