#include "tcb/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tcb/error.hpp"
#include "tcb/rng.hpp"

namespace tcb {

std::string to_string(SynthTask t) {
  switch (t) {
    case SynthTask::fire_like: return "fire_like";
    case SynthTask::cloud_like: return "cloud_like";
    case SynthTask::building_like: return "building_like";
  }
  return "?";
}

SynthTask parse_synth_task(const std::string& s) {
  if (s == "fire_like" || s == "fire") return SynthTask::fire_like;
  if (s == "cloud_like" || s == "cloud") return SynthTask::cloud_like;
  if (s == "building_like" || s == "building") return SynthTask::building_like;
  throw ConfigError("unknown synthetic task '" + s + "'");
}

void SynthSpec::validate() const {
  if (count <= 0) throw ConfigError("synth count must be positive");
  if (height < 8 || width < 8) throw ConfigError("synthetic images must be at least 8x8");
  if (positive_fraction_target < 0.0 || positive_fraction_target > 1.0)
    throw ConfigError("positive_fraction_target must lie in [0,1]");
  if (task == SynthTask::building_like) {
    if (channels < 3) throw ConfigError("building_like needs at least 3 channels");
  } else if (channels != 1) {
    throw ConfigError(to_string(task) + " is single-channel");
  }
}

SynthSpec full_preset(SynthTask task, int count, std::uint64_t seed) {
  SynthSpec s;
  s.task = task;
  s.count = count;
  s.seed = seed;
  switch (task) {
    case SynthTask::fire_like:
      s.height = s.width = 32;
      s.positive_fraction_target = 0.05;
      break;
    case SynthTask::cloud_like:
      s.height = s.width = 256;
      s.positive_fraction_target = 0.4;
      break;
    case SynthTask::building_like:
      s.height = s.width = 128;
      s.channels = 10;
      s.positive_fraction_target = 0.2;
      break;
  }
  return s;
}

SynthSpec desk_preset(SynthTask task, int count, std::uint64_t seed) {
  SynthSpec s = full_preset(task, count, seed);
  if (task == SynthTask::cloud_like) s.height = s.width = 64;
  if (task == SynthTask::building_like) {
    s.height = s.width = 64;
    s.channels = 8;
  }
  return s;
}

void gaussian_blur(std::vector<double>& plane, int height, int width, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    norm += kernel[i + radius];
  }
  for (double& k : kernel) k /= norm;

  auto mirror = [](int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
  };

  std::vector<double> tmp(plane.size());
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * plane[r * width + mirror(c + k, width)];
      tmp[r * width + c] = acc;
    }
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * tmp[mirror(r + k, height) * width + c];
      plane[r * width + c] = acc;
    }
}

namespace {

std::vector<double> smooth_field(Rng& rng, int h, int w, double sigma) {
  std::vector<double> f(static_cast<std::size_t>(h) * w);
  for (double& v : f) v = rng.normal();
  gaussian_blur(f, h, w, sigma);
  double mean = 0.0, var = 0.0;
  for (double v : f) mean += v;
  mean /= static_cast<double>(f.size());
  for (double v : f) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(f.size()));
  for (double& v : f) v = sd > 0.0 ? (v - mean) / sd : 0.0;
  return f;
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

constexpr double kBlobThreshold = 0.2;
constexpr double kBlobAmpLo = 0.5;
constexpr double kBlobAmpHi = 0.8;

Sample fire_one(const SynthSpec& spec, int index) {
  Rng rng(spec.seed, static_cast<std::uint64_t>(index));
  const int h = spec.height, w = spec.width;
  auto bg = smooth_field(rng, h, w, 3.0);

  // Blob width chosen so that about positive_fraction_target of the pixels
  // exceed the threshold, given two blobs on average.
  const double mean_log = (kBlobAmpHi * std::log(kBlobAmpHi / kBlobThreshold) - kBlobAmpHi -
                           kBlobAmpLo * std::log(kBlobAmpLo / kBlobThreshold) + kBlobAmpLo) /
                          (kBlobAmpHi - kBlobAmpLo);
  const double sigma0 =
      std::sqrt(std::max(spec.positive_fraction_target, 1e-4) * h * w / (2.0 * 2.0 * std::numbers::pi * mean_log));

  std::vector<double> blobs(static_cast<std::size_t>(h) * w, 0.0);
  const int n_blobs = rng.integer(1, 3);
  for (int b = 0; b < n_blobs; ++b) {
    double amp = rng.uniform(kBlobAmpLo, kBlobAmpHi);
    if (spec.blob_amplitude) amp *= *spec.blob_amplitude / kBlobAmpHi;
    const double sigma = sigma0 * rng.uniform(0.8, 1.2);
    const double cr = rng.uniform(2.0, h - 3.0);
    const double cc = rng.uniform(2.0, w - 3.0);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const double d2 = (r - cr) * (r - cr) + (c - cc) * (c - cc);
        blobs[r * w + c] += amp * std::exp(-0.5 * d2 / (sigma * sigma));
      }
  }

  Sample s{Raster(h, w, 1), Mask(h, w)};
  for (int i = 0; i < h * w; ++i) {
    const double v = 0.15 + 0.04 * bg[i] + blobs[i] + 0.005 * rng.normal();
    s.image.data[i] = clamp01(v);
    s.mask.labels[i] = blobs[i] > kBlobThreshold ? 1 : 0;
  }
  return s;
}

Sample cloud_one(const SynthSpec& spec, int index) {
  Rng rng(spec.seed, static_cast<std::uint64_t>(index));
  const int h = spec.height, w = spec.width;
  const double sigma = std::max(2.0, std::min(h, w) / 12.0);
  auto coarse = smooth_field(rng, h, w, sigma);
  auto fine = smooth_field(rng, h, w, sigma / 3.0);

  std::vector<double> field(coarse.size());
  for (std::size_t i = 0; i < field.size(); ++i) field[i] = coarse[i] + 0.3 * fine[i];
  const auto [lo, hi] = std::minmax_element(field.begin(), field.end());
  const double range = *hi - *lo > 0.0 ? *hi - *lo : 1.0;
  const double base = *lo;

  Sample s{Raster(h, w, 1), Mask(h, w)};
  for (std::size_t i = 0; i < field.size(); ++i)
    s.image.data[i] = clamp01(0.1 + 0.8 * (field[i] - base) / range + 0.01 * rng.normal());

  // Threshold at the per-image quantile so the positive fraction is exact.
  const std::size_t n = field.size();
  const auto k = static_cast<std::size_t>(std::llround(spec.positive_fraction_target * static_cast<double>(n)));
  if (k > 0) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return s.image.data[a] != s.image.data[b] ? s.image.data[a] > s.image.data[b] : a < b;
                     });
    for (std::size_t i = 0; i < k; ++i) s.mask.labels[order[i]] = 1;
  }
  return s;
}

Sample building_one(const SynthSpec& spec, int index) {
  Rng rng(spec.seed, static_cast<std::uint64_t>(index));
  const int h = spec.height, w = spec.width, ch = spec.channels;
  auto texture = smooth_field(rng, h, w, 1.5);
  auto gradient = smooth_field(rng, h, w, std::max(h, w) / 4.0);

  std::vector<double> structure(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < structure.size(); ++i) structure[i] = 0.28 + 0.03 * texture[i] + 0.05 * gradient[i];

  std::vector<double> gains(ch);
  for (double& g : gains) g = rng.uniform(0.7, 1.1);

  // Per-pixel index of the covering rectangle (-1 for background) so each
  // rectangle can carry its own spectral signature.
  std::vector<int> owner(structure.size(), -1);
  const int n_rects = spec.rect_count ? *spec.rect_count : rng.integer(2, 6);
  std::vector<std::vector<double>> signature(n_rects, std::vector<double>(ch));
  const double target_area = std::max(spec.positive_fraction_target, 0.01) * h * w / std::max(n_rects, 1);
  for (int k = 0; k < n_rects; ++k) {
    const double area = target_area * rng.uniform(0.6, 1.4);
    const double aspect = rng.uniform(0.5, 2.0);
    const int rw = std::clamp(static_cast<int>(std::lround(std::sqrt(area * aspect))), 3, w - 2);
    const int rh = std::clamp(static_cast<int>(std::lround(area / rw)), 3, h - 2);
    const int top = rng.integer(1, h - rh - 1);
    const int left = rng.integer(1, w - rw - 1);
    const double reflectance = rng.uniform(0.55, 0.85);
    for (double& v : signature[k]) v = 0.04 * rng.normal();
    for (int r = top; r < top + rh; ++r)
      for (int c = left; c < left + rw; ++c) {
        structure[r * w + c] = reflectance + 0.01 * texture[r * w + c];
        owner[r * w + c] = k;
      }
  }

  Sample s{Raster(h, w, ch), Mask(h, w)};
  for (int i = 0; i < h * w; ++i) {
    s.mask.labels[i] = owner[i] >= 0 ? 1 : 0;
    for (int k = 0; k < ch; ++k) {
      double v = gains[k] * structure[i] + 0.01 * rng.normal();
      if (owner[i] >= 0) v += signature[owner[i]][k];
      s.image.data[static_cast<std::size_t>(i) * ch + k] = clamp01(v);
    }
  }
  return s;
}

}  // namespace

Sample generate_one(const SynthSpec& spec, int index) {
  switch (spec.task) {
    case SynthTask::fire_like: return fire_one(spec, index);
    case SynthTask::cloud_like: return cloud_one(spec, index);
    case SynthTask::building_like: return building_one(spec, index);
  }
  throw ConfigError("unknown task");
}

namespace {

std::vector<Sample> generate_checked(const SynthSpec& spec, SynthTask expected) {
  if (spec.task != expected) throw ConfigError("spec task does not match generator");
  return generate(spec);
}

}  // namespace

std::vector<Sample> generate(const SynthSpec& spec) {
  spec.validate();
  std::vector<Sample> out;
  out.reserve(spec.count);
  for (int i = 0; i < spec.count; ++i) out.push_back(generate_one(spec, i));
  return out;
}

std::vector<Sample> gen_fire_like(const SynthSpec& spec) { return generate_checked(spec, SynthTask::fire_like); }
std::vector<Sample> gen_cloud_like(const SynthSpec& spec) { return generate_checked(spec, SynthTask::cloud_like); }
std::vector<Sample> gen_building_like(const SynthSpec& spec) {
  return generate_checked(spec, SynthTask::building_like);
}

}  // namespace tcb
