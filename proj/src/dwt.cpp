#include "tcb/dwt.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

#include "tcb/error.hpp"

namespace tcb {

std::string to_string(WaveletKernel k) { return k == WaveletKernel::int5_3 ? "int5_3" : "float9_7"; }

WaveletKernel parse_wavelet_kernel(const std::string& s) {
  if (s == "int5_3" || s == "5/3" || s == "53") return WaveletKernel::int5_3;
  if (s == "float9_7" || s == "9/7" || s == "97") return WaveletKernel::float9_7;
  throw ConfigError("unknown wavelet kernel '" + s + "'");
}

int max_dwt_levels(int height, int width) {
  const int m = std::min(height, width);
  if (m <= 0) return 0;
  return std::bit_width(static_cast<unsigned>(m)) - 1;
}

void check_levels(int height, int width, int levels) {
  if (levels < 0) throw ConfigError("negative level count");
  if (levels > max_dwt_levels(height, width)) throw ConfigError("too many levels");
}

std::vector<Subband> subband_layout(int height, int width, int levels) {
  std::vector<Subband> per_level;  // finest first
  int h = height, w = width;
  for (int l = 1; l <= levels; ++l) {
    const int lr = (h + 1) / 2, lc = (w + 1) / 2;
    per_level.push_back({l, Orientation::HL, 0, lc, lr, w - lc});
    per_level.push_back({l, Orientation::LH, lr, 0, h - lr, lc});
    per_level.push_back({l, Orientation::HH, lr, lc, h - lr, w - lc});
    h = lr;
    w = lc;
  }
  std::vector<Subband> out;
  out.push_back({levels, Orientation::LL, 0, 0, h, w});
  for (int l = levels; l >= 1; --l)
    for (const auto& b : per_level)
      if (b.level == l) out.push_back(b);
  return out;
}

namespace {

// Whole-sample symmetric reflection of an index into [0, n).
inline int mirror(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

template <class T>
void deinterleave(std::span<T> x, std::vector<T>& tmp) {
  const int n = static_cast<int>(x.size());
  const int nl = (n + 1) / 2;
  tmp.assign(x.begin(), x.end());
  for (int i = 0; i < nl; ++i) x[i] = tmp[2 * i];
  for (int i = 0; i < n / 2; ++i) x[nl + i] = tmp[2 * i + 1];
}

template <class T>
void interleave(std::span<T> x, std::vector<T>& tmp) {
  const int n = static_cast<int>(x.size());
  const int nl = (n + 1) / 2;
  tmp.assign(x.begin(), x.end());
  for (int i = 0; i < nl; ++i) x[2 * i] = tmp[i];
  for (int i = 0; i < n / 2; ++i) x[2 * i + 1] = tmp[nl + i];
}

// In-place lifting on interleaved samples.
void lift53_forward(std::span<std::int32_t> x) {
  const int n = static_cast<int>(x.size());
  for (int i = 1; i < n; i += 2) x[i] -= (x[mirror(i - 1, n)] + x[mirror(i + 1, n)]) >> 1;
  for (int i = 0; i < n; i += 2) x[i] += (x[mirror(i - 1, n)] + x[mirror(i + 1, n)] + 2) >> 2;
}

void lift53_inverse(std::span<std::int32_t> x) {
  const int n = static_cast<int>(x.size());
  for (int i = 0; i < n; i += 2) x[i] -= (x[mirror(i - 1, n)] + x[mirror(i + 1, n)] + 2) >> 2;
  for (int i = 1; i < n; i += 2) x[i] += (x[mirror(i - 1, n)] + x[mirror(i + 1, n)]) >> 1;
}

constexpr double kAlpha = -1.586134342059924;
constexpr double kBeta = -0.052980118572961;
constexpr double kGamma = 0.882911075530934;
constexpr double kDelta = 0.443506852043971;
constexpr double kK = 1.230174104914001;

void lift97_step(std::span<double> x, int parity, double coeff) {
  const int n = static_cast<int>(x.size());
  for (int i = parity; i < n; i += 2) x[i] += coeff * (x[mirror(i - 1, n)] + x[mirror(i + 1, n)]);
}

void lift97_forward(std::span<double> x) {
  lift97_step(x, 1, kAlpha);
  lift97_step(x, 0, kBeta);
  lift97_step(x, 1, kGamma);
  lift97_step(x, 0, kDelta);
  const int n = static_cast<int>(x.size());
  for (int i = 0; i < n; i += 2) x[i] /= kK;
  for (int i = 1; i < n; i += 2) x[i] *= kK / 2.0;
}

void lift97_inverse(std::span<double> x) {
  const int n = static_cast<int>(x.size());
  for (int i = 0; i < n; i += 2) x[i] *= kK;
  for (int i = 1; i < n; i += 2) x[i] /= kK / 2.0;
  lift97_step(x, 0, -kDelta);
  lift97_step(x, 1, -kGamma);
  lift97_step(x, 0, -kBeta);
  lift97_step(x, 1, -kAlpha);
}

template <class T, class Fwd>
void forward_1d(std::span<T> x, Fwd lift) {
  if (x.size() < 2) return;
  thread_local std::vector<T> tmp;
  lift(x);
  deinterleave(x, tmp);
}

template <class T, class Inv>
void inverse_1d(std::span<T> x, Inv lift) {
  if (x.size() < 2) return;
  thread_local std::vector<T> tmp;
  interleave(x, tmp);
  lift(x);
}

template <class T, class Fn>
void rows_then_cols(Plane<T>& p, int h, int w, Fn fn, bool rows_first) {
  std::vector<T> line;
  auto do_rows = [&] {
    line.resize(w);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) line[c] = p.at(r, c);
      fn(std::span<T>(line));
      for (int c = 0; c < w; ++c) p.at(r, c) = line[c];
    }
  };
  auto do_cols = [&] {
    line.resize(h);
    for (int c = 0; c < w; ++c) {
      for (int r = 0; r < h; ++r) line[r] = p.at(r, c);
      fn(std::span<T>(line));
      for (int r = 0; r < h; ++r) p.at(r, c) = line[r];
    }
  };
  if (rows_first) {
    do_rows();
    do_cols();
  } else {
    do_cols();
    do_rows();
  }
}

template <class T, class Lift>
Plane<T> forward_2d(Plane<T> p, int levels, Lift lift) {
  check_levels(p.height, p.width, levels);
  int h = p.height, w = p.width;
  for (int l = 0; l < levels; ++l) {
    rows_then_cols(p, h, w, [&](std::span<T> x) { forward_1d(x, lift); }, true);
    h = (h + 1) / 2;
    w = (w + 1) / 2;
  }
  return p;
}

template <class T, class Lift>
Plane<T> inverse_2d(Plane<T> p, int levels, Lift lift) {
  check_levels(p.height, p.width, levels);
  std::vector<std::pair<int, int>> dims;
  int h = p.height, w = p.width;
  for (int l = 0; l < levels; ++l) {
    dims.emplace_back(h, w);
    h = (h + 1) / 2;
    w = (w + 1) / 2;
  }
  for (int l = levels - 1; l >= 0; --l)
    rows_then_cols(p, dims[l].first, dims[l].second, [&](std::span<T> x) { inverse_1d(x, lift); }, false);
  return p;
}

}  // namespace

void dwt53_forward_1d(std::span<std::int32_t> x) { forward_1d(x, lift53_forward); }
void dwt53_inverse_1d(std::span<std::int32_t> x) { inverse_1d(x, lift53_inverse); }
void dwt97_forward_1d(std::span<double> x) { forward_1d(x, lift97_forward); }
void dwt97_inverse_1d(std::span<double> x) { inverse_1d(x, lift97_inverse); }

void dwt53_forward_1d(std::span<std::int32_t> x, int levels) {
  if (levels < 0 || (levels > 0 && (std::size_t{1} << levels) > x.size())) throw ConfigError("too many levels");
  std::size_t n = x.size();
  for (int l = 0; l < levels; ++l) {
    dwt53_forward_1d(x.first(n));
    n = (n + 1) / 2;
  }
}

void dwt53_inverse_1d(std::span<std::int32_t> x, int levels) {
  if (levels < 0 || (levels > 0 && (std::size_t{1} << levels) > x.size())) throw ConfigError("too many levels");
  std::array<std::size_t, 64> lens{};
  std::size_t n = x.size();
  for (int l = 0; l < levels; ++l) {
    lens[l] = n;
    n = (n + 1) / 2;
  }
  for (int l = levels - 1; l >= 0; --l) dwt53_inverse_1d(x.first(lens[l]));
}

Plane<std::int32_t> dwt53_forward(Plane<std::int32_t> plane, int levels) {
  return forward_2d(std::move(plane), levels, lift53_forward);
}
Plane<std::int32_t> dwt53_inverse(Plane<std::int32_t> pyramid, int levels) {
  return inverse_2d(std::move(pyramid), levels, lift53_inverse);
}
Plane<double> dwt97_forward(Plane<double> plane, int levels) {
  return forward_2d(std::move(plane), levels, lift97_forward);
}
Plane<double> dwt97_inverse(Plane<double> pyramid, int levels) {
  return inverse_2d(std::move(pyramid), levels, lift97_inverse);
}

std::vector<double> synthesis_weights(int height, int width, int levels, WaveletKernel kernel) {
  check_levels(height, width, levels);
  static std::mutex mu;
  static std::map<std::tuple<int, int, int, int>, std::vector<double>> cache;
  const auto key = std::make_tuple(height, width, levels, static_cast<int>(kernel));
  {
    std::lock_guard lock(mu);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }

  std::vector<double> weights;
  for (const auto& b : subband_layout(height, width, levels)) {
    if (b.rows == 0 || b.cols == 0) {
      weights.push_back(1.0);
      continue;
    }
    const int r = b.row0 + b.rows / 2, c = b.col0 + b.cols / 2;
    double energy = 0.0;
    if (kernel == WaveletKernel::float9_7) {
      Plane<double> p(height, width, 0.0);
      p.at(r, c) = 1.0;
      for (double v : dwt97_inverse(std::move(p), levels).data) energy += v * v;
    } else {
      // The integer transform is linear up to rounding; a large impulse makes
      // the rounding error negligible.
      constexpr double kAmp = 1 << 20;
      Plane<std::int32_t> p(height, width, 0);
      p.at(r, c) = static_cast<std::int32_t>(kAmp);
      for (std::int32_t v : dwt53_inverse(std::move(p), levels).data) energy += double(v) * double(v);
      energy /= kAmp * kAmp;
    }
    weights.push_back(energy);
  }
  std::lock_guard lock(mu);
  cache.emplace(key, weights);
  return weights;
}

}  // namespace tcb
