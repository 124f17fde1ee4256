#include <doctest.h>

#include <bit>
#include <cmath>
#include <tuple>
#include <vector>

#include "tcb/dwt.hpp"
#include "tcb/error.hpp"
#include "tcb/rng.hpp"
#include "support/oracles.hpp"

using namespace tcb;
using namespace tcb::oracle;

TEST_CASE("5/3 hand-computed examples") {
  std::vector<std::int32_t> c{1, 1, 1, 1};
  dwt53_forward_1d(c);
  CHECK(c == std::vector<std::int32_t>{1, 1, 0, 0});

  std::vector<std::int32_t> ramp{0, 1, 2, 3};
  dwt53_forward_1d(ramp);
  CHECK(ramp == std::vector<std::int32_t>{0, 2, 0, 1});
}

TEST_CASE("5/3 lifting matches the direct oracle") {
  Rng rng(1);
  for (int n = 2; n <= 33; ++n)
    for (int t = 0; t < 50; ++t) {
      std::vector<int> x(n);
      for (int& v : x) v = rng.integer(-1000, 1000);
      std::vector<int> low, high;
      direct_53(x, low, high);
      std::vector<std::int32_t> y(x.begin(), x.end());
      dwt53_forward_1d(y);
      std::vector<int> expect = low;
      expect.insert(expect.end(), high.begin(), high.end());
      CHECK(std::vector<int>(y.begin(), y.end()) == expect);
    }
}

TEST_CASE("5/3 multi-level 1-D perfect reconstruction") {
  Rng rng(2);
  for (int n = 1; n <= 64; ++n) {
    const int max_levels = std::bit_width(static_cast<unsigned>(n)) - 1;
    for (int levels = 0; levels <= max_levels; ++levels) {
      std::vector<std::int32_t> x(n);
      for (auto& v : x) v = rng.integer(-70000, 70000);
      auto y = x;
      dwt53_forward_1d(y, levels);
      dwt53_inverse_1d(y, levels);
      CHECK(y == x);
    }
  }
}

TEST_CASE("2-D transforms invert") {
  Rng rng(3);
  for (auto [h, w] : {std::pair{64, 64}, {17, 9}, {8, 33}, {2, 2}}) {
    const int levels = max_dwt_levels(h, w);
    Plane<std::int32_t> p(h, w);
    for (auto& v : p.data) v = rng.integer(-40000, 40000);
    CHECK(dwt53_inverse(dwt53_forward(p, levels), levels).data == p.data);

    Plane<double> f(h, w);
    for (auto& v : f.data) v = rng.normal();
    const auto back = dwt97_inverse(dwt97_forward(f, levels), levels);
    double err = 0.0;
    for (std::size_t i = 0; i < f.data.size(); ++i) err = std::max(err, std::abs(back.data[i] - f.data[i]));
    CHECK(err < 1e-9);
  }
}

TEST_CASE("level limits") {
  Plane<std::int32_t> p(16, 8);
  CHECK_NOTHROW(dwt53_forward(p, 3));
  CHECK_THROWS_WITH_AS(dwt53_forward(p, 4), "too many levels", ConfigError);
  std::vector<std::int32_t> x(4);
  CHECK_THROWS_AS(dwt53_forward_1d(x, 3), ConfigError);
}

TEST_CASE("subband layout tiles the plane") {
  for (auto [h, w, l] : {std::tuple{64, 64, 4}, {33, 17, 3}, {8, 8, 3}}) {
    std::vector<int> cover(static_cast<std::size_t>(h) * w, 0);
    const auto bands = subband_layout(h, w, l);
    CHECK(bands.size() == static_cast<std::size_t>(3 * l + 1));
    CHECK(bands.front().orientation == Orientation::LL);
    for (const auto& b : bands)
      for (int r = b.row0; r < b.row0 + b.rows; ++r)
        for (int c = b.col0; c < b.col0 + b.cols; ++c) ++cover[r * w + c];
    for (int v : cover) CHECK(v == 1);
  }
}

TEST_CASE("9/7 energy is preserved by synthesis-weighted subband energies") {
  // The 9/7 basis is biorthogonal, so the identity is exact in expectation for
  // independent coefficient perturbations, which is how the codec uses it.
  const int levels = 3;
  Rng rng(4);
  for (auto [h, w] : {std::pair{512, 512}, {384, 448}}) {
    const auto weights = synthesis_weights(h, w, levels, WaveletKernel::float9_7);
    const auto bands = subband_layout(h, w, levels);
    for (int t = 0; t < 3; ++t) {
      Plane<double> coeffs(h, w);
      double weighted = 0.0;
      for (std::size_t b = 0; b < bands.size(); ++b)
        for (int r = bands[b].row0; r < bands[b].row0 + bands[b].rows; ++r)
          for (int c = bands[b].col0; c < bands[b].col0 + bands[b].cols; ++c) {
            const double v = rng.normal();
            coeffs.at(r, c) = v;
            weighted += weights[b] * v * v;
          }
      const auto x = dwt97_inverse(coeffs, levels);
      double energy = 0.0;
      for (double v : x.data) energy += v * v;
      MESSAGE("energy ratio " << energy / weighted);
      CHECK(std::abs(energy / weighted - 1.0) < 0.01);
    }
  }
}
