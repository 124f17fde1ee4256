#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "tcb/container.hpp"
#include "tcb/error.hpp"
#include "tcb/gradcheck.hpp"
#include "tcb/learned_codec.hpp"
#include "tcb/optim.hpp"
#include "tcb/synth.hpp"

using namespace tcb;

namespace {

Raster random_raster(int h, int w, int c, std::uint64_t seed) {
  Rng rng(seed);
  Raster r(h, w, c);
  for (float& v : r.data) v = static_cast<float>(rng.uniform());
  return r;
}

// Codec with non-trivial weights everywhere, so every path carries signal.
LearnedCodec perturbed(TransformSpec spec, std::uint64_t seed) {
  LearnedCodec codec(spec, seed);
  Rng rng(seed, 99);
  for (auto& [name, p] : codec.params())
    if (name.rfind("prior.", 0) != 0)
      for (double& v : p.value.values()) v += 0.05 * rng.normal();
  return codec;
}

}  // namespace

TEST_CASE("shape contract") {
  const LearnedCodec codec(TransformSpec::for_quality(8, Quality::low), 1);
  const Tensor x(1, 8, 64, 64, 0.3);
  const Tensor y = codec.analysis_forward(x);
  CHECK(y.dims() == std::array<int, 4>{1, 32, 8, 8});
  const Tensor out = codec.synthesis_forward(quantize_infer(y));
  CHECK(out.same_shape(x));
  // The last synthesis layer starts at zero, so the output is mid-range.
  for (double v : out.values()) CHECK(v == 0.5);

  const Raster odd = random_raster(37, 21, 8, 2);
  CHECK(codec.reconstruct(odd).same_dims(odd));
  CHECK_THROWS_AS(codec.analysis_forward(Tensor(1, 3, 64, 64)), ConfigError);
  CHECK(TransformSpec::for_quality(8, Quality::high).latent_channels == 64);
}

TEST_CASE("parameter count of the desk-scale spec") {
  const LearnedCodec low(TransformSpec::for_quality(8, Quality::low), 1);
  const LearnedCodec high(TransformSpec::for_quality(8, Quality::high), 1);
  auto expected = [](int c, int m) {
    const int n = 32, head = 32, k = 3;
    auto conv = [](int out, int in, int ks, int bias) { return out * in * ks * ks + bias; };
    const int transforms = conv(n, c, 5, n) + conv(n, n, 5, n) + conv(m, n, 5, m) + conv(m, n, 5, n) + conv(n, n, 5, n) + conv(n, c, 5, c);
    const int heads = conv(head, m / 2, 3, head) + conv(3 * k * m / 2, head, 3, 3 * k * m / 2);
    const int prior = (m / 2) * (3 + 3 + 3 + 9 + 3 + 3 + 3 + 1);
    return static_cast<std::size_t>(transforms + heads + prior);
  };
  CHECK(low.params().parameter_count() == expected(8, 32));
  CHECK(high.params().parameter_count() == expected(8, 64));
  CHECK(low.params().parameter_count() == 162072);
}

TEST_CASE("inference is deterministic and initialization is seeded") {
  const Raster img = random_raster(32, 32, 2, 3);
  const LearnedCodec a(TransformSpec::for_quality(2, Quality::low), 5);
  const LearnedCodec b(TransformSpec::for_quality(2, Quality::low), 5);
  const LearnedCodec c(TransformSpec::for_quality(2, Quality::low), 6);
  CHECK(a.model_id() == b.model_id());
  CHECK(a.model_id() != c.model_id());
  CHECK(a.encode(img) == b.encode(img));
}

TEST_CASE("bitstream round trip") {
  for (auto variant : {EntropyVariant::gmm, EntropyVariant::factorized}) {
    TransformSpec spec = TransformSpec::for_quality(3, Quality::low);
    spec.variant = variant;
    const LearnedCodec codec = perturbed(spec, 7);
    const Raster img = random_raster(40, 24, 3, 8);
    const auto bytes = codec.encode(img);
    const Raster dec = codec.decode(bytes);
    CHECK(dec.data == codec.reconstruct(img).data);

    auto damaged = bytes;
    damaged.back() ^= 0x10;
    CHECK_THROWS_AS(codec.decode(damaged), FormatError);
    const LearnedCodec other = perturbed(spec, 70);
    CHECK_THROWS_WITH_AS(other.decode(bytes), "bitstream was produced by a different model", FormatError);
  }
}

TEST_CASE("checkpoint reload reproduces the bitstream") {
  const LearnedCodec codec = perturbed(TransformSpec::for_quality(1, Quality::low), 11);
  const auto path = (std::filesystem::temp_directory_path() / "tcb_codec_test.tckpt").string();
  save_codec(path, codec, {{"note", "unit test"}});
  const LearnedCodec back = load_codec(path);
  std::filesystem::remove(path);
  const Raster img = random_raster(32, 32, 1, 12);
  CHECK(back.model_id() == codec.model_id());
  CHECK(back.encode(img) == codec.encode(img));
}

TEST_CASE("full rate-distortion path passes grad check") {
  TransformSpec spec;
  spec.in_channels = 2;
  spec.latent_channels = 4;
  spec.hidden_channels = 3;
  spec.head_channels = 3;
  spec.mixtures = 2;
  for (auto variant : {EntropyVariant::gmm, EntropyVariant::factorized}) {
    spec.variant = variant;
    LearnedCodec codec = perturbed(spec, 13);
    // Move the synthesis output away from the clamp edges.
    Rng rng(14);
    Tensor x(2, 2, 8, 8);
    for (double& v : x.values()) v = rng.uniform(0.2, 0.8);
    const double lambda = 10.0;
    auto loss = [&](Graph& g, ParamStore&) {
      Rng noise(15);
      const auto out = codec.forward_train(g, x, noise);
      const Var d = ops::mse_loss(out.x_hat, g.constant(x));
      return ops::lincomb({{lambda * 255.0 * 255.0 / 100.0, d}, {1.0 / (2 * 8 * 8), out.rate_bits}});
    };
    GradCheckOptions o;
    o.max_entries_per_param = 12;
    const auto r = grad_check(loss, codec.params(), o);
    MESSAGE(to_string(variant) << ": relative error " << r.max_rel_error << " over " << r.entries_checked);
    CHECK(r.max_rel_error < 1e-3);
  }
}

TEST_CASE("training lowers the loss") {
  auto spec = desk_preset(SynthTask::building_like, 8, 21);
  spec.channels = 3;
  const auto data = generate(spec);
  std::vector<const Raster*> imgs;
  for (const auto& s : data) imgs.push_back(&s.image);
  const Tensor x = rasters_to_tensor(imgs);
  TransformSpec ts = TransformSpec::for_quality(3, Quality::low);
  ts.hidden_channels = 16;
  LearnedCodec codec(ts, 22);
  Adam main(codec.main_param_names(), {1e-3});
  Adam aux(codec.aux_param_names(), {1e-4});
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 30; ++step) {
    Rng noise(23, step);
    codec.params().zero_grad();
    Graph g;
    const auto out = codec.forward_train(g, x, noise);
    const Var loss = ops::lincomb({{0.01 * 255 * 255, ops::mse_loss(out.x_hat, g.constant(x))},
                                   {1.0 / (8.0 * 64 * 64), out.rate_bits}});
    g.backward(loss);
    main.step(codec.params());
    aux.step(codec.params());
    (step == 0 ? first : last) = loss.item();
  }
  MESSAGE("loss " << first << " -> " << last);
  CHECK(last < 0.7 * first);
}
