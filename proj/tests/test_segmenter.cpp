#include <doctest.h>

#include <filesystem>
#include <set>

#include "tcb/error.hpp"
#include "tcb/gradcheck.hpp"
#include "tcb/rng.hpp"
#include "tcb/segmenter.hpp"
#include "tcb/synth.hpp"

using namespace tcb;

TEST_CASE("output shape matches the input") {
  const UNet net({1, 3, 8}, 1);
  const Tensor l = net.logits(Tensor(2, 1, 64, 64, 0.3));
  CHECK(l.dims() == std::array<int, 4>{2, 1, 64, 64});
  CHECK_THROWS_AS(net.logits(Tensor(1, 1, 30, 30)), ConfigError);
  CHECK_THROWS_AS(net.logits(Tensor(1, 2, 32, 32)), ConfigError);
}

TEST_CASE("constant input through a constant network gives a constant map") {
  UNet net({2, 3, 4}, 1);
  for (auto& [name, p] : net.params()) p.value.fill(name.find(".b") != std::string::npos ? 0.01 : 0.05);
  const Tensor l = net.logits(Tensor(1, 2, 16, 16, 0.7));
  for (double v : l.values()) CHECK(v == doctest::Approx(l[0]).epsilon(1e-12));
}

TEST_CASE("gradient check through the full network") {
  UNet net({2, 3, 3}, 2);
  Rng rng(3);
  Tensor x(1, 2, 8, 8);
  for (double& v : x.values()) v = rng.uniform();
  Tensor mask(1, 1, 8, 8);
  for (double& v : mask.values()) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
  GradCheckOptions o;
  o.max_entries_per_param = 10;
  const auto r = grad_check(
      [&](Graph& g, ParamStore&) { return ops::bce_with_logits(net.forward(g, g.constant(x), true), mask); }, net.params(), o);
  MESSAGE("relative error " << r.max_rel_error << " over " << r.entries_checked);
  CHECK(r.max_rel_error < 1e-3);
}

TEST_CASE("dihedral augmentation") {
  Sample s{Raster(4, 4, 2), Mask(4, 4)};
  for (std::size_t i = 0; i < s.image.data.size(); ++i) s.image.data[i] = static_cast<float>(i);
  s.mask.at(0, 1) = 1;
  std::set<std::vector<float>> seen;
  for (int op = 0; op < 8; ++op) {
    const Sample a = augment_sample(s, op);
    seen.insert(a.image.data);
    // The mask travels with its pixel.
    int r = -1, c = -1;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        if (a.mask.at(i, j)) r = i, c = j;
    CHECK(a.image.at(r, c, 0) == s.image.at(0, 1, 0));
  }
  CHECK(seen.size() == 8);
}

TEST_CASE("split") {
  const Split s = split_dataset(100, 4, 0.2);
  CHECK(s.train.size() == 80);
  CHECK(s.val.size() == 20);
  std::set<int> all(s.train.begin(), s.train.end());
  all.insert(s.val.begin(), s.val.end());
  CHECK(all.size() == 100);
  CHECK(split_dataset(100, 4, 0.2).val == s.val);
  CHECK_THROWS_WITH_AS(split_dataset(1, 4, 0.2), "empty split", ConfigError);
}

TEST_CASE("patience zero trains exactly one epoch") {
  const auto data = generate(desk_preset(SynthTask::fire_like, 20, 5));
  SegTrainConfig cfg;
  cfg.patience = 0;
  cfg.max_epochs = 10;
  const auto r = train_segmenter(data, {1, 3, 4}, cfg);
  CHECK(r.history.size() == 1);
  CHECK(r.best_epoch == 1);
  CHECK_THROWS_AS(train_segmenter({}, {1, 3, 4}, cfg), ConfigError);
}

TEST_CASE("fire-like segmentation is learnable and deterministic") {
  const auto data = generate(desk_preset(SynthTask::fire_like, 400, 6));
  SegTrainConfig cfg;
  cfg.max_epochs = 12;
  cfg.patience = 4;
  cfg.seed = 7;
  const UNetSpec spec{1, 3, 8};
  const auto r = train_segmenter(data, spec, cfg);
  for (const auto& e : r.history) MESSAGE("epoch " << e.epoch << " loss " << e.train_loss << " F1+ " << e.val_f1_pos);
  CHECK(r.best_val.pos > 0.8);
  CHECK(r.best_val.macro >= r.history.front().val_f1_macro);

  cfg.max_epochs = 2;
  const auto a = train_segmenter(data, spec, cfg);
  const auto b = train_segmenter(data, spec, cfg);
  CHECK(a.model.params().checksum() == b.model.params().checksum());
  CHECK(a.history.back().train_loss == b.history.back().train_loss);

  const auto path = (std::filesystem::temp_directory_path() / "tcb_unet_test.tckpt").string();
  save_unet(path, a.model);
  const UNet back = load_unet(path);
  std::filesystem::remove(path);
  CHECK(back.params().checksum() == a.model.params().checksum());
}
