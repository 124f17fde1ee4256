#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>

#include "tcb/bytes.hpp"
#include "tcb/error.hpp"
#include "tcb/synth.hpp"
#include "tcb/trainer.hpp"

using namespace tcb;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tcb_trainer_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<Sample> fire_data(int count, std::uint64_t seed) {
  auto spec = desk_preset(SynthTask::fire_like, count, seed);
  spec.positive_fraction_target = 0.1;
  return generate(spec);
}

TrainConfig small_config() {
  TrainConfig c;
  c.lambda = 1.0;
  c.batch_size = 8;
  c.max_epochs = 2;
  c.patience = 5;
  c.seed = 17;
  c.hidden_channels = 16;
  c.head_channels = 16;
  return c;
}

std::string slurp(const fs::path& p) {
  const auto b = read_file(p.string());
  return {b.begin(), b.end()};
}

}  // namespace

TEST_CASE("loss composition examples") {
  CHECK(compose_loss(0.01, 0.5, 0.0, 10.0, 0.0).total == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(compose_loss(0.01, 0.5, 0.6931, 10.0, 1e-3).total == doctest::Approx(0.6006931).epsilon(1e-12));
  CHECK(compose_loss(0.01, 0.5, 123.0, 10.0, 0.0).total == compose_loss(0.01, 0.5, 0.0, 10.0, 0.0).total);
}

TEST_CASE("loss from tensors recomposes and ignores the task when gamma is 0") {
  Tensor x(2, 1, 8, 8, 0.5), xh(2, 1, 8, 8, 0.6), logits(2, 1, 8, 8, 0.0), mask(2, 1, 8, 8, 1.0);
  const LossBreakdown b = loss_total(x, xh, 64.0, &logits, &mask, 2.0, 0.5, 1.0);
  CHECK(b.distortion == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(b.rate == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(b.task == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(std::abs(b.total - (2.0 * b.distortion + b.rate + 0.5 * b.task)) <= 1e-9);
  Tensor other(2, 1, 8, 8, 5.0);
  CHECK(loss_total(x, xh, 64.0, &logits, &mask, 2.0, 0.0, 1.0).total ==
        loss_total(x, xh, 64.0, &other, &mask, 2.0, 0.0, 1.0).total);
  CHECK(loss_total(x, xh, 64.0, nullptr, nullptr, 2.0, 0.0, 1.0).task == 0.0);
  CHECK_THROWS_AS(loss_total(x, xh, 64.0, nullptr, nullptr, 2.0, 0.1, 1.0), ConfigError);
}

TEST_CASE("config validation") {
  TrainConfig c = small_config();
  c.batch_size = 12;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.lambda = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.gamma = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  CHECK(TrainConfig::from_json(c.to_json()).to_json() == c.to_json());
  c.gamma = 0.1;
  CHECK_THROWS_AS(train_compressor(fire_data(16, 1), c), ConfigError);
}

TEST_CASE("standalone training is deterministic and writes its run directory") {
  const auto data = fire_data(48, 3);
  const TrainConfig cfg = small_config();
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult ra = train_compressor(data, cfg, a.string());
  MESSAGE("two epochs took " << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s");
  const TrainResult rb = train_compressor(data, cfg, b.string());
  CHECK(fs::exists(a / "config.json"));
  CHECK(fs::exists(a / "compressor.tckpt"));
  CHECK(slurp(a / "history.csv") == slurp(b / "history.csv"));
  CHECK(ra.codec.model_id() == rb.codec.model_id());
  CHECK(ra.history.size() == 2);
  const auto cfgjson = nlohmann::json::parse(slurp(a / "config.json"));
  CHECK(cfgjson.at("dataset_checksum") == hex64(dataset_checksum(data)));
  CHECK(cfgjson.at("config").at("lambda") == 1.0);
  CHECK(load_codec((a / "compressor.tckpt").string()).model_id() == ra.codec.model_id());
  for (const EpochRecord& e : ra.history) {
    CHECK(std::abs(e.train.total - (cfg.lambda * e.train.distortion + e.train.rate)) <= 1e-9 * e.train.total);
    CHECK(e.val.bpp >= 0.0);
    CHECK(!e.val.f1.has_value());
  }
  CHECK(ra.history.back().train.total < ra.history.front().train.total);
}

TEST_CASE("real bitstream rate tracks the model estimate") {
  const auto data = fire_data(48, 3);
  TrainConfig cfg = small_config();
  cfg.max_epochs = 3;
  const TrainResult r = train_compressor(data, cfg);
  std::vector<int> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  const EvalMetrics m = evaluate_codec(r.codec, nullptr, data, all);
  const double pixels = static_cast<double>(data.size()) * 32 * 32;
  MESSAGE("real " << m.bpp << " bpp, estimate " << m.estimated_bpp << " bpp");
  CHECK(m.bpp >= 0.0);
  CHECK(std::abs(m.bpp - m.estimated_bpp) <= 0.005 * m.estimated_bpp + 64.0 * data.size() / pixels);
}

TEST_CASE("early stopping with patience 0 runs a single epoch") {
  TrainConfig cfg = small_config();
  cfg.patience = 0;
  cfg.max_epochs = 4;
  const TrainResult r = train_compressor(fire_data(24, 4), cfg);
  CHECK(r.history.size() == 1);
  CHECK(r.best_epoch == 1);
}

TEST_CASE("non-finite inputs abort after three steps") {
  auto data = fire_data(48, 5);
  for (auto& s : data) s.image.data[0] = std::numeric_limits<float>::quiet_NaN();
  TrainConfig cfg = small_config();
  CHECK_THROWS_AS(train_compressor(data, cfg), DivergenceError);
}

TEST_CASE("joint training: checkpoints, reduction and frozen segmenter") {
  const auto data = fire_data(40, 6);
  TrainConfig cfg = small_config();
  cfg.max_epochs = 1;
  const fs::path dir = scratch("joint");
  fs::create_directories(dir);
  const TrainResult pre = train_compressor(data, cfg, (dir / "pre").string());
  UNet seg({1, 3, 4}, 7);
  save_unet((dir / "seg.tckpt").string(), seg);

  Scenario sc{"check", (dir / "pre" / "compressor.tckpt").string(), (dir / "seg.tckpt").string(), 1.0, 1e-2};

  SUBCASE("missing checkpoints are an error") {
    Scenario bad = sc;
    bad.segmenter_checkpoint = (dir / "absent.tckpt").string();
    CHECK_THROWS_AS(train_joint(data, bad, cfg), ConfigError);
    bad = sc;
    bad.compressor_checkpoint.clear();
    CHECK_THROWS_AS(train_joint(data, bad, cfg), ConfigError);
  }

  SUBCASE("preconditions") {
    Scenario zero = sc;
    zero.gamma = 0.0;
    CHECK_THROWS_AS(train_joint(data, zero, cfg), ConfigError);
    TrainConfig slow_aux = cfg;
    slow_aux.lr_aux = cfg.lr;
    CHECK_THROWS_AS(train_joint(data, sc, slow_aux), ConfigError);
  }

  SUBCASE("gamma 0 with a frozen segmenter reproduces standalone training") {
    Scenario zero = sc;
    zero.gamma = 0.0;
    TrainConfig frozen = cfg;
    frozen.max_epochs = 2;
    frozen.freeze_segmenter = true;
    const JointResult j = train_joint(data, zero, frozen);
    TrainConfig plain = cfg;
    plain.max_epochs = 2;
    const TrainResult s = train_compressor(data, plain, "", &pre.codec);
    REQUIRE(j.train.history.size() == s.history.size());
    for (std::size_t e = 0; e < s.history.size(); ++e) {
      CHECK(j.train.history[e].train.distortion == s.history[e].train.distortion);
      CHECK(j.train.history[e].train.rate == s.history[e].train.rate);
      CHECK(j.train.history[e].val.bpp == s.history[e].val.bpp);
    }
    CHECK(j.train.codec.model_id() == s.codec.model_id());
    CHECK(j.train.segmenter->params().checksum() == seg.params().checksum());
  }

  SUBCASE("joint run records prior and post metrics and writes both checkpoints") {
    const JointResult j = train_joint(data, sc, cfg, (dir / "joint").string());
    REQUIRE(j.prior.f1.has_value());
    REQUIRE(j.post.f1.has_value());
    CHECK(j.prior.bpp > 0.0);
    CHECK(j.train.segmenter->params().checksum() != seg.params().checksum());
    CHECK(fs::exists(dir / "joint" / "compressor.tckpt"));
    CHECK(fs::exists(dir / "joint" / "segmenter.tckpt"));
    CHECK(fs::exists(dir / "joint" / "metrics.json"));
    const std::string hist = slurp(dir / "joint" / "history.csv");
    CHECK(hist.find("nan") == std::string::npos);
    for (const EpochRecord& e : j.train.history)
      CHECK(std::abs(e.train.total - (sc.lambda * e.train.distortion + e.train.rate + sc.gamma * e.train.task)) <=
            1e-9 * e.train.total);
  }
}

TEST_CASE("grid search covers the Cartesian product and ranks deterministically") {
  const auto data = fire_data(24, 8);
  TrainConfig base = small_config();
  GridSpace space;
  space.lambdas = {0.5, 5.0};
  space.batch_sizes = {4, 8};
  space.epochs = 1;
  const fs::path dir = scratch("grid");
  const GridResult a = grid_search(data, space, base, dir.string(), 2);
  CHECK(a.cells.size() == 4);
  std::vector<int> sorted = a.ranking;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1, 2, 3});
  for (std::size_t i = 1; i < a.ranking.size(); ++i)
    CHECK(a.cells[a.ranking[i - 1]].best_val_total <= a.cells[a.ranking[i]].best_val_total);
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest.at("cells").size() == 4);
  const GridResult b = grid_search(data, space, base, "", 1);
  CHECK(b.ranking == a.ranking);
  for (int i = 0; i < 4; ++i) CHECK(a.cells[i].best_val_total == b.cells[i].best_val_total);
  space.gammas = {0.1};
  CHECK_THROWS_AS(grid_search(data, space, base, ""), ConfigError);
}

TEST_CASE("lambda sweep yields a monotone rate-distortion frontier") {
  const auto data = fire_data(80, 9);
  std::vector<std::pair<double, double>> points;
  for (double lambda : {0.1, 1.0, 10.0, 100.0}) {
    TrainConfig cfg = small_config();
    cfg.lambda = lambda;
    cfg.max_epochs = 6;
    const TrainResult r = train_compressor(data, cfg);
    const EvalMetrics& m = r.history.at(r.best_epoch - 1).val;
    MESSAGE("lambda " << lambda << ": " << m.bpp << " bpp, " << m.psnr_db << " dB");
    points.emplace_back(m.bpp, m.psnr_db);
  }
  std::sort(points.begin(), points.end());
  for (std::size_t i = 1; i < points.size(); ++i) CHECK(points[i].second >= points[i - 1].second);
}
