#include "tcb/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>

#include "tcb/bytes.hpp"
#include "tcb/checkpoint.hpp"
#include "tcb/container.hpp"
#include "tcb/error.hpp"
#include "tcb/optim.hpp"
#include "tcb/parallel.hpp"
#include "tcb/rng.hpp"

namespace tcb {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be positive");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be non-negative");
  if (!(lr > 0.0) || !(lr_aux > 0.0) || !(lr_seg > 0.0)) throw ConfigError("learning rates must be positive");
  if (batch_size != 4 && batch_size != 8 && batch_size != 16 && batch_size != 32)
    throw ConfigError("batch size must be one of 4, 8, 16, 32");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (patience < 0) throw ConfigError("patience must be non-negative");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0, 1)");
  if (!(distortion_scale > 0.0)) throw ConfigError("distortion_scale must be positive");
  if (hidden_channels < 0 || head_channels < 0) throw ConfigError("channel counts must be non-negative");
}

TransformSpec TrainConfig::transform_spec(int in_channels) const {
  TransformSpec s = TransformSpec::for_quality(in_channels, quality);
  if (hidden_channels > 0) s.hidden_channels = hidden_channels;
  if (head_channels > 0) s.head_channels = head_channels;
  s.variant = variant;
  s.validate();
  return s;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lambda", lambda},
          {"gamma", gamma},
          {"lr", lr},
          {"lr_aux", lr_aux},
          {"lr_seg", lr_seg},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"patience", patience},
          {"seed", seed},
          {"quality", to_string(quality)},
          {"val_fraction", val_fraction},
          {"distortion_scale", distortion_scale},
          {"hidden_channels", hidden_channels},
          {"head_channels", head_channels},
          {"variant", to_string(variant)},
          {"freeze_compressor", freeze_compressor},
          {"freeze_segmenter", freeze_segmenter}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.lambda = j.value("lambda", c.lambda);
    c.gamma = j.value("gamma", c.gamma);
    c.lr = j.value("lr", c.lr);
    c.lr_aux = j.value("lr_aux", c.lr / 10.0);
    c.lr_seg = j.value("lr_seg", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    c.quality = parse_quality(j.value("quality", to_string(c.quality)));
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.distortion_scale = j.value("distortion_scale", c.distortion_scale);
    c.hidden_channels = j.value("hidden_channels", c.hidden_channels);
    c.head_channels = j.value("head_channels", c.head_channels);
    c.variant = parse_entropy_variant(j.value("variant", to_string(c.variant)));
    c.freeze_compressor = j.value("freeze_compressor", c.freeze_compressor);
    c.freeze_segmenter = j.value("freeze_segmenter", c.freeze_segmenter);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad training config: ") + e.what());
  }
  c.validate();
  return c;
}

LossBreakdown compose_loss(double distortion, double rate, double task, double lambda, double gamma) {
  LossBreakdown b;
  b.distortion = distortion;
  b.rate = rate;
  b.task = task;
  b.total = lambda * distortion + rate + gamma * task;
  return b;
}

LossBreakdown loss_total(const Tensor& x, const Tensor& x_hat, double rate_bits, const Tensor* logits,
                         const Tensor* mask, double lambda, double gamma, double distortion_scale) {
  if (!x.same_shape(x_hat)) throw ConfigError("reconstruction shape mismatch");
  Graph g;
  const double d = ops::mse_loss(g.constant(x), g.constant(x_hat)).item() * distortion_scale;
  const double r = rate_bits / (static_cast<double>(x.n()) * x.h() * x.w());
  double t = 0.0;
  if (gamma != 0.0) {
    if (!logits || !mask) throw ConfigError("task term needs logits and a mask");
    t = ops::bce_with_logits(g.constant(*logits), *mask).item();
  }
  return compose_loss(d, r, t, lambda, gamma);
}

EvalMetrics evaluate_codec(const LearnedCodec& codec, const UNet* segmenter, const std::vector<Sample>& data,
                           const std::vector<int>& indices) {
  if (indices.empty()) throw ConfigError("nothing to evaluate");
  double bits = 0.0, estimated = 0.0, sse = 0.0, samples = 0.0, pixels = 0.0;
  ConfusionCounts counts;
  for (int i : indices) {
    const Raster& img = data.at(i).image;
    const auto bytes = codec.encode(img);
    const Raster rec = codec.decode(bytes);
    bits += static_cast<double>(payload_bits(bytes));
    estimated += codec.analyze(img).estimated_bits;
    sse += mse(img, rec) * static_cast<double>(img.size());
    samples += static_cast<double>(img.size());
    pixels += static_cast<double>(img.pixels());
    if (segmenter) counts += confusion(segmenter->predict(rec), data[i].mask);
  }
  EvalMetrics m;
  m.bpp = bits / pixels;
  m.estimated_bpp = estimated / pixels;
  m.mse = sse / samples;
  m.psnr_db = psnr_from_mse(m.mse);
  if (segmenter) m.f1 = counts.scores();
  return m;
}

LossGraph build_loss(Graph& g, LearnedCodec& codec, UNet* segmenter, const Tensor& x, const Tensor* mask,
                     const TrainConfig& config, Rng& noise) {
  const double pixels = static_cast<double>(x.n()) * x.h() * x.w();
  const auto out = codec.forward_train(g, x, noise);
  const Var d = ops::scale(ops::mse_loss(out.x_hat, g.constant(x)), config.distortion_scale);
  const Var r = ops::scale(out.rate_bits, 1.0 / pixels);
  std::vector<std::pair<double, Var>> terms{{config.lambda, d}, {1.0, r}};
  double t_value = 0.0;
  if (segmenter) {
    if (!mask) throw ConfigError("segmentation term needs masks");
    const Var t = ops::bce_with_logits(segmenter->forward(g, out.x_hat, !config.freeze_segmenter), *mask);
    terms.emplace_back(config.gamma, t);
    t_value = t.item();
  }
  return {ops::lincomb(terms), compose_loss(d.item(), r.item(), t_value, config.lambda, config.gamma)};
}

namespace {

struct Models {
  LearnedCodec codec;
  std::optional<UNet> segmenter;
};

void check_dataset(const std::vector<Sample>& data) {
  if (data.empty()) throw ConfigError("empty dataset");
  const Raster& first = data.front().image;
  for (const Sample& s : data) {
    if (!s.image.same_dims(first)) throw ConfigError("training images must share one shape");
    if (s.mask.height != s.image.height || s.mask.width != s.image.width) throw ConfigError("mask/image size mismatch");
  }
  if (first.height % TransformSpec::kStride || first.width % TransformSpec::kStride)
    throw ConfigError("training image sides must be multiples of 8");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

void prepare_run_dir(const std::string& dir, const nlohmann::json& config) {
  if (dir.empty()) return;
  fs::create_directories(dir);
  write_text((fs::path(dir) / "config.json").string(), config.dump(2) + "\n");
}

double val_total(const EvalMetrics& m, const TrainConfig& cfg, double task) {
  return compose_loss(m.mse * cfg.distortion_scale, m.bpp, task, cfg.lambda, cfg.gamma).total;
}

/// Mean BCE of the segmenter on decoded validation images.
double val_task(const LearnedCodec& codec, const UNet& net, const std::vector<Sample>& data,
                const std::vector<int>& indices) {
  double sum = 0.0;
  for (int i : indices) {
    Graph g;
    const Tensor logits = net.logits(raster_to_tensor(codec.decode(codec.encode(data[i].image))));
    const Mask* m = &data[i].mask;
    sum += ops::bce_with_logits(g.constant(logits), masks_to_tensor({m})).item();
  }
  return sum / static_cast<double>(indices.size());
}

/// Shared epoch loop of standalone and joint training.
TrainResult run_training(Models models, const std::vector<Sample>& data, const TrainConfig& cfg,
                         const std::string& run_dir) {
  const Split split = split_dataset(static_cast<int>(data.size()), cfg.seed, cfg.val_fraction);
  LearnedCodec& codec = models.codec;
  UNet* seg = models.segmenter ? &*models.segmenter : nullptr;
  if (cfg.freeze_compressor)
    for (const auto& n : codec.params().names()) codec.params().set_trainable(n, false);
  if (seg && cfg.freeze_segmenter)
    for (const auto& n : seg->params().names()) seg->params().set_trainable(n, false);

  Adam main(codec.main_param_names(), {cfg.lr});
  Adam aux(codec.aux_param_names(), {cfg.lr_aux});
  std::optional<Adam> seg_opt;
  if (seg) seg_opt.emplace(seg->params().names(), AdamConfig{cfg.lr_seg});

  TrainResult result{codec, models.segmenter, {}, 0, std::numeric_limits<double>::infinity()};
  int since_best = 0;
  int bad_steps = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<int> order = split.train;
    Rng shuffle(cfg.seed, 0x7472000000ULL + epoch);
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) std::swap(order[i], order[shuffle.integer(0, i)]);

    EpochRecord rec;
    rec.epoch = epoch;
    int batches = 0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += cfg.batch_size, ++b) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const Raster*> imgs;
      std::vector<const Mask*> masks;
      for (std::size_t i = start; i < end; ++i) {
        imgs.push_back(&data[order[i]].image);
        masks.push_back(&data[order[i]].mask);
      }
      const Tensor x = rasters_to_tensor(imgs);

      codec.params().zero_grad();
      if (seg) seg->params().zero_grad();
      Graph g;
      Rng noise(cfg.seed, (static_cast<std::uint64_t>(epoch) << 32) ^ b);
      Tensor mask;
      if (seg) mask = masks_to_tensor(masks);
      const auto [loss, lb] = build_loss(g, codec, seg, x, seg ? &mask : nullptr, cfg, noise);
      if (!std::isfinite(loss.item())) {
        if (++bad_steps >= 3)
          throw DivergenceError("loss non-finite for 3 consecutive steps (epoch " + std::to_string(epoch) + ", D=" +
                                fmt(lb.distortion) + ", R=" + fmt(lb.rate) + ", T=" + fmt(lb.task) + ")");
        continue;
      }
      bad_steps = 0;
      if (std::abs(lb.total - loss.item()) > 1e-9 * std::max(1.0, std::abs(lb.total)))
        throw Error("loss recomposition mismatch");
      g.backward(loss);
      main.step(codec.params());
      aux.step(codec.params());
      if (seg_opt) seg_opt->step(seg->params());
      rec.train.total += lb.total;
      rec.train.distortion += lb.distortion;
      rec.train.rate += lb.rate;
      rec.train.task += lb.task;
      ++batches;
    }
    if (batches > 0) {
      rec.train.total /= batches;
      rec.train.distortion /= batches;
      rec.train.rate /= batches;
      rec.train.task /= batches;
    }
    rec.val = evaluate_codec(codec, seg, data, split.val);
    const double task = (seg && cfg.gamma != 0.0) ? val_task(codec, *seg, data, split.val) : 0.0;
    rec.val_total = val_total(rec.val, cfg, task);
    result.history.push_back(rec);
    if (!run_dir.empty()) write_text((fs::path(run_dir) / "history.csv").string(), history_csv(result.history));

    if (rec.val_total < result.best_val_total) {
      result.best_val_total = rec.val_total;
      result.best_epoch = epoch;
      result.codec = codec;
      result.segmenter = models.segmenter;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (since_best >= cfg.patience) break;
  }
  if (result.best_epoch == 0) throw DivergenceError("no finite validation loss");
  for (const auto& n : result.codec.params().names()) result.codec.params().set_trainable(n, true);
  if (result.segmenter)
    for (const auto& n : result.segmenter->params().names()) result.segmenter->params().set_trainable(n, true);
  return result;
}

nlohmann::json run_config(const std::string& mode, const TrainConfig& cfg, const TransformSpec& spec,
                          const std::vector<Sample>& data) {
  return {{"mode", mode},
          {"config", cfg.to_json()},
          {"transform", spec.to_json()},
          {"dataset_checksum", hex64(dataset_checksum(data))},
          {"dataset_size", data.size()}};
}

}  // namespace

TrainResult train_compressor(const std::vector<Sample>& data, const TrainConfig& config, const std::string& run_dir,
                             const LearnedCodec* init) {
  config.validate();
  if (!config.standalone()) throw ConfigError("train_compressor needs gamma == 0");
  check_dataset(data);
  const int channels = data.front().image.channels;
  LearnedCodec codec = init ? *init : LearnedCodec(config.transform_spec(channels), config.seed);
  if (codec.spec().in_channels != channels) throw ConfigError("compressor channel count does not match the data");
  prepare_run_dir(run_dir, run_config("compress", config, codec.spec(), data));
  TrainResult result = run_training({codec, std::nullopt}, data, config, run_dir);
  if (!run_dir.empty())
    save_codec((fs::path(run_dir) / "compressor.tckpt").string(), result.codec,
               {{"lambda", config.lambda}, {"best_epoch", result.best_epoch}});
  return result;
}

JointResult train_joint(const std::vector<Sample>& data, const Scenario& scenario, const TrainConfig& config,
                        const std::string& run_dir) {
  TrainConfig cfg = config;
  cfg.lambda = scenario.lambda;
  cfg.gamma = scenario.gamma;
  cfg.validate();
  if (cfg.gamma == 0.0 && !cfg.freeze_segmenter) throw ConfigError("joint training needs gamma > 0");
  if (!(cfg.lr_aux < cfg.lr)) throw ConfigError("joint training needs lr_aux < lr");
  for (const std::string* p : {&scenario.compressor_checkpoint, &scenario.segmenter_checkpoint})
    if (p->empty() || !fs::exists(*p)) throw ConfigError("missing pretrained checkpoint: " + (p->empty() ? "(none)" : *p));
  check_dataset(data);
  LearnedCodec codec = load_codec(scenario.compressor_checkpoint);
  UNet seg = load_unet(scenario.segmenter_checkpoint);
  if (codec.spec().in_channels != data.front().image.channels || seg.spec().in_channels != data.front().image.channels)
    throw ConfigError("pretrained models do not match the data's channel count");

  nlohmann::json meta = run_config("joint", cfg, codec.spec(), data);
  meta["scenario"] = {{"name", scenario.name},
                      {"compressor_checkpoint", scenario.compressor_checkpoint},
                      {"segmenter_checkpoint", scenario.segmenter_checkpoint}};
  prepare_run_dir(run_dir, meta);

  const Split split = split_dataset(static_cast<int>(data.size()), cfg.seed, cfg.val_fraction);
  JointResult out{TrainResult{codec, seg, {}, 0, 0.0}, evaluate_codec(codec, &seg, data, split.val), {}};
  out.train = run_training({codec, seg}, data, cfg, run_dir);
  out.post = evaluate_codec(out.train.codec, &*out.train.segmenter, data, split.val);
  if (!run_dir.empty()) {
    save_codec((fs::path(run_dir) / "compressor.tckpt").string(), out.train.codec, {{"scenario", scenario.name}});
    save_unet((fs::path(run_dir) / "segmenter.tckpt").string(), *out.train.segmenter, {{"scenario", scenario.name}});
    const nlohmann::json metrics = {{"prior", metrics_json(out.prior)}, {"post", metrics_json(out.post)}};
    write_text((fs::path(run_dir) / "metrics.json").string(), metrics.dump(2) + "\n");
  }
  return out;
}

GridResult grid_search(const std::vector<Sample>& data, const GridSpace& space, const TrainConfig& base,
                       const std::string& out_dir, int jobs) {
  if (space.lambdas.empty() || space.batch_sizes.empty() || space.gammas.empty())
    throw ConfigError("every grid axis needs at least one value");
  if (space.epochs < 1) throw ConfigError("grid epochs must be at least 1");
  const std::vector<double> lrs = space.lrs.empty() ? std::vector<double>{base.lr} : space.lrs;
  GridResult result;
  for (double lambda : space.lambdas)
    for (int batch : space.batch_sizes)
      for (double gamma : space.gammas)
        for (double lr : lrs) {
          GridCell cell;
          cell.index = static_cast<int>(result.cells.size());
          cell.config = base;
          cell.config.lambda = lambda;
          cell.config.batch_size = batch;
          cell.config.gamma = gamma;
          cell.config.lr = lr;
          cell.config.lr_aux = lr / 10.0;
          cell.config.max_epochs = space.epochs;
          cell.config.validate();
          if (!cell.config.standalone()) throw ConfigError("grid search trains compressors only (gamma must be 0)");
          char name[32];
          std::snprintf(name, sizeof name, "cell_%03d", cell.index);
          cell.run_dir = out_dir.empty() ? "" : (fs::path(out_dir) / name).string();
          result.cells.push_back(cell);
        }

  parallel_for(static_cast<int>(result.cells.size()), jobs, [&](int i) {
    GridCell& cell = result.cells[i];
    try {
      const TrainResult r = train_compressor(data, cell.config, cell.run_dir);
      cell.best_val_total = r.best_val_total;
      cell.best = r.history.at(r.best_epoch - 1).val;
      cell.completed = true;
    } catch (const DivergenceError& e) {
      cell.error = e.what();
    }
  });

  for (const GridCell& c : result.cells)
    if (c.completed) result.ranking.push_back(c.index);
  std::stable_sort(result.ranking.begin(), result.ranking.end(), [&](int a, int b) {
    return result.cells[a].best_val_total < result.cells[b].best_val_total;
  });

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    nlohmann::json manifest = {{"dataset_checksum", hex64(dataset_checksum(data))}, {"epochs", space.epochs}};
    manifest["cells"] = nlohmann::json::array();
    for (const GridCell& c : result.cells) {
      nlohmann::json j = {{"index", c.index},
                          {"config", c.config.to_json()},
                          {"config_hash", hex64(fnv1a64(c.config.to_json().dump()))},
                          {"run_dir", c.run_dir},
                          {"completed", c.completed}};
      if (c.completed) {
        j["best_val_total"] = c.best_val_total;
        j["best"] = metrics_json(c.best);
      } else {
        j["error"] = c.error;
      }
      manifest["cells"].push_back(j);
    }
    manifest["ranking"] = result.ranking;
    write_text((fs::path(out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  }
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string s = "epoch,D,R,T,total,val_bpp,val_psnr,val_f1\n";
  for (const EpochRecord& e : history) {
    s += std::to_string(e.epoch) + "," + fmt(e.train.distortion) + "," + fmt(e.train.rate) + "," + fmt(e.train.task) +
         "," + fmt(e.train.total) + "," + fmt(e.val.bpp) + "," + fmt(e.val.psnr_db) + "," +
         (e.val.f1 ? fmt(e.val.f1->pos) : std::string("nan")) + "\n";
  }
  return s;
}

nlohmann::json metrics_json(const EvalMetrics& m) {
  nlohmann::json j = {{"bpp", m.bpp}, {"psnr_db", m.psnr_db}, {"mse", m.mse}, {"estimated_bpp", m.estimated_bpp}};
  if (m.f1) j["f1"] = {{"pos", m.f1->pos}, {"neg", m.f1->neg}, {"macro", m.f1->macro}};
  return j;
}

}  // namespace tcb
