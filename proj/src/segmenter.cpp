#include "tcb/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tcb/checkpoint.hpp"
#include "tcb/error.hpp"
#include "tcb/optim.hpp"
#include "tcb/rng.hpp"
#include "tcb/tensor.hpp"

namespace tcb {

void UNetSpec::validate() const {
  if (in_channels < 1 || in_channels > 64) throw ConfigError("segmenter input channels must be in [1, 64]");
  if (depth < 1 || depth > 5) throw ConfigError("segmenter depth must be in [1, 5]");
  if (base_width < 1 || base_width > 256) throw ConfigError("segmenter base width must be in [1, 256]");
}

nlohmann::json UNetSpec::to_json() const {
  return {{"in_channels", in_channels}, {"depth", depth}, {"base_width", base_width}};
}

UNetSpec UNetSpec::from_json(const nlohmann::json& j) {
  UNetSpec s;
  try {
    s.in_channels = j.at("in_channels").get<int>();
    s.depth = j.at("depth").get<int>();
    s.base_width = j.at("base_width").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad segmenter spec: ") + e.what());
  }
  s.validate();
  return s;
}

namespace {

void add_conv(ParamStore& ps, Rng& rng, const std::string& name, int out, int in, int k, double gain) {
  const double bound = gain * std::sqrt(3.0 / (double(in) * k * k));
  Tensor w(out, in, k, k);
  for (double& v : w.values()) v = rng.uniform(-bound, bound);
  ps.add(name + ".w", std::move(w), "uniform(+-gain*sqrt(3/fan_in))");
  ps.add(name + ".b", Tensor(1, out, 1, 1), "zeros");
}

}  // namespace

UNet::UNet(UNetSpec spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  Rng rng(seed, 0x756e6574);
  const double he = std::sqrt(2.0);
  int in = spec_.in_channels;
  for (int l = 0; l < spec_.depth; ++l) {
    const std::string n = "unet.enc" + std::to_string(l);
    add_conv(params_, rng, n + ".conv0", spec_.width(l), in, 3, he);
    add_conv(params_, rng, n + ".conv1", spec_.width(l), spec_.width(l), 3, he);
    in = spec_.width(l);
  }
  for (int l = spec_.depth - 2; l >= 0; --l) {
    const std::string up = "unet.up" + std::to_string(l);
    const double bound = std::sqrt(3.0 / spec_.width(l + 1));
    Tensor w(spec_.width(l + 1), spec_.width(l), 2, 2);
    for (double& v : w.values()) v = rng.uniform(-bound, bound);
    params_.add(up + ".w", std::move(w), "uniform(+-sqrt(3/fan_in))");
    params_.add(up + ".b", Tensor(1, spec_.width(l), 1, 1), "zeros");
    const std::string n = "unet.dec" + std::to_string(l);
    add_conv(params_, rng, n + ".conv0", spec_.width(l), 2 * spec_.width(l), 3, he);
    add_conv(params_, rng, n + ".conv1", spec_.width(l), spec_.width(l), 3, he);
  }
  add_conv(params_, rng, "unet.head", 1, spec_.width(0), 1, 1.0);
}

UNet::UNet(UNetSpec spec, const ParamStore& params) : UNet(spec, 0) {
  copy_params(params, params_);
  for (auto& [name, p] : params_) p.trainable = params.at(name).trainable;
}

Var UNet::p(Graph& g, const std::string& name, bool train) {
  if (train) return g.param(params_.at(name));
  return g.constant(params_.at(name).value);
}

Var UNet::block(Graph& g, Var x, const std::string& name, bool train) {
  for (const char* conv : {".conv0", ".conv1"}) {
    x = ops::conv2d(ops::pad(x, 1, 1, 1, 1, PadMode::replicate), p(g, name + conv + ".w", train),
                    p(g, name + conv + ".b", train), 1);
    x = ops::elu(x);
  }
  return x;
}

Var UNet::forward(Graph& g, Var x, bool train) {
  const Tensor& xv = x.value();
  if (xv.c() != spec_.in_channels)
    throw ConfigError("segmenter expects " + std::to_string(spec_.in_channels) + " channels, got " + std::to_string(xv.c()));
  if (xv.h() % spec_.multiple() || xv.w() % spec_.multiple())
    throw ConfigError("segmenter input dims must be multiples of " + std::to_string(spec_.multiple()));
  std::vector<Var> skips;
  Var h = x;
  for (int l = 0; l < spec_.depth; ++l) {
    h = block(g, h, "unet.enc" + std::to_string(l), train);
    if (l + 1 < spec_.depth) {
      skips.push_back(h);
      h = ops::avgpool2(h);
    }
  }
  for (int l = spec_.depth - 2; l >= 0; --l) {
    const std::string up = "unet.up" + std::to_string(l);
    h = ops::conv_transpose2d(h, p(g, up + ".w", train), p(g, up + ".b", train), 2, 0, 0);
    h = ops::concat_channels(h, skips[l]);
    h = block(g, h, "unet.dec" + std::to_string(l), train);
  }
  return ops::conv2d(h, p(g, "unet.head.w", train), p(g, "unet.head.b", train), 1);
}

Tensor UNet::logits(const Tensor& x) const {
  Graph g;
  return const_cast<UNet*>(this)->forward(g, g.constant(x), false).value();
}

Mask UNet::predict(const Raster& image) const {
  const Tensor l = logits(raster_to_tensor(image));
  Mask m(image.height, image.width);
  for (int i = 0; i < m.height; ++i)
    for (int j = 0; j < m.width; ++j) m.at(i, j) = l.at(0, 0, i, j) > 0 ? 1 : 0;
  return m;
}

void SegTrainConfig::validate() const {
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 0) throw ConfigError("patience must be >= 0");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(lr > 0)) throw ConfigError("learning rate must be positive");
  if (!(val_fraction > 0 && val_fraction < 1)) throw ConfigError("val_fraction must be in (0, 1)");
}

nlohmann::json SegTrainConfig::to_json() const {
  return {{"max_epochs", max_epochs}, {"patience", patience}, {"batch_size", batch_size}, {"lr", lr},
          {"seed", seed},             {"augment", augment},   {"val_fraction", val_fraction}};
}

Split split_dataset(int n, std::uint64_t seed, double val_fraction) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed, 0x73706c6974);
  for (int i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.integer(0, i)]);
  const int n_train = static_cast<int>(std::lround(n * (1.0 - val_fraction)));
  if (n_train < 1 || n_train >= n) throw ConfigError("empty split");
  Split s;
  s.train.assign(idx.begin(), idx.begin() + n_train);
  s.val.assign(idx.begin() + n_train, idx.end());
  return s;
}

Sample augment_sample(const Sample& s, int op) {
  if (op == 0) return s;
  const int h = s.image.height, w = s.image.width, c = s.image.channels;
  const bool transpose = op & 4;
  if (transpose && h != w) return s;
  Sample out{Raster(h, w, c), Mask(h, w)};
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      int si = (op & 1) ? h - 1 - i : i;
      int sj = (op & 2) ? w - 1 - j : j;
      if (transpose) std::swap(si, sj);
      for (int ch = 0; ch < c; ++ch) out.image.at(i, j, ch) = s.image.at(si, sj, ch);
      out.mask.at(i, j) = s.mask.at(si, sj);
    }
  return out;
}

F1Scores evaluate_segmenter(const UNet& net, const std::vector<Sample>& data, const std::vector<int>& indices) {
  ConfusionCounts total;
  constexpr int kChunk = 32;
  for (std::size_t start = 0; start < indices.size(); start += kChunk) {
    const std::size_t end = std::min(indices.size(), start + kChunk);
    std::vector<const Raster*> imgs;
    for (std::size_t i = start; i < end; ++i) imgs.push_back(&data.at(indices[i]).image);
    const Tensor l = net.logits(rasters_to_tensor(imgs));
    for (std::size_t i = start; i < end; ++i) {
      const Mask& truth = data[indices[i]].mask;
      Mask pred(truth.height, truth.width);
      for (int r = 0; r < pred.height; ++r)
        for (int c = 0; c < pred.width; ++c) pred.at(r, c) = l.at(static_cast<int>(i - start), 0, r, c) > 0 ? 1 : 0;
      total += confusion(pred, truth);
    }
  }
  return total.scores();
}

F1Scores evaluate_segmenter(const UNet& net, const std::vector<Sample>& data) {
  std::vector<int> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  return evaluate_segmenter(net, data, all);
}

double segmenter_epoch(UNet& net, Adam& opt, const std::vector<Sample>& data, const std::vector<int>& indices,
                       int batch_size, bool augment, std::uint64_t seed, int epoch) {
  double loss_sum = 0.0;
  int batches = 0;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const std::size_t end = std::min(indices.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<Sample> aug;
    aug.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) {
      Rng r(seed, (static_cast<std::uint64_t>(epoch) << 32) ^ static_cast<std::uint64_t>(indices[i]));
      aug.push_back(augment ? augment_sample(data[indices[i]], r.integer(0, 7)) : data[indices[i]]);
    }
    std::vector<const Raster*> imgs;
    std::vector<const Mask*> masks;
    for (const Sample& s : aug) {
      imgs.push_back(&s.image);
      masks.push_back(&s.mask);
    }
    net.params().zero_grad();
    Graph g;
    const Var loss = ops::bce_with_logits(net.forward(g, g.constant(rasters_to_tensor(imgs)), true), masks_to_tensor(masks));
    if (!std::isfinite(loss.item())) throw DivergenceError("non-finite segmentation loss");
    g.backward(loss);
    opt.step(net.params());
    loss_sum += loss.item();
    ++batches;
  }
  return batches ? loss_sum / batches : 0.0;
}

SegTrainResult train_segmenter(const std::vector<Sample>& data, const UNetSpec& spec, const SegTrainConfig& config,
                               const UNet* init) {
  config.validate();
  if (data.empty()) throw ConfigError("empty split");
  const Split split = split_dataset(static_cast<int>(data.size()), config.seed, config.val_fraction);
  if (init && init->spec().to_json() != spec.to_json()) throw ConfigError("initial segmenter does not match the spec");
  UNet net = init ? *init : UNet(spec, config.seed);
  Adam opt(net.params().names(), {config.lr});
  SegTrainResult result{net, {}, 0, {}};
  double best = -1.0;
  int since_best = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::vector<int> order = split.train;
    Rng shuffle(config.seed, 0x6570000000ULL + epoch);
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) std::swap(order[i], order[shuffle.integer(0, i)]);
    SegEpoch e;
    e.epoch = epoch;
    e.train_loss = segmenter_epoch(net, opt, data, order, config.batch_size, config.augment, config.seed, epoch);
    const F1Scores f1 = evaluate_segmenter(net, data, split.val);
    e.val_f1_pos = f1.pos;
    e.val_f1_macro = f1.macro;
    result.history.push_back(e);
    if (f1.macro > best) {
      best = f1.macro;
      since_best = 0;
      result.model = net;
      result.best_epoch = epoch;
      result.best_val = f1;
    } else {
      ++since_best;
    }
    if (since_best >= config.patience) break;
  }
  return result;
}

void save_unet(const std::string& path, const UNet& net, nlohmann::json extra) {
  nlohmann::json meta = {{"kind", "unet"}, {"spec", net.spec().to_json()}, {"provenance", std::move(extra)}};
  save_checkpoint(path, meta, net.params());
}

UNet load_unet(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.meta.value("kind", "") != "unet") throw FormatError(path + " is not a segmenter checkpoint");
  return UNet(UNetSpec::from_json(ck.meta.at("spec")), ck.params);
}

}  // namespace tcb
