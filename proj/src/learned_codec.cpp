#include "tcb/learned_codec.hpp"

#include <cmath>

#include "tcb/bytes.hpp"
#include "tcb/checkpoint.hpp"
#include "tcb/container.hpp"
#include "tcb/error.hpp"
#include "tcb/tensor.hpp"

namespace tcb {

std::string to_string(Quality q) { return q == Quality::low ? "low" : "high"; }

Quality parse_quality(const std::string& s) {
  if (s == "low") return Quality::low;
  if (s == "high") return Quality::high;
  throw ConfigError("unknown quality '" + s + "' (expected low or high)");
}

std::string to_string(EntropyVariant v) { return v == EntropyVariant::gmm ? "gmm" : "factorized"; }

EntropyVariant parse_entropy_variant(const std::string& s) {
  if (s == "gmm") return EntropyVariant::gmm;
  if (s == "factorized") return EntropyVariant::factorized;
  throw ConfigError("unknown entropy model '" + s + "' (expected gmm or factorized)");
}

TransformSpec TransformSpec::for_quality(int in_channels, Quality q) {
  TransformSpec s;
  s.in_channels = in_channels;
  s.latent_channels = q == Quality::low ? 32 : 64;
  return s;
}

void TransformSpec::validate() const {
  if (in_channels < 1 || in_channels > 64) throw ConfigError("input channels must be in [1, 64]");
  if (latent_channels < 2 || hidden_channels < 1 || head_channels < 1) throw ConfigError("channel counts must be positive");
  if (variant == EntropyVariant::gmm && latent_channels % 2) throw ConfigError("gmm variant needs an even latent channel count");
  if (mixtures < 1 || mixtures > 5) throw ConfigError("mixture components must be in [1, 5]");
}

nlohmann::json TransformSpec::to_json() const {
  return {{"in_channels", in_channels}, {"latent_channels", latent_channels}, {"hidden_channels", hidden_channels},
          {"head_channels", head_channels}, {"mixtures", mixtures},          {"variant", to_string(variant)},
          {"stride", kStride}};
}

TransformSpec TransformSpec::from_json(const nlohmann::json& j) {
  TransformSpec s;
  try {
    s.in_channels = j.at("in_channels").get<int>();
    s.latent_channels = j.at("latent_channels").get<int>();
    s.hidden_channels = j.at("hidden_channels").get<int>();
    s.head_channels = j.at("head_channels").get<int>();
    s.mixtures = j.at("mixtures").get<int>();
    s.variant = parse_entropy_variant(j.at("variant").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad transform spec: ") + e.what());
  }
  s.validate();
  return s;
}

namespace {

struct LayerShape {
  std::string name;
  int n, c;  // weight dims 0 and 1
  int k;
  bool transposed;
};

std::vector<LayerShape> layer_shapes(const TransformSpec& s) {
  const int k = TransformSpec::kKernel;
  std::vector<LayerShape> out = {
      {"ga.0", s.hidden_channels, s.in_channels, k, false},
      {"ga.1", s.hidden_channels, s.hidden_channels, k, false},
      {"ga.2", s.latent_channels, s.hidden_channels, k, false},
      {"gs.0", s.latent_channels, s.hidden_channels, k, true},
      {"gs.1", s.hidden_channels, s.hidden_channels, k, true},
      {"gs.2", s.hidden_channels, s.in_channels, k, true},
  };
  if (s.variant == EntropyVariant::gmm) {
    out.push_back({"head.0", s.head_channels, s.prior_channels(), 3, false});
    out.push_back({"head.1", 3 * s.mixtures * s.mixture_channels(), s.head_channels, 3, false});
  }
  return out;
}

}  // namespace

LearnedCodec::LearnedCodec(TransformSpec spec, std::uint64_t seed)
    : spec_(spec), prior_("prior.", spec.prior_channels()) {
  spec_.validate();
  init_params(seed);
}

LearnedCodec::LearnedCodec(TransformSpec spec, ParamStore params)
    : spec_(spec), prior_("prior.", spec.prior_channels()) {
  spec_.validate();
  init_params(0);
  copy_params(params, params_);
  for (auto& [name, p] : params_) p.trainable = params.at(name).trainable;
}

void LearnedCodec::init_params(std::uint64_t seed) {
  Rng rng(seed, 0x636f646563);
  for (const LayerShape& l : layer_shapes(spec_)) {
    const bool last_synthesis = l.name == "gs.2";
    const bool last_head = l.name == "head.1";
    // Transposed layers: each output sees in * k^2 / stride^2 inputs.
    const double fan_in = l.transposed ? double(l.n) * l.k * l.k / 4.0 : double(l.c) * l.k * l.k;
    const double bound = std::sqrt(3.0 / fan_in);
    Tensor w(l.n, l.c, l.k, l.k);
    std::string init = "zeros";
    if (!last_synthesis && !last_head) {
      for (double& v : w.values()) v = rng.uniform(-bound, bound);
      init = "uniform(+-sqrt(3/fan_in))";
    }
    params_.add(l.name + ".w", std::move(w), init);
    params_.add(l.name + ".b", Tensor(1, l.transposed ? l.c : l.n, 1, 1), "zeros");
  }
  Rng prior_rng = rng.fork(1);
  prior_.init_params(params_, prior_rng);
}

std::vector<std::string> LearnedCodec::main_param_names() const {
  std::vector<std::string> out;
  for (const char* prefix : {"ga.", "gs.", "head."})
    for (auto& n : params_.names_with_prefix(prefix)) out.push_back(n);
  return out;
}

std::vector<std::string> LearnedCodec::aux_param_names() const { return params_.names_with_prefix("prior."); }

Var LearnedCodec::p(Graph& g, const std::string& name, bool train) {
  if (train) return g.param(params_.at(name));
  return g.constant(params_.at(name).value);
}

Var LearnedCodec::analysis(Graph& g, Var x, bool train) {
  if (x.value().c() != spec_.in_channels)
    throw ConfigError("input has " + std::to_string(x.value().c()) + " channels, model expects " + std::to_string(spec_.in_channels));
  if (x.value().h() % TransformSpec::kStride || x.value().w() % TransformSpec::kStride)
    throw ConfigError("input dims must be multiples of 8 (pad first)");
  Var h = x;
  for (int i = 0; i < 3; ++i) {
    const std::string n = "ga." + std::to_string(i);
    h = ops::conv2d(ops::pad(h, 2, 2, 2, 2, PadMode::zero), p(g, n + ".w", train), p(g, n + ".b", train), 2);
    if (i < 2) h = ops::tanh(h);
  }
  return h;
}

Var LearnedCodec::synthesis(Graph& g, Var y, bool train) {
  Var h = y;
  for (int i = 0; i < 3; ++i) {
    const std::string n = "gs." + std::to_string(i);
    h = ops::conv_transpose2d(h, p(g, n + ".w", train), p(g, n + ".b", train), 2, 2, 1);
    if (i < 2) h = ops::tanh(h);
  }
  h = ops::add_scalar(h, 0.5);
  return train ? h : ops::clamp(h, 0.0, 1.0);
}

Var LearnedCodec::head(Graph& g, Var y_prior, bool train) {
  Var h = ops::conv2d(ops::pad(y_prior, 1, 1, 1, 1, PadMode::zero), p(g, "head.0.w", train), p(g, "head.0.b", train), 1);
  h = ops::elu(h);
  return ops::conv2d(ops::pad(h, 1, 1, 1, 1, PadMode::zero), p(g, "head.1.w", train), p(g, "head.1.b", train), 1);
}

LearnedCodec::TrainOutputs LearnedCodec::forward_train(Graph& g, const Tensor& x, Rng& noise) {
  const Var y = analysis(g, g.constant(x), true);
  const Tensor u = [&] {
    Tensor t = Tensor::like(y.value());
    for (double& v : t.values()) v = noise.uniform() - 0.5;
    return t;
  }();
  const Var y_tilde = ops::add(y, g.constant(u));
  const Var x_hat = synthesis(g, y_tilde, true);
  const int ma = spec_.prior_channels();
  if (spec_.variant == EntropyVariant::factorized) return {x_hat, prior_.rate(g, y_tilde, params_)};
  const Var ya = ops::slice_channels(y_tilde, 0, ma);
  const Var yb = ops::slice_channels(y_tilde, ma, spec_.latent_channels);
  const Var rate = ops::add(prior_.rate(g, ya, params_), ops::mixture_rate_bits(yb, head(g, ya, true), spec_.mixtures));
  return {x_hat, rate};
}

Tensor LearnedCodec::analysis_forward(const Tensor& x) const {
  Graph g;
  auto* self = const_cast<LearnedCodec*>(this);
  return self->analysis(g, g.constant(x), false).value();
}

Tensor LearnedCodec::synthesis_forward(const Tensor& y_hat) const {
  if (y_hat.c() != spec_.latent_channels) throw ConfigError("latent channel mismatch");
  Graph g;
  auto* self = const_cast<LearnedCodec*>(this);
  return self->synthesis(g, g.constant(y_hat), false).value();
}

Tensor LearnedCodec::head_forward(const Tensor& y_prior) const {
  Graph g;
  auto* self = const_cast<LearnedCodec*>(this);
  return self->head(g, g.constant(y_prior), false).value();
}

Tensor pad_to_multiple(const Tensor& x, int multiple) {
  const int ph = (multiple - x.h() % multiple) % multiple;
  const int pw = (multiple - x.w() % multiple) % multiple;
  if (ph == 0 && pw == 0) return x;
  Graph g;
  const PadMode mode = (x.h() > ph && x.w() > pw) ? PadMode::reflect : PadMode::replicate;
  return ops::pad(g.constant(x), 0, ph, 0, pw, mode).value();
}

namespace {

Tensor slice(const Tensor& t, int c0, int c1) {
  Tensor out(t.n(), c1 - c0, t.h(), t.w());
  const std::size_t plane = static_cast<std::size_t>(t.h()) * t.w();
  for (int n = 0; n < t.n(); ++n) std::copy(t.image(n) + c0 * plane, t.image(n) + c1 * plane, out.image(n));
  return out;
}

}  // namespace

LatentCode LearnedCodec::analyze(const Raster& raster) const {
  const Tensor x = pad_to_multiple(raster_to_tensor(raster), TransformSpec::kStride);
  LatentCode code;
  code.symbols = quantize_infer(analysis_forward(x));
  const Tensor& q = code.symbols;
  const int ma = spec_.prior_channels();
  double bits = 0.0;
  for (int c = 0; c < ma; ++c)
    for (int i = 0; i < q.h(); ++i)
      for (int j = 0; j < q.w(); ++j) bits -= std::log2(prior_.pmf(params_, c, q.at(0, c, i, j)));
  if (spec_.variant == EntropyVariant::gmm) {
    const Tensor hv = head_forward(slice(q, 0, ma));
    for (int c = 0; c < spec_.mixture_channels(); ++c)
      for (int i = 0; i < q.h(); ++i)
        for (int j = 0; j < q.w(); ++j)
          bits -= std::log2(mixture_pmf(static_cast<int>(q.at(0, ma + c, i, j)), mixture_params_at(hv, spec_.mixtures, 0, c, i, j)));
  }
  code.estimated_bits = bits;
  return code;
}

Raster LearnedCodec::reconstruct(const Raster& raster) const {
  const LatentCode code = analyze(raster);
  const Tensor out = synthesis_forward(code.symbols);
  Raster full = tensor_to_raster(out);
  if (full.height == raster.height && full.width == raster.width) return full;
  Raster r(raster.height, raster.width, raster.channels);
  for (int i = 0; i < r.height; ++i)
    for (int j = 0; j < r.width; ++j)
      for (int c = 0; c < r.channels; ++c) r.at(i, j, c) = full.at(i, j, c);
  return r;
}

std::vector<std::uint8_t> LearnedCodec::encode(const Raster& raster) const {
  const LatentCode code = analyze(raster);
  const Tensor& q = code.symbols;
  const int ma = spec_.prior_channels();
  RangeEncoder enc;
  for (int c = 0; c < ma; ++c) {
    const SymbolTable table = prior_.table(params_, c);
    for (int i = 0; i < q.h(); ++i)
      for (int j = 0; j < q.w(); ++j) encode_symbol(enc, table, static_cast<int>(q.at(0, c, i, j)));
  }
  if (spec_.variant == EntropyVariant::gmm) {
    const Tensor hv = head_forward(slice(q, 0, ma));
    for (int c = 0; c < spec_.mixture_channels(); ++c)
      for (int i = 0; i < q.h(); ++i)
        for (int j = 0; j < q.w(); ++j)
          encode_symbol(enc, mixture_table(mixture_params_at(hv, spec_.mixtures, 0, c, i, j)), static_cast<int>(q.at(0, ma + c, i, j)));
  }
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(spec_.variant));
  w.u8(static_cast<std::uint8_t>(spec_.mixtures));
  w.u32(static_cast<std::uint32_t>(q.h()));
  w.u32(static_cast<std::uint32_t>(q.w()));
  w.u32(static_cast<std::uint32_t>(spec_.latent_channels));
  w.u32(static_cast<std::uint32_t>(ma));
  w.u32(static_cast<std::uint32_t>(kSupportBound));
  w.u64(model_id());
  Container c;
  c.codec = CodecId::learned;
  c.height = static_cast<std::uint32_t>(raster.height);
  c.width = static_cast<std::uint32_t>(raster.width);
  c.channels = static_cast<std::uint32_t>(raster.channels);
  c.params = w.take();
  c.payload = enc.finish();
  return serialize_container(c);
}

Raster LearnedCodec::decode(std::span<const std::uint8_t> bytes) const {
  const Container c = parse_container(bytes);
  if (c.codec != CodecId::learned) throw FormatError("not a learned-codec bitstream");
  ByteReader r(c.params);
  const auto variant = static_cast<EntropyVariant>(r.u8());
  const int mixtures = r.u8();
  const int lh = static_cast<int>(r.u32()), lw = static_cast<int>(r.u32());
  const int m = static_cast<int>(r.u32()), ma = static_cast<int>(r.u32());
  const int bound = static_cast<int>(r.u32());
  const std::uint64_t id = r.u64();
  if (variant != spec_.variant || mixtures != spec_.mixtures || m != spec_.latent_channels || ma != spec_.prior_channels() ||
      bound != kSupportBound)
    throw FormatError("bitstream entropy-model layout does not match the model");
  if (id != model_id()) throw FormatError("bitstream was produced by a different model");
  if (static_cast<int>(c.channels) != spec_.in_channels) throw FormatError("channel count does not match the model");
  const int ph = (static_cast<int>(c.height) + TransformSpec::kStride - 1) / TransformSpec::kStride;
  const int pw = (static_cast<int>(c.width) + TransformSpec::kStride - 1) / TransformSpec::kStride;
  if (lh != ph || lw != pw) throw FormatError("latent dims do not match the image size");

  Tensor q(1, m, lh, lw);
  RangeDecoder dec(c.payload.bytes);
  for (int ch = 0; ch < ma; ++ch) {
    const SymbolTable table = prior_.table(params_, ch);
    for (int i = 0; i < lh; ++i)
      for (int j = 0; j < lw; ++j) q.at(0, ch, i, j) = decode_symbol(dec, table);
  }
  if (spec_.variant == EntropyVariant::gmm) {
    const Tensor hv = head_forward(slice(q, 0, ma));
    for (int ch = 0; ch < spec_.mixture_channels(); ++ch)
      for (int i = 0; i < lh; ++i)
        for (int j = 0; j < lw; ++j)
          q.at(0, ma + ch, i, j) = decode_symbol(dec, mixture_table(mixture_params_at(hv, spec_.mixtures, 0, ch, i, j)));
  }
  if (!dec.exhausted()) throw FormatError("corrupted stream");
  const Raster full = tensor_to_raster(synthesis_forward(q));
  Raster out(static_cast<int>(c.height), static_cast<int>(c.width), static_cast<int>(c.channels));
  for (int i = 0; i < out.height; ++i)
    for (int j = 0; j < out.width; ++j)
      for (int ch = 0; ch < out.channels; ++ch) out.at(i, j, ch) = full.at(i, j, ch);
  return out;
}

nlohmann::json codec_meta(const LearnedCodec& codec) {
  return {{"kind", "learned_codec"}, {"spec", codec.spec().to_json()}, {"model_id", hex64(codec.model_id())}};
}

void save_codec(const std::string& path, const LearnedCodec& codec, nlohmann::json extra) {
  nlohmann::json meta = codec_meta(codec);
  meta["provenance"] = std::move(extra);
  save_checkpoint(path, meta, codec.params());
}

LearnedCodec load_codec(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.meta.value("kind", "") != "learned_codec") throw FormatError(path + " is not a learned-codec checkpoint");
  return LearnedCodec(TransformSpec::from_json(ck.meta.at("spec")), std::move(ck.params));
}

}  // namespace tcb
