#include "tcb/entropy_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>

#include "tcb/error.hpp"

namespace tcb {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double normal_density(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

/// Unfloored Gaussian mass on [y - 1/2, y + 1/2]; both tails are evaluated
/// on the side where the CDF difference does not cancel.
double gaussian_mass(double y, double mu, double sigma) {
  const double u = (y + 0.5 - mu) / sigma;
  const double l = (y - 0.5 - mu) / sigma;
  if (u + l > 0) return 0.5 * (std::erfc(l * kInvSqrt2) - std::erfc(u * kInvSqrt2));
  return 0.5 * (std::erfc(-u * kInvSqrt2) - std::erfc(-l * kInvSqrt2));
}

int exp_golomb_length(std::uint32_t v) {
  const int nbits = std::bit_width(static_cast<std::uint64_t>(v) + 1);
  return 2 * nbits - 1;
}

}  // namespace

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }

double discretized_gaussian_pmf(int y, double mu, double sigma) {
  if (!std::isfinite(mu) || !std::isfinite(sigma)) throw ConfigError("non-finite Gaussian parameters");
  if (sigma < kScaleFloor) throw ConfigError("scale below floor");
  return std::max(gaussian_mass(y, mu, sigma), kPmfFloor);
}

void MixtureParams::validate() const {
  const std::size_t k = weights.size();
  if (k < 1 || k > 5 || means.size() != k || scales.size() != k) throw ConfigError("mixture needs 1 to 5 matching components");
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (!std::isfinite(weights[i]) || !std::isfinite(means[i]) || !std::isfinite(scales[i]))
      throw ConfigError("non-finite mixture parameters");
    if (weights[i] < 0) throw ConfigError("negative mixture weight");
    if (scales[i] < kScaleFloor) throw ConfigError("scale below floor");
    total += weights[i];
  }
  if (std::abs(total - 1.0) > 1e-6) throw ConfigError("mixture weights do not sum to 1");
}

double mixture_pmf(int y, const MixtureParams& params) {
  params.validate();
  double p = 0.0;
  for (int k = 0; k < params.components(); ++k) p += params.weights[k] * gaussian_mass(y, params.means[k], params.scales[k]);
  return std::max(p, kPmfFloor);
}

MixtureRate mixture_rate(double y, const MixtureParams& params) {
  const int kc = params.components();
  MixtureRate r;
  r.d_means.assign(kc, 0.0);
  r.d_scales.assign(kc, 0.0);
  r.d_weights.assign(kc, 0.0);
  std::vector<double> mass(kc);
  double p = 0.0;
  for (int k = 0; k < kc; ++k) {
    mass[k] = gaussian_mass(y, params.means[k], params.scales[k]);
    p += params.weights[k] * mass[k];
  }
  if (!(p > kPmfFloor)) {
    r.bits = -std::log2(kPmfFloor);
    return r;
  }
  r.bits = -std::log2(p);
  const double g = -1.0 / (p * std::numbers::ln2);
  for (int k = 0; k < kc; ++k) {
    const double s = params.scales[k];
    const double u = (y + 0.5 - params.means[k]) / s;
    const double l = (y - 0.5 - params.means[k]) / s;
    const double fu = normal_density(u), fl = normal_density(l);
    const double dmass_dy = (fu - fl) / s;
    const double dmass_ds = -(u * fu - l * fl) / s;
    r.d_y += g * params.weights[k] * dmass_dy;
    r.d_means[k] = -g * params.weights[k] * dmass_dy;
    r.d_scales[k] = g * params.weights[k] * dmass_ds;
    r.d_weights[k] = g * mass[k];
  }
  return r;
}

double rate_bits(std::span<const int> symbols, std::span<const MixtureParams> params) {
  if (symbols.size() != params.size()) throw ConfigError("rate_bits: one parameter set per symbol");
  double bits = 0.0;
  for (std::size_t i = 0; i < symbols.size(); ++i) bits -= std::log2(mixture_pmf(symbols[i], params[i]));
  return bits;
}

Tensor quantize_train(const Tensor& y, Rng& rng) {
  Tensor out = y;
  for (double& v : out.values()) v += rng.uniform() - 0.5;
  return out;
}

Tensor quantize_infer(const Tensor& y) {
  Tensor out = y;
  for (double& v : out.values()) v = std::round(v);
  return out;
}

double SymbolTable::cost_bits(int v) const {
  if (v >= lo && v <= hi) return cdf.cost_bits(v - lo);
  const std::uint32_t offset = static_cast<std::uint32_t>(v < lo ? lo - 1 - v : v - hi - 1);
  return cdf.cost_bits(escape()) + 1.0 + exp_golomb_length(offset);
}

SymbolTable mixture_table(const MixtureParams& params) {
  params.validate();
  int lo = kSupportBound, hi = -kSupportBound;
  for (int k = 0; k < params.components(); ++k) {
    const double center = std::clamp(std::round(params.means[k]), -2.0 * kSupportBound, 2.0 * kSupportBound);
    const double half = std::ceil(std::max(16.0 * params.scales[k], 8.0));
    lo = std::min(lo, static_cast<int>(std::clamp(center - half, -1.0 * kSupportBound, 1.0 * kSupportBound)));
    hi = std::max(hi, static_cast<int>(std::clamp(center + half, -1.0 * kSupportBound, 1.0 * kSupportBound)));
  }
  SymbolTable t;
  t.lo = lo;
  t.hi = hi;
  std::vector<double> pmf(hi - lo + 2);
  double total = 0.0;
  for (int y = lo; y <= hi; ++y) {
    double p = 0.0;
    for (int k = 0; k < params.components(); ++k) p += params.weights[k] * gaussian_mass(y, params.means[k], params.scales[k]);
    pmf[y - lo] = std::max(p, kPmfFloor);
    total += pmf[y - lo];
  }
  pmf.back() = std::max(1.0 - total, kPmfFloor);
  t.cdf = build_cdf(pmf);
  return t;
}

void encode_symbol(RangeEncoder& enc, const SymbolTable& table, int v) {
  if (v >= table.lo && v <= table.hi) {
    enc.encode(table.cdf, v - table.lo);
    return;
  }
  enc.encode(table.cdf, table.escape());
  if (v < table.lo) {
    enc.encode_bits(0, 1);
    enc.encode_exp_golomb(static_cast<std::uint32_t>(table.lo - 1 - v));
  } else {
    enc.encode_bits(1, 1);
    enc.encode_exp_golomb(static_cast<std::uint32_t>(v - table.hi - 1));
  }
}

int decode_symbol(RangeDecoder& dec, const SymbolTable& table) {
  const int s = dec.decode(table.cdf);
  if (s < table.escape()) return table.lo + s;
  const bool above = dec.decode_bits(1) != 0;
  const std::uint32_t offset = dec.decode_exp_golomb();
  if (offset > (1u << 30)) throw FormatError("corrupted stream");
  return above ? table.hi + 1 + static_cast<int>(offset) : table.lo - 1 - static_cast<int>(offset);
}

MixtureParams mixture_params_at(const Tensor& head, int k_components, int n, int c, int i, int j) {
  const int m = head.c() / (3 * k_components);
  MixtureParams p;
  p.weights.resize(k_components);
  p.means.resize(k_components);
  p.scales.resize(k_components);
  double mx = -INFINITY;
  for (int k = 0; k < k_components; ++k) mx = std::max(mx, head.at(n, k * m + c, i, j));
  double z = 0.0;
  for (int k = 0; k < k_components; ++k) {
    p.weights[k] = std::exp(head.at(n, k * m + c, i, j) - mx);
    z += p.weights[k];
    p.means[k] = head.at(n, (k_components + k) * m + c, i, j);
    p.scales[k] = kScaleFloor + softplus(head.at(n, (2 * k_components + k) * m + c, i, j));
  }
  for (double& w : p.weights) w /= z;
  return p;
}

namespace ops {

Var mixture_rate_bits(Var y, Var head, int k_components) {
  Graph& g = *y.graph;
  const Tensor& yv = y.value();
  const Tensor& hv = head.value();
  if (k_components < 1 || k_components > 5) throw ConfigError("mixture components must be in [1, 5]");
  if (hv.n() != yv.n() || hv.h() != yv.h() || hv.w() != yv.w() || hv.c() != 3 * k_components * yv.c())
    throw ConfigError("mixture head " + hv.shape_string() + " does not match latent " + yv.shape_string());
  double bits = 0.0;
  for (int n = 0; n < yv.n(); ++n)
    for (int c = 0; c < yv.c(); ++c)
      for (int i = 0; i < yv.h(); ++i)
        for (int j = 0; j < yv.w(); ++j)
          bits += mixture_rate(yv.at(n, c, i, j), mixture_params_at(hv, k_components, n, c, i, j)).bits;
  if (!std::isfinite(bits)) throw DivergenceError("non-finite rate");
  return g.record(Tensor::scalar(bits), {y, head}, [y, head, k_components](Graph& g, const Tensor&, const Tensor& go) {
    const Tensor& yv = g.value(y);
    const Tensor& hv = g.value(head);
    Tensor* gy = g.requires_grad(y) ? &g.grad_buffer(y) : nullptr;
    Tensor* gh = g.requires_grad(head) ? &g.grad_buffer(head) : nullptr;
    const int m = yv.c();
    const int kc = k_components;
    for (int n = 0; n < yv.n(); ++n)
      for (int c = 0; c < m; ++c)
        for (int i = 0; i < yv.h(); ++i)
          for (int j = 0; j < yv.w(); ++j) {
            const MixtureParams p = mixture_params_at(hv, kc, n, c, i, j);
            const MixtureRate r = mixture_rate(yv.at(n, c, i, j), p);
            if (gy) gy->at(n, c, i, j) += go[0] * r.d_y;
            if (!gh) continue;
            double wd = 0.0;
            for (int k = 0; k < kc; ++k) wd += p.weights[k] * r.d_weights[k];
            for (int k = 0; k < kc; ++k) {
              gh->at(n, k * m + c, i, j) += go[0] * p.weights[k] * (r.d_weights[k] - wd);
              gh->at(n, (kc + k) * m + c, i, j) += go[0] * r.d_means[k];
              const double raw = hv.at(n, (2 * kc + k) * m + c, i, j);
              gh->at(n, (2 * kc + k) * m + c, i, j) += go[0] * r.d_scales[k] * tcb::sigmoid(raw);
            }
          }
  });
}

}  // namespace ops

// ---------------------------------------------------------------------------
// Factorized prior

namespace {

constexpr int kIn[FactorizedPrior::kLayers] = {1, 3, 3};
constexpr int kOut[FactorizedPrior::kLayers] = {3, 3, 1};

/// Transformed parameters of one channel.
struct ChannelView {
  double sh[3][9];   // softplus(H)
  double dsh[3][9];  // sigmoid(H)
  double b[3][3];
  double ta[2][3];   // tanh(a)
};

/// Intermediate values of one evaluation, kept for the backward pass.
struct Trace {
  double z[4][3];  // layer inputs; z[3][0] is the logit
  double v[3][3];  // pre-gate values
};

struct ChannelGrad {
  double h[3][9] = {};
  double b[3][3] = {};
  double a[2][3] = {};
};

double eval(const ChannelView& p, double x, Trace& t) {
  t.z[0][0] = x;
  for (int k = 0; k < FactorizedPrior::kLayers; ++k)
    for (int o = 0; o < kOut[k]; ++o) {
      double v = p.b[k][o];
      for (int i = 0; i < kIn[k]; ++i) v += p.sh[k][o * kIn[k] + i] * t.z[k][i];
      t.v[k][o] = v;
      t.z[k + 1][o] = k + 1 < FactorizedPrior::kLayers ? v + p.ta[k][o] * std::tanh(v) : v;
    }
  return t.z[3][0];
}

/// Accumulate d(logit)/d(params) * dlogit into grad; returns d(logit)/dx * dlogit.
double eval_backward(const ChannelView& p, const Trace& t, double dlogit, ChannelGrad& grad) {
  double dz[3] = {dlogit, 0, 0};
  for (int k = FactorizedPrior::kLayers - 1; k >= 0; --k) {
    double dv[3];
    for (int o = 0; o < kOut[k]; ++o) {
      if (k + 1 < FactorizedPrior::kLayers) {
        const double th = std::tanh(t.v[k][o]);
        dv[o] = dz[o] * (1.0 + p.ta[k][o] * (1.0 - th * th));
        grad.a[k][o] += dz[o] * th;
      } else {
        dv[o] = dz[o];
      }
      grad.b[k][o] += dv[o];
    }
    double dprev[3] = {0, 0, 0};
    for (int o = 0; o < kOut[k]; ++o)
      for (int i = 0; i < kIn[k]; ++i) {
        grad.h[k][o * kIn[k] + i] += dv[o] * t.z[k][i];
        dprev[i] += p.sh[k][o * kIn[k] + i] * dv[o];
      }
    for (int i = 0; i < 3; ++i) dz[i] = dprev[i];
  }
  return dz[0];
}

/// -log2 of the floored bin mass around x and, unless floored, the
/// derivatives of the bits with respect to the logits at x +- 1/2.
struct BinRate {
  double bits;
  double d_upper;
  double d_lower;
};

BinRate bin_rate(double f_upper, double f_lower) {
  const double s = (f_upper + f_lower > 0) ? -1.0 : 1.0;
  const double p = std::abs(sigmoid(s * f_upper) - sigmoid(s * f_lower));
  if (!(p > kPmfFloor)) return {-std::log2(kPmfFloor), 0.0, 0.0};
  const double g = -1.0 / (p * std::numbers::ln2);
  const double su = sigmoid(f_upper) * sigmoid(-f_upper);
  const double sl = sigmoid(f_lower) * sigmoid(-f_lower);
  return {-std::log2(p), g * su, -g * sl};
}

}  // namespace

std::string FactorizedPrior::name(const char* kind, int layer) const { return prefix_ + kind + std::to_string(layer); }

void FactorizedPrior::init_params(ParamStore& store, Rng& rng) const {
  constexpr double kInitScale = 1.0;
  const double scale = std::pow(kInitScale, 1.0 / kLayers);
  for (int k = 0; k < kLayers; ++k) {
    const double h0 = std::log(std::expm1(1.0 / scale / kOut[k]));
    store.add(name("H", k), Tensor(channels_, kOut[k], kIn[k], 1, h0), "constant log(expm1(1/(scale*out)))");
    Tensor b(channels_, kOut[k], 1, 1);
    for (double& v : b.values()) v = rng.uniform(-0.5, 0.5);
    store.add(name("b", k), std::move(b), "uniform(-0.5,0.5)");
    if (k + 1 < kLayers) store.add(name("a", k), Tensor(channels_, kOut[k], 1, 1), "zeros");
  }
}

namespace {

ChannelView channel_view(const FactorizedPrior& prior, const ParamStore& store, int c) {
  ChannelView v{};
  for (int k = 0; k < FactorizedPrior::kLayers; ++k) {
    const Tensor& h = store.at(prior.prefix() + "H" + std::to_string(k)).value;
    const Tensor& b = store.at(prior.prefix() + "b" + std::to_string(k)).value;
    for (int e = 0; e < kOut[k] * kIn[k]; ++e) {
      const double raw = h[static_cast<std::size_t>(c) * kOut[k] * kIn[k] + e];
      v.sh[k][e] = softplus(raw);
      v.dsh[k][e] = sigmoid(raw);
    }
    for (int o = 0; o < kOut[k]; ++o) v.b[k][o] = b[static_cast<std::size_t>(c) * kOut[k] + o];
    if (k + 1 < FactorizedPrior::kLayers) {
      const Tensor& a = store.at(prior.prefix() + "a" + std::to_string(k)).value;
      for (int o = 0; o < kOut[k]; ++o) v.ta[k][o] = std::tanh(a[static_cast<std::size_t>(c) * kOut[k] + o]);
    }
  }
  return v;
}

}  // namespace

double FactorizedPrior::logit(const ParamStore& store, int c, double x) const {
  Trace t;
  return eval(channel_view(*this, store, c), x, t);
}

double FactorizedPrior::cdf(const ParamStore& store, int c, double x) const { return sigmoid(logit(store, c, x)); }

double FactorizedPrior::pmf(const ParamStore& store, int c, double y) const {
  const ChannelView v = channel_view(*this, store, c);
  Trace t;
  const double fu = eval(v, y + 0.5, t);
  const double fl = eval(v, y - 0.5, t);
  const double s = (fu + fl > 0) ? -1.0 : 1.0;
  return std::max(std::abs(sigmoid(s * fu) - sigmoid(s * fl)), kPmfFloor);
}

double FactorizedPrior::rate_bits(const ParamStore& store, const Tensor& y) const {
  if (y.c() != channels_) throw ConfigError("factorized prior channel mismatch");
  double bits = 0.0;
  const std::size_t plane = static_cast<std::size_t>(y.h()) * y.w();
  for (int c = 0; c < channels_; ++c) {
    const ChannelView v = channel_view(*this, store, c);
    Trace t;
    for (int n = 0; n < y.n(); ++n) {
      const double* src = y.image(n) + c * plane;
      for (std::size_t e = 0; e < plane; ++e) {
        const double fu = eval(v, src[e] + 0.5, t);
        const double fl = eval(v, src[e] - 0.5, t);
        bits += bin_rate(fu, fl).bits;
      }
    }
  }
  return bits;
}

Var FactorizedPrior::rate(Graph& g, Var y, ParamStore& store) const {
  if (y.value().c() != channels_) throw ConfigError("factorized prior channel mismatch");
  std::vector<Var> inputs{y};
  std::vector<Var> h, b, a;
  for (int k = 0; k < kLayers; ++k) {
    h.push_back(g.param(store.at(name("H", k))));
    b.push_back(g.param(store.at(name("b", k))));
    inputs.push_back(h.back());
    inputs.push_back(b.back());
    if (k + 1 < kLayers) {
      a.push_back(g.param(store.at(name("a", k))));
      inputs.push_back(a.back());
    }
  }
  const double bits = rate_bits(store, y.value());
  if (!std::isfinite(bits)) throw DivergenceError("non-finite rate");
  const FactorizedPrior self = *this;
  return g.record(Tensor::scalar(bits), inputs, [self, y, h, b, a, &store](Graph& g, const Tensor&, const Tensor& go) {
    const Tensor& yv = g.value(y);
    Tensor* gy = g.requires_grad(y) ? &g.grad_buffer(y) : nullptr;
    const std::size_t plane = static_cast<std::size_t>(yv.h()) * yv.w();
    for (int c = 0; c < self.channels(); ++c) {
      const ChannelView v = channel_view(self, store, c);
      ChannelGrad cg;
      Trace tu, tl;
      for (int n = 0; n < yv.n(); ++n) {
        const double* src = yv.image(n) + c * plane;
        for (std::size_t e = 0; e < plane; ++e) {
          const double fu = eval(v, src[e] + 0.5, tu);
          const double fl = eval(v, src[e] - 0.5, tl);
          const BinRate r = bin_rate(fu, fl);
          if (r.d_upper == 0.0 && r.d_lower == 0.0) continue;
          const double dx = eval_backward(v, tu, go[0] * r.d_upper, cg) + eval_backward(v, tl, go[0] * r.d_lower, cg);
          if (gy) gy->image(n)[c * plane + e] += dx;
        }
      }
      for (int k = 0; k < kLayers; ++k) {
        if (g.requires_grad(h[k])) {
          Tensor& gh = g.grad_buffer(h[k]);
          for (int e = 0; e < kOut[k] * kIn[k]; ++e)
            gh[static_cast<std::size_t>(c) * kOut[k] * kIn[k] + e] += cg.h[k][e] * v.dsh[k][e];
        }
        if (g.requires_grad(b[k])) {
          Tensor& gb = g.grad_buffer(b[k]);
          for (int o = 0; o < kOut[k]; ++o) gb[static_cast<std::size_t>(c) * kOut[k] + o] += cg.b[k][o];
        }
        if (k + 1 < kLayers && g.requires_grad(a[k])) {
          Tensor& ga = g.grad_buffer(a[k]);
          for (int o = 0; o < kOut[k]; ++o)
            ga[static_cast<std::size_t>(c) * kOut[k] + o] += cg.a[k][o] * (1.0 - v.ta[k][o] * v.ta[k][o]);
        }
      }
    }
  });
}

SymbolTable FactorizedPrior::table(const ParamStore& store, int c) const {
  constexpr double kTail = 1e-7;
  const ChannelView v = channel_view(*this, store, c);
  Trace t;
  int lo = kSupportBound, hi = -kSupportBound;
  for (int y = -kSupportBound; y <= kSupportBound; ++y)
    if (sigmoid(eval(v, y + 0.5, t)) >= kTail) {
      lo = y;
      break;
    }
  for (int y = kSupportBound; y >= -kSupportBound; --y)
    if (sigmoid(-eval(v, y - 0.5, t)) >= kTail) {
      hi = y;
      break;
    }
  if (lo > hi) std::swap(lo, hi);
  SymbolTable table;
  table.lo = lo;
  table.hi = hi;
  std::vector<double> pmf(hi - lo + 2);
  double total = 0.0;
  for (int y = lo; y <= hi; ++y) {
    const double fu = eval(v, y + 0.5, t);
    const double fl = eval(v, y - 0.5, t);
    const double s = (fu + fl > 0) ? -1.0 : 1.0;
    pmf[y - lo] = std::max(std::abs(sigmoid(s * fu) - sigmoid(s * fl)), kPmfFloor);
    total += pmf[y - lo];
  }
  pmf.back() = std::max(1.0 - total, kPmfFloor);
  table.cdf = build_cdf(pmf);
  return table;
}

}  // namespace tcb
