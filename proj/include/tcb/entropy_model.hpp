#pragma once

#include <string>
#include <vector>

#include "tcb/autograd.hpp"
#include "tcb/range_coder.hpp"
#include "tcb/rng.hpp"

namespace tcb {

inline constexpr double kScaleFloor = 0.11;
inline constexpr double kPmfFloor = 1e-9;
/// Largest |symbol| covered by a coding window; values beyond it escape.
inline constexpr int kSupportBound = 511;

/// Standard normal CDF through erfc, accurate in both tails.
double std_normal_cdf(double z);

/// Mass of N(mu, sigma^2) on [y - 1/2, y + 1/2], floored at kPmfFloor.
double discretized_gaussian_pmf(int y, double mu, double sigma);

struct MixtureParams {
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> scales;

  int components() const { return static_cast<int>(weights.size()); }
  /// Throws ConfigError on size mismatch, weights off the simplex, scales
  /// below the floor or non-finite values.
  void validate() const;
};

double mixture_pmf(int y, const MixtureParams& params);

/// -log2 of the (floored) mixture pmf and its partial derivatives. Inside the
/// floor the derivatives are exactly zero.
struct MixtureRate {
  double bits = 0.0;
  double d_y = 0.0;
  std::vector<double> d_means, d_scales, d_weights;
};
/// Rate of a real-valued y, which lets the noise proxy y + u carry gradient.
MixtureRate mixture_rate(double y, const MixtureParams& params);

/// Sum over elements of -log2 p(symbol_i | params_i).
double rate_bits(std::span<const int> symbols, std::span<const MixtureParams> params);

/// y + u with u ~ U(-1/2, 1/2) drawn per element.
Tensor quantize_train(const Tensor& y, Rng& rng);
/// Round half away from zero.
inline double quantize_infer(double y) { return std::round(y); }
Tensor quantize_infer(const Tensor& y);

/// Coding table for one latent element: symbols lo..hi map to indices
/// 0..hi-lo and index hi-lo+1 is the escape for values outside the window.
struct SymbolTable {
  int lo = 0;
  int hi = 0;
  CdfTable cdf;

  int escape() const { return hi - lo + 1; }
  /// Code-length of v in bits, including raw escape bits.
  double cost_bits(int v) const;
};

/// Window round(mu_k) +- max(16 sigma_k, 8) over all components, clamped to
/// +-kSupportBound.
SymbolTable mixture_table(const MixtureParams& params);
void encode_symbol(RangeEncoder& enc, const SymbolTable& table, int v);
int decode_symbol(RangeDecoder& dec, const SymbolTable& table);

/// Mixture head output layout for K components and m latent channels:
/// channels [0, K m) weight logits, [K m, 2 K m) means, [2 K m, 3 K m) raw
/// scales, channel k * m + c for component k of latent channel c.
/// sigma = kScaleFloor + softplus(raw), weights = softmax(logits).
MixtureParams mixture_params_at(const Tensor& head, int k_components, int n, int c, int i, int j);

namespace ops {
/// Total bits of y (N x m x h x w) under the per-element mixture predicted by
/// `head` (N x 3 K m x h x w). Differentiable in both.
Var mixture_rate_bits(Var y, Var head, int k_components);
}  // namespace ops

/// Per-channel learned monotone CDF (filters 1-3-3-1): each layer computes
/// softplus(H) z + b, hidden layers add tanh(a) * tanh(.).
class FactorizedPrior {
 public:
  FactorizedPrior() = default;
  FactorizedPrior(std::string prefix, int channels) : prefix_(std::move(prefix)), channels_(channels) {}

  void init_params(ParamStore& store, Rng& rng) const;
  int channels() const { return channels_; }
  const std::string& prefix() const { return prefix_; }

  /// Logit of the CDF of channel c at x.
  double logit(const ParamStore& store, int c, double x) const;
  double cdf(const ParamStore& store, int c, double x) const;
  /// Mass on [y - 1/2, y + 1/2], floored at kPmfFloor.
  double pmf(const ParamStore& store, int c, double y) const;
  /// Sum of -log2 pmf over all elements of y (N x channels x h x w).
  double rate_bits(const ParamStore& store, const Tensor& y) const;
  /// Differentiable rate; gradients flow to y and to the prior parameters.
  Var rate(Graph& g, Var y, ParamStore& store) const;
  /// Coding table of channel c: the window keeps all symbols whose
  /// neighbourhood carries mass above 1e-7 in either tail.
  SymbolTable table(const ParamStore& store, int c) const;

  static constexpr int kLayers = 3;

 private:
  std::string name(const char* kind, int layer) const;
  std::string prefix_;
  int channels_ = 0;
};

}  // namespace tcb
