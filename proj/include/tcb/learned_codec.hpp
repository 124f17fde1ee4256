#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcb/autograd.hpp"
#include "tcb/entropy_model.hpp"
#include "tcb/raster.hpp"
#include "tcb/rng.hpp"

namespace tcb {

enum class Quality { low, high };
std::string to_string(Quality q);
Quality parse_quality(const std::string& s);

enum class EntropyVariant : std::uint8_t { gmm = 0, factorized = 1 };
std::string to_string(EntropyVariant v);
EntropyVariant parse_entropy_variant(const std::string& s);

/// Shape of the learned codec. Three stride-2 stages give a stride product
/// of 8. With the gmm variant the first half of the latent channels is coded
/// with the factorized prior and conditions a mixture head for the rest.
struct TransformSpec {
  int in_channels = 1;
  int latent_channels = 32;
  int hidden_channels = 32;
  int head_channels = 32;
  int mixtures = 3;
  EntropyVariant variant = EntropyVariant::gmm;

  static constexpr int kStride = 8;
  static constexpr int kKernel = 5;

  /// Desk-scale mapping: low -> 32 latent channels, high -> 64.
  static TransformSpec for_quality(int in_channels, Quality q);
  void validate() const;
  int prior_channels() const { return variant == EntropyVariant::gmm ? latent_channels / 2 : latent_channels; }
  int mixture_channels() const { return latent_channels - prior_channels(); }
  nlohmann::json to_json() const;
  static TransformSpec from_json(const nlohmann::json& j);
};

/// Latents of one image after rounding, with the model's rate estimate.
struct LatentCode {
  Tensor symbols;  // 1 x m x h' x w', integer-valued
  double estimated_bits = 0.0;
};

class LearnedCodec {
 public:
  LearnedCodec(TransformSpec spec, std::uint64_t seed);
  /// Wrap trained parameters (e.g. from a checkpoint); shapes are validated.
  LearnedCodec(TransformSpec spec, ParamStore params);

  const TransformSpec& spec() const { return spec_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  /// Analysis, synthesis and mixture head: the main optimizer's parameters.
  std::vector<std::string> main_param_names() const;
  /// Factorized prior: the auxiliary optimizer's parameters.
  std::vector<std::string> aux_param_names() const;
  std::uint64_t model_id() const { return params_.checksum(); }

  struct TrainOutputs {
    Var x_hat;
    Var rate_bits;  // total over the batch
  };
  /// Noise-proxy forward pass. x: N x C x H x W with H, W multiples of 8.
  TrainOutputs forward_train(Graph& g, const Tensor& x, Rng& noise);

  /// Real-valued latent of a batch (no rounding), N x m x H/8 x W/8.
  Tensor analysis_forward(const Tensor& x) const;
  /// Decoder output in [0, 1] from (rounded) latents.
  Tensor synthesis_forward(const Tensor& y_hat) const;
  /// Mixture head output for the prior half of a latent.
  Tensor head_forward(const Tensor& y_prior) const;

  /// Round the latent of one raster (reflect-padded to a multiple of 8) and
  /// compute the model's rate estimate for it.
  LatentCode analyze(const Raster& raster) const;
  /// Reconstruction through rounded latents, cropped to the input size.
  Raster reconstruct(const Raster& raster) const;

  /// TCB1 container with real range-coded latents.
  std::vector<std::uint8_t> encode(const Raster& raster) const;
  Raster decode(std::span<const std::uint8_t> container) const;

 private:
  Var analysis(Graph& g, Var x, bool train);
  Var synthesis(Graph& g, Var y, bool train);
  Var head(Graph& g, Var y_prior, bool train);
  Var p(Graph& g, const std::string& name, bool train);
  void init_params(std::uint64_t seed);

  TransformSpec spec_;
  ParamStore params_;
  FactorizedPrior prior_;
};

/// Reflect-pad on the bottom/right to a multiple of `multiple`.
Tensor pad_to_multiple(const Tensor& x, int multiple);

nlohmann::json codec_meta(const LearnedCodec& codec);
void save_codec(const std::string& path, const LearnedCodec& codec, nlohmann::json extra = nlohmann::json::object());
LearnedCodec load_codec(const std::string& path);

}  // namespace tcb
