#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcb/autograd.hpp"
#include "tcb/raster.hpp"

namespace tcb {

/// Plain convolutional U-Net: `depth` resolution levels, widths
/// base_width * 2^level, two 3x3 conv + ELU blocks per level, 2x2 average
/// pooling down, 2x2 stride-2 transposed conv up, skip concatenation at every
/// level, 1x1 head producing one logit per pixel. Convolutions use replicate
/// padding so border pixels see no artificial zeros.
struct UNetSpec {
  int in_channels = 1;
  int depth = 3;
  int base_width = 16;

  void validate() const;
  int width(int level) const { return base_width << level; }
  /// Spatial dims must be divisible by this.
  int multiple() const { return 1 << (depth - 1); }
  nlohmann::json to_json() const;
  static UNetSpec from_json(const nlohmann::json& j);
};

class UNet {
 public:
  UNet(UNetSpec spec, std::uint64_t seed);
  UNet(UNetSpec spec, const ParamStore& params);

  const UNetSpec& spec() const { return spec_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Logits N x 1 x H x W. With train == false parameters enter the graph as
  /// constants.
  Var forward(Graph& g, Var x, bool train);
  Tensor logits(const Tensor& x) const;
  /// Binary prediction at sigmoid > 0.5, i.e. logit > 0.
  Mask predict(const Raster& image) const;

 private:
  Var p(Graph& g, const std::string& name, bool train);
  Var block(Graph& g, Var x, const std::string& name, bool train);
  UNetSpec spec_;
  ParamStore params_;
};

struct SegTrainConfig {
  int max_epochs = 30;
  int patience = 5;
  int batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  bool augment = true;  // random flips and 90-degree rotations
  double val_fraction = 0.2;

  void validate() const;
  nlohmann::json to_json() const;
};

struct SegEpoch {
  int epoch = 0;
  double train_loss = 0.0;
  double val_f1_pos = 0.0;
  double val_f1_macro = 0.0;
};

struct SegTrainResult {
  UNet model;  // parameters of the best validation epoch
  std::vector<SegEpoch> history;
  int best_epoch = 0;
  F1Scores best_val;
};

struct Split {
  std::vector<int> train;
  std::vector<int> val;
};

/// Seeded shuffle of 0..n-1, the first round(n * (1 - val_fraction)) for
/// training. Throws ConfigError if either part would be empty.
Split split_dataset(int n, std::uint64_t seed, double val_fraction);

/// Flip / rotate image and mask together; `op` in [0, 8) indexes the
/// dihedral group (0 = identity).
Sample augment_sample(const Sample& s, int op);

/// Pooled confusion over a dataset, predictions at logit > 0.
F1Scores evaluate_segmenter(const UNet& net, const std::vector<Sample>& data, const std::vector<int>& indices);
F1Scores evaluate_segmenter(const UNet& net, const std::vector<Sample>& data);

/// One optimization epoch of BCE training over `indices` (in the order given).
/// Returns the mean batch loss.
double segmenter_epoch(UNet& net, class Adam& opt, const std::vector<Sample>& data, const std::vector<int>& indices,
                       int batch_size, bool augment, std::uint64_t seed, int epoch);

/// BCE training with early stopping on validation macro-F1. Deterministic
/// given the seed and the data. Starts from `init` (fine-tuning) when given.
SegTrainResult train_segmenter(const std::vector<Sample>& data, const UNetSpec& spec, const SegTrainConfig& config,
                               const UNet* init = nullptr);

void save_unet(const std::string& path, const UNet& net, nlohmann::json extra = nlohmann::json::object());
UNet load_unet(const std::string& path);

}  // namespace tcb
