#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcb/learned_codec.hpp"
#include "tcb/raster.hpp"
#include "tcb/segmenter.hpp"

namespace tcb {

struct TrainConfig {
  double lambda = 1.0;
  double gamma = 0.0;
  double lr = 2e-3;      // autoencoder and mixture head
  double lr_aux = 2e-4;  // factorized prior
  double lr_seg = 1e-3;  // segmenter, joint mode only
  int batch_size = 8;
  int max_epochs = 10;
  int patience = 3;
  std::uint64_t seed = 0;
  Quality quality = Quality::low;
  double val_fraction = 0.2;
  /// MSE is measured on [0, 1] samples and multiplied by this before entering
  /// the loss, i.e. the distortion term is the MSE on an 8-bit scale.
  double distortion_scale = 255.0 * 255.0;
  int hidden_channels = 32;  // 0 keeps the quality preset
  int head_channels = 32;
  EntropyVariant variant = EntropyVariant::gmm;
  bool freeze_compressor = false;
  bool freeze_segmenter = false;

  bool standalone() const { return gamma == 0.0; }
  /// Batch size must be one of 4, 8, 16, 32.
  void validate() const;
  TransformSpec transform_spec(int in_channels) const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct LossBreakdown {
  double total = 0.0;
  double distortion = 0.0;  // scaled MSE
  double rate = 0.0;        // bits per spatial pixel
  double task = 0.0;        // mean BCE
};

/// total = lambda * distortion + rate + gamma * task, evaluated exactly.
LossBreakdown compose_loss(double distortion, double rate, double task, double lambda, double gamma);

/// Loss of one batch from tensors. rate_bits is the total over the batch;
/// logits may be null when gamma is 0.
LossBreakdown loss_total(const Tensor& x, const Tensor& x_hat, double rate_bits, const Tensor* logits,
                         const Tensor* mask, double lambda, double gamma, double distortion_scale);

/// Training objective of one batch on a graph. The segmenter term is added
/// when a segmenter is given; `parts` holds the values of the three terms.
struct LossGraph {
  Var loss;
  LossBreakdown parts;
};
LossGraph build_loss(Graph& g, LearnedCodec& codec, UNet* segmenter, const Tensor& x, const Tensor* mask,
                     const TrainConfig& config, Rng& noise);

/// Real-bitstream evaluation of a codec on a subset of a dataset.
struct EvalMetrics {
  double bpp = 0.0;      // payload bits over spatial pixels, pooled
  double psnr_db = 0.0;  // from the pooled MSE
  double mse = 0.0;
  double estimated_bpp = 0.0;  // the model's own rate estimate, pooled
  std::optional<F1Scores> f1;  // segmenter on decoded images
};

EvalMetrics evaluate_codec(const LearnedCodec& codec, const UNet* segmenter, const std::vector<Sample>& data,
                           const std::vector<int>& indices);

struct EpochRecord {
  int epoch = 0;
  LossBreakdown train;  // means over the epoch's batches
  double val_total = 0.0;
  EvalMetrics val;
};

struct TrainResult {
  LearnedCodec codec;              // best validation epoch
  std::optional<UNet> segmenter;   // joint mode only
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_total = 0.0;
};

/// Standalone rate-distortion training (gamma must be 0). Starts from `init`
/// when given, otherwise from a seeded initialization. Writes config.json,
/// history.csv and compressor.tckpt to run_dir when it is not empty.
TrainResult train_compressor(const std::vector<Sample>& data, const TrainConfig& config,
                             const std::string& run_dir = "", const LearnedCodec* init = nullptr);

struct Scenario {
  std::string name;
  std::string compressor_checkpoint;
  std::string segmenter_checkpoint;
  double lambda = 10.0;
  double gamma = 1e-3;
};

struct JointResult {
  TrainResult train;
  EvalMetrics prior;
  EvalMetrics post;
};

/// Joint compression and segmentation training from pretrained checkpoints.
/// The scenario's weights override lambda and gamma of the config. gamma 0 is
/// accepted only with a frozen segmenter. Writes compressor.tckpt and
/// segmenter.tckpt next to the history.
JointResult train_joint(const std::vector<Sample>& data, const Scenario& scenario, const TrainConfig& config,
                        const std::string& run_dir = "");

struct GridSpace {
  std::vector<double> lambdas;
  std::vector<int> batch_sizes;
  std::vector<double> gammas{0.0};
  std::vector<double> lrs;  // empty keeps the base learning rate
  int epochs = 2;
};

struct GridCell {
  int index = 0;
  TrainConfig config;
  std::string run_dir;
  bool completed = false;
  std::string error;
  double best_val_total = 0.0;
  EvalMetrics best;
};

struct GridResult {
  std::vector<GridCell> cells;  // Cartesian order
  std::vector<int> ranking;     // completed cells, best validation total first
};

/// Every cell of the grid at reduced epochs, standalone compression only.
/// Cells run on up to `jobs` workers with disjoint run directories
/// out_dir/cell_NNN; manifest.json lists every cell and the ranking.
GridResult grid_search(const std::vector<Sample>& data, const GridSpace& space, const TrainConfig& base,
                       const std::string& out_dir, int jobs = 1);

std::string history_csv(const std::vector<EpochRecord>& history);
nlohmann::json metrics_json(const EvalMetrics& m);

}  // namespace tcb
