#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcb/dwt.hpp"
#include "tcb/raster.hpp"
#include "tcb/segmenter.hpp"
#include "tcb/trainer.hpp"

namespace tcb {

enum class CodecKind { classic, learned };
std::string to_string(CodecKind k);
CodecKind parse_codec_kind(const std::string& s);

struct SweepSpec {
  CodecKind codec = CodecKind::classic;
  std::vector<double> steps;              // classic: quantization steps, one point each
  std::vector<std::string> checkpoints;   // learned: one trained codec per point
  int levels = 0;                         // classic: 0 picks default_levels
  WaveletKernel kernel = WaveletKernel::float9_7;
  bool retrain_segmenter = true;          // false fine-tunes the baseline segmenter
  UNetSpec unet;
  SegTrainConfig seg;
  int jobs = 1;

  int points() const;
  /// At least two sweep points of the selected codec.
  void validate() const;
  nlohmann::json to_json() const;
  /// Configuration of a single point; its hash identifies the report row.
  nlohmann::json point_json(int i) const;
};

struct ReportRow {
  std::string label;
  double param = 0.0;  // quantization step, or the lambda of the checkpoint
  RdPoint point;
  std::string config_hash;
};

struct Report {
  std::string kind;  // "rd" or "seg"
  std::string codec;
  std::string config_hash;
  std::string dataset_checksum;
  double wall_clock_s = 0.0;
  std::optional<RdPoint> baseline;  // uncompressed segmentation reference
  std::vector<ReportRow> rows;
};

/// Encode and decode every image with real bitstreams; one row per sweep
/// point with pooled bpp and PSNR.
Report run_rd_sweep(const SweepSpec& spec, const std::vector<Sample>& data);

/// Segmenter trained on uncompressed data as the baseline, then one segmenter
/// per sweep point trained (or fine-tuned) on decoded images.
Report run_seg_under_compression(const SweepSpec& spec, const std::vector<Sample>& data);

/// PSNR of the classic codec at a target bpp, found by bisecting the
/// quantization step on a log scale. Returns (bpp, PSNR, step).
struct MatchedPoint {
  double bpp = 0.0;
  double psnr_db = 0.0;
  double step = 0.0;
};
MatchedPoint classic_at_bpp(const std::vector<Sample>& data, double target_bpp, int levels = 0,
                            WaveletKernel kernel = WaveletKernel::float9_7);

/// Pooled bpp/PSNR of the classic codec at one step.
RdPoint classic_point(const std::vector<Sample>& data, double step, int levels = 0,
                      WaveletKernel kernel = WaveletKernel::float9_7);

struct ScenarioConfig {
  TrainConfig train;           // shared settings: epochs, batch, learning rates, seed
  int pretrain_epochs = 20;
  int joint_epochs = 10;
  double high_lambda = 10.0;   // pretraining and joint weight, high-quality start
  double high_gamma = 1e-3;
  double low_pretrain_lambda = 1e-4;
  double low_lambda = 10.0;
  double low_gamma = 1e-2;
  UNetSpec unet;
  SegTrainConfig seg;

  nlohmann::json to_json() const;
};

struct ScenarioRow {
  std::string name;
  EvalMetrics prior;
  EvalMetrics post;
};

struct ScenarioTable {
  std::string config_hash;
  std::string dataset_checksum;
  std::vector<ScenarioRow> rows;  // high_quality_start, low_quality_start
};

/// Pretrain a segmenter and two compressors, then run both joint scenarios.
/// Every run directory lands under out_dir.
ScenarioTable run_scenarios(const std::vector<Sample>& data, const ScenarioConfig& config, const std::string& out_dir);
std::string scenarios_csv(const ScenarioTable& table);

enum class ReportFormat { csv, json, svg };
ReportFormat parse_report_format(const std::string& s);

std::string render_report(const Report& report, ReportFormat format);
/// Writes the report to `path`. Throws ConfigError("no sweep points") for an
/// empty report.
void emit_report(const Report& report, ReportFormat format, const std::string& path);
Report parse_report_csv(const std::string& text);
Report read_report(const std::string& path);

}  // namespace tcb
