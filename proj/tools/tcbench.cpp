// tcbench: command-line front end of the task-aware compression bench.
//
// Exit codes: 0 success, 1 I/O or format error, 2 configuration error,
// 3 numeric divergence during training.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "tcb/bench.hpp"
#include "tcb/bytes.hpp"
#include "tcb/checkpoint.hpp"
#include "tcb/classic_codec.hpp"
#include "tcb/container.hpp"
#include "tcb/dataset.hpp"
#include "tcb/error.hpp"
#include "tcb/learned_codec.hpp"
#include "tcb/segmenter.hpp"
#include "tcb/synth.hpp"
#include "tcb/trainer.hpp"

namespace fs = std::filesystem;
using namespace tcb;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string out;
  int jobs = 1;
};

void require_out(const Globals& g, const char* verb) {
  if (g.out.empty()) throw ConfigError(std::string(verb) + " needs --out");
}

void write_text(const std::string& path, const std::string& text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string task = "fire_like";
  std::string preset = "desk";
  int count = 100;
  int height = 0, width = 0, channels = 0;
  double positive_fraction = -1.0;
};

void run_synth(const Globals& g, const SynthArgs& a) {
  require_out(g, "synth");
  const SynthTask task = parse_synth_task(a.task);
  SynthSpec spec;
  if (a.preset == "desk") {
    spec = desk_preset(task, a.count, g.seed);
  } else if (a.preset == "full") {
    spec = full_preset(task, a.count, g.seed);
    std::cerr << "warning: full-size preset; generation and training will be slow\n";
  } else {
    throw ConfigError("unknown preset '" + a.preset + "' (expected desk or full)");
  }
  if (a.height > 0) spec.height = a.height;
  if (a.width > 0) spec.width = a.width;
  if (a.channels > 0) spec.channels = a.channels;
  if (a.positive_fraction >= 0.0) spec.positive_fraction_target = a.positive_fraction;
  spec.validate();
  const auto samples = generate(spec);
  write_dataset(g.out, samples, synth_spec_json(spec));
  std::cout << "wrote " << samples.size() << " samples to " << g.out << " (checksum "
            << hex64(dataset_checksum(samples)) << ")\n";
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::string mode = "compress";
  TrainConfig cfg;
  std::string quality = "low";
  std::string variant = "gmm";
  std::string compressor, segmenter;
  std::string scenario = "joint";
  bool lr_aux_set = false;
};

void print_epochs(const std::vector<EpochRecord>& history) {
  for (const EpochRecord& e : history)
    std::printf("epoch %3d  D %.4f  R %.4f  T %.4f  total %.4f  | val %.4f bpp  %.2f dB\n", e.epoch,
                e.train.distortion, e.train.rate, e.train.task, e.train.total, e.val.bpp, e.val.psnr_db);
}

void run_train(const Globals& g, TrainArgs a) {
  require_out(g, "train");
  a.cfg.seed = g.seed;
  a.cfg.quality = parse_quality(a.quality);
  a.cfg.variant = parse_entropy_variant(a.variant);
  if (!a.lr_aux_set) a.cfg.lr_aux = a.cfg.lr / 10.0;
  const auto data = read_dataset(a.data);
  if (a.mode == "compress") {
    const TrainResult r = train_compressor(data, a.cfg, g.out);
    print_epochs(r.history);
    std::cout << "best epoch " << r.best_epoch << ", checkpoint " << (fs::path(g.out) / "compressor.tckpt").string()
              << "\n";
  } else if (a.mode == "joint") {
    const Scenario sc{a.scenario, a.compressor, a.segmenter, a.cfg.lambda, a.cfg.gamma};
    const JointResult r = train_joint(data, sc, a.cfg, g.out);
    print_epochs(r.train.history);
    std::cout << "prior " << metrics_json(r.prior).dump() << "\npost  " << metrics_json(r.post).dump() << "\n";
  } else {
    throw ConfigError("unknown mode '" + a.mode + "' (expected compress or joint)");
  }
}

// ---------------------------------------------------------------- train-seg

struct TrainSegArgs {
  std::string data;
  UNetSpec unet;
  SegTrainConfig cfg;
  bool no_augment = false;
};

void run_train_seg(const Globals& g, TrainSegArgs a) {
  require_out(g, "train-seg");
  a.cfg.seed = g.seed;
  a.cfg.augment = !a.no_augment;
  const auto data = read_dataset(a.data);
  a.unet.in_channels = data.at(0).image.channels;
  const SegTrainResult r = train_segmenter(data, a.unet, a.cfg);
  fs::create_directories(g.out);
  save_unet((fs::path(g.out) / "segmenter.tckpt").string(), r.model, {{"best_epoch", r.best_epoch}});
  std::string csv = "epoch,train_loss,val_f1_pos,val_f1_macro\n";
  char line[160];
  for (const SegEpoch& e : r.history) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss, e.val_f1_pos, e.val_f1_macro);
    csv += line;
  }
  write_text((fs::path(g.out) / "history.csv").string(), csv);
  const nlohmann::json config = {{"unet", a.unet.to_json()},
                                 {"config", a.cfg.to_json()},
                                 {"dataset_checksum", hex64(dataset_checksum(data))}};
  write_text((fs::path(g.out) / "config.json").string(), config.dump(2) + "\n");
  std::cout << "best epoch " << r.best_epoch << ": F1+ " << r.best_val.pos << ", macro-F1 " << r.best_val.macro << "\n";
}

// ---------------------------------------------------------------- compress / decompress

struct CodecArgs {
  std::string codec = "classic";
  double step = 1.0 / 64;
  int levels = 0;
  std::string kernel = "float9_7";
  std::string model;
};

std::vector<std::uint8_t> compress_one(const CodecArgs& a, const Raster& img) {
  if (parse_codec_kind(a.codec) == CodecKind::learned) {
    if (a.model.empty()) throw ConfigError("the learned codec needs --model");
    return load_codec(a.model).encode(img);
  }
  const int levels = a.levels > 0 ? a.levels : default_levels(img.height, img.width);
  return encode_classic(img, {levels, parse_wavelet_kernel(a.kernel)}, {a.step});
}

void run_compress(const Globals& g, const std::string& in, const CodecArgs& a) {
  require_out(g, "compress");
  const Raster img = read_raster(in);
  const auto bytes = compress_one(a, img);
  write_file(g.out, bytes);
  std::printf("%zu bytes, %.4f bpp (payload)\n", bytes.size(),
              bits_per_pixel(payload_bits(bytes), img.height, img.width));
}

void run_decompress(const Globals& g, const std::string& in, const std::string& model) {
  require_out(g, "decompress");
  const auto bytes = read_file(in);
  const Container c = parse_container(bytes);
  Raster img;
  if (c.codec == CodecId::classic) {
    img = decode_classic(bytes);
  } else {
    if (model.empty()) throw ConfigError("a learned bitstream needs --model");
    img = load_codec(model).decode(bytes);
  }
  write_raster(g.out, img);
  std::printf("decoded %dx%dx%d\n", img.height, img.width, img.channels);
}

// ---------------------------------------------------------------- eval

void run_eval(const Globals& g, const std::string& data_dir, const CodecArgs& a, const std::string& seg_path) {
  const auto data = read_dataset(data_dir);
  std::optional<UNet> seg;
  if (!seg_path.empty()) seg.emplace(load_unet(seg_path));
  double bits = 0.0, sse = 0.0, samples = 0.0, pixels = 0.0;
  ConfusionCounts counts;
  std::optional<LearnedCodec> learned;
  if (parse_codec_kind(a.codec) == CodecKind::learned) {
    if (a.model.empty()) throw ConfigError("the learned codec needs --model");
    learned.emplace(load_codec(a.model));
  }
  for (const Sample& s : data) {
    const auto bytes = learned ? learned->encode(s.image) : compress_one(a, s.image);
    const Raster rec = learned ? learned->decode(bytes) : decode_classic(bytes);
    bits += static_cast<double>(payload_bits(bytes));
    sse += mse(s.image, rec) * static_cast<double>(s.image.size());
    samples += static_cast<double>(s.image.size());
    pixels += static_cast<double>(s.image.pixels());
    if (seg) counts += confusion(seg->predict(rec), s.mask);
  }
  nlohmann::json j = {{"codec", a.codec}, {"images", data.size()}, {"bpp", bits / pixels}};
  const double p = psnr_from_mse(sse / samples);
  j["psnr_db"] = std::isfinite(p) ? nlohmann::json(p) : nlohmann::json("inf");
  if (seg) {
    const F1Scores f = counts.scores();
    j["f1"] = {{"pos", f.pos}, {"neg", f.neg}, {"macro", f.macro}};
  }
  std::cout << j.dump(2) << "\n";
  if (!g.out.empty()) write_text(g.out, j.dump(2) + "\n");
}

// ---------------------------------------------------------------- sweep

struct SweepArgs {
  std::string data;
  SweepSpec spec;
  std::string codec = "classic";
  std::string kernel = "float9_7";
  bool seg = false;
  bool finetune = false;
  std::vector<std::string> formats{"csv", "json", "svg"};
};

void run_sweep(const Globals& g, SweepArgs a) {
  require_out(g, "sweep");
  a.spec.codec = parse_codec_kind(a.codec);
  a.spec.kernel = parse_wavelet_kernel(a.kernel);
  a.spec.retrain_segmenter = !a.finetune;
  a.spec.jobs = g.jobs;
  a.spec.seg.seed = g.seed;
  const auto data = read_dataset(a.data);
  a.spec.unet.in_channels = data.at(0).image.channels;
  const Report r = a.seg ? run_seg_under_compression(a.spec, data) : run_rd_sweep(a.spec, data);
  for (const std::string& f : a.formats) emit_report(r, parse_report_format(f), (fs::path(g.out) / ("report." + f)).string());
  std::cout << render_report(r, ReportFormat::csv);
}

// ---------------------------------------------------------------- scenarios

void run_scenarios_verb(const Globals& g, const std::string& data_dir, ScenarioConfig cfg) {
  require_out(g, "scenarios");
  cfg.train.seed = g.seed;
  cfg.train.lr_aux = cfg.train.lr / 10.0;
  const auto data = read_dataset(data_dir);
  cfg.unet.in_channels = data.at(0).image.channels;
  const ScenarioTable t = run_scenarios(data, cfg, g.out);
  std::cout << scenarios_csv(t);
}

// ---------------------------------------------------------------- report

void run_report(const Globals& g, const std::string& in, const std::string& format) {
  require_out(g, "report");
  emit_report(read_report(in), parse_report_format(format), g.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tcbench: task-aware raster compression bench"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for data generation, initialization and shuffling");
  app.add_option("--out", g.out, "Output file or directory");
  app.add_option("--jobs", g.jobs, "Worker threads for independent sweep points")->check(CLI::PositiveNumber);

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "Generate a synthetic dataset (RAS1 pairs + manifest)");
  s_synth->add_option("--task", synth.task, "fire_like | cloud_like | building_like");
  s_synth->add_option("--count", synth.count, "Number of image/mask pairs");
  s_synth->add_option("--preset", synth.preset, "desk | full");
  s_synth->add_option("--height", synth.height);
  s_synth->add_option("--width", synth.width);
  s_synth->add_option("--channels", synth.channels);
  s_synth->add_option("--positive-fraction", synth.positive_fraction);

  TrainArgs train;
  auto* s_train = app.add_subcommand("train", "Train a learned codec (standalone or joint)");
  s_train->add_option("--data", train.data, "Dataset directory")->required();
  s_train->add_option("--mode", train.mode, "compress | joint");
  s_train->add_option("--lambda", train.cfg.lambda);
  s_train->add_option("--gamma", train.cfg.gamma);
  s_train->add_option("--quality", train.quality, "low | high");
  s_train->add_option("--variant", train.variant, "gmm | factorized");
  s_train->add_option("--epochs", train.cfg.max_epochs);
  s_train->add_option("--patience", train.cfg.patience);
  s_train->add_option("--batch", train.cfg.batch_size, "4 | 8 | 16 | 32");
  s_train->add_option("--lr", train.cfg.lr);
  auto* lr_aux = s_train->add_option("--lr-aux", train.cfg.lr_aux, "Defaults to lr / 10");
  s_train->add_option("--lr-seg", train.cfg.lr_seg);
  s_train->add_option("--hidden", train.cfg.hidden_channels);
  s_train->add_option("--compressor", train.compressor, "Pretrained compressor checkpoint (joint)");
  s_train->add_option("--segmenter", train.segmenter, "Pretrained segmenter checkpoint (joint)");
  s_train->add_option("--scenario", train.scenario, "Scenario name recorded in the run");
  s_train->add_flag("--freeze-compressor", train.cfg.freeze_compressor);
  s_train->add_flag("--freeze-segmenter", train.cfg.freeze_segmenter);

  TrainSegArgs tseg;
  auto* s_tseg = app.add_subcommand("train-seg", "Train the U-Net segmenter");
  s_tseg->add_option("--data", tseg.data, "Dataset directory")->required();
  s_tseg->add_option("--epochs", tseg.cfg.max_epochs);
  s_tseg->add_option("--patience", tseg.cfg.patience);
  s_tseg->add_option("--batch", tseg.cfg.batch_size);
  s_tseg->add_option("--lr", tseg.cfg.lr);
  s_tseg->add_option("--depth", tseg.unet.depth);
  s_tseg->add_option("--width", tseg.unet.base_width);
  s_tseg->add_flag("--no-augment", tseg.no_augment);

  std::string in_path;
  CodecArgs codec;
  auto* s_comp = app.add_subcommand("compress", "Compress one RAS1 raster into a TCB1 bitstream");
  s_comp->add_option("--in", in_path, "Input raster")->required();
  s_comp->add_option("--codec", codec.codec, "classic | learned");
  s_comp->add_option("--step", codec.step, "Quantization step (classic)");
  s_comp->add_option("--levels", codec.levels, "Decomposition levels (classic, 0 = default)");
  s_comp->add_option("--kernel", codec.kernel, "int5_3 | float9_7 (classic)");
  s_comp->add_option("--model", codec.model, "Codec checkpoint (learned)");

  std::string model_path;
  auto* s_decomp = app.add_subcommand("decompress", "Decode a TCB1 bitstream into a RAS1 raster");
  s_decomp->add_option("--in", in_path, "Input bitstream")->required();
  s_decomp->add_option("--model", model_path, "Codec checkpoint (learned bitstreams)");

  std::string data_dir, seg_path;
  auto* s_eval = app.add_subcommand("eval", "Real-bitstream bpp / PSNR (and F1) over a dataset");
  s_eval->add_option("--data", data_dir, "Dataset directory")->required();
  s_eval->add_option("--codec", codec.codec, "classic | learned");
  s_eval->add_option("--step", codec.step);
  s_eval->add_option("--levels", codec.levels);
  s_eval->add_option("--kernel", codec.kernel);
  s_eval->add_option("--model", codec.model);
  s_eval->add_option("--segmenter", seg_path, "Segmenter checkpoint applied to decoded images");

  SweepArgs sweep;
  auto* s_sweep = app.add_subcommand("sweep", "Rate-distortion or segmentation-under-compression sweep");
  s_sweep->add_option("--data", sweep.data, "Dataset directory")->required();
  s_sweep->add_option("--codec", sweep.codec, "classic | learned");
  s_sweep->add_option("--steps", sweep.spec.steps, "Quantization steps (classic)")->delimiter(',');
  s_sweep->add_option("--models", sweep.spec.checkpoints, "Codec checkpoints (learned)")->delimiter(',');
  s_sweep->add_option("--levels", sweep.spec.levels);
  s_sweep->add_option("--kernel", sweep.kernel);
  s_sweep->add_flag("--seg", sweep.seg, "Train a segmenter per point and record F1");
  s_sweep->add_flag("--finetune", sweep.finetune, "Fine-tune the baseline segmenter instead of retraining");
  s_sweep->add_option("--seg-epochs", sweep.spec.seg.max_epochs);
  s_sweep->add_option("--seg-patience", sweep.spec.seg.patience);
  s_sweep->add_option("--depth", sweep.spec.unet.depth);
  s_sweep->add_option("--width", sweep.spec.unet.base_width);
  s_sweep->add_option("--format", sweep.formats, "csv,json,svg")->delimiter(',');

  ScenarioConfig scen;
  auto* s_scen = app.add_subcommand("scenarios", "High- and low-quality-start joint optimization table");
  s_scen->add_option("--data", data_dir, "Dataset directory")->required();
  s_scen->add_option("--pretrain-epochs", scen.pretrain_epochs);
  s_scen->add_option("--joint-epochs", scen.joint_epochs);
  s_scen->add_option("--batch", scen.train.batch_size);
  s_scen->add_option("--lr", scen.train.lr);
  s_scen->add_option("--lr-seg", scen.train.lr_seg);
  s_scen->add_option("--hidden", scen.train.hidden_channels);
  s_scen->add_option("--seg-epochs", scen.seg.max_epochs);
  s_scen->add_option("--width", scen.unet.base_width);

  std::string format = "svg";
  auto* s_report = app.add_subcommand("report", "Convert a CSV report to csv, json or svg");
  s_report->add_option("--in", in_path, "Report CSV")->required();
  s_report->add_option("--format", format, "csv | json | svg");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*s_synth) run_synth(g, synth);
    else if (*s_train) {
      train.lr_aux_set = lr_aux->count() > 0;
      run_train(g, train);
    } else if (*s_tseg) run_train_seg(g, tseg);
    else if (*s_comp) run_compress(g, in_path, codec);
    else if (*s_decomp) run_decompress(g, in_path, model_path);
    else if (*s_eval) run_eval(g, data_dir, codec, seg_path);
    else if (*s_sweep) run_sweep(g, sweep);
    else if (*s_scen) run_scenarios_verb(g, data_dir, scen);
    else if (*s_report) run_report(g, in_path, format);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
