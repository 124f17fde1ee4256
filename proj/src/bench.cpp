#include "tcb/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <sstream>

#include "tcb/bytes.hpp"
#include "tcb/checkpoint.hpp"
#include "tcb/classic_codec.hpp"
#include "tcb/container.hpp"
#include "tcb/error.hpp"
#include "tcb/learned_codec.hpp"
#include "tcb/parallel.hpp"

namespace tcb {

namespace fs = std::filesystem;

std::string to_string(CodecKind k) { return k == CodecKind::classic ? "classic" : "learned"; }

CodecKind parse_codec_kind(const std::string& s) {
  if (s == "classic") return CodecKind::classic;
  if (s == "learned") return CodecKind::learned;
  throw ConfigError("unknown codec '" + s + "' (expected classic or learned)");
}

int SweepSpec::points() const {
  return static_cast<int>(codec == CodecKind::classic ? steps.size() : checkpoints.size());
}

void SweepSpec::validate() const {
  if (points() < 2) throw ConfigError("a sweep needs at least 2 points");
  if (codec == CodecKind::classic)
    for (double s : steps)
      if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError("quantization steps must be finite and non-negative");
  if (levels < 0) throw ConfigError("levels must be non-negative");
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
}

nlohmann::json SweepSpec::to_json() const {
  return {{"codec", to_string(codec)},
          {"steps", steps},
          {"checkpoints", checkpoints},
          {"levels", levels},
          {"kernel", to_string(kernel)},
          {"retrain_segmenter", retrain_segmenter},
          {"unet", unet.to_json()},
          {"seg", seg.to_json()}};
}

nlohmann::json SweepSpec::point_json(int i) const {
  nlohmann::json j = {{"codec", to_string(codec)}};
  if (codec == CodecKind::classic) {
    j["step"] = steps.at(i);
    j["levels"] = levels;
    j["kernel"] = to_string(kernel);
  } else {
    j["checkpoint"] = checkpoints.at(i);
  }
  return j;
}

namespace {

std::string hash_of(const nlohmann::json& j) { return hex64(fnv1a64(j.dump())); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Encode/decode every image with one codec configuration. Returns the
/// decoded images and fills bpp and PSNR.
struct Coded {
  RdPoint point;
  std::vector<Raster> decoded;
};

Coded code_dataset(const SweepSpec& spec, int i, const std::vector<Sample>& data) {
  Coded out;
  double bits = 0.0, sse = 0.0, samples = 0.0, pixels = 0.0;
  std::optional<LearnedCodec> learned;
  if (spec.codec == CodecKind::learned) learned.emplace(load_codec(spec.checkpoints.at(i)));
  for (const Sample& s : data) {
    const Raster& img = s.image;
    std::vector<std::uint8_t> bytes;
    Raster rec;
    if (learned) {
      bytes = learned->encode(img);
      rec = learned->decode(bytes);
    } else {
      const int levels = spec.levels > 0 ? spec.levels : default_levels(img.height, img.width);
      bytes = encode_classic(img, {levels, spec.kernel}, {spec.steps.at(i)});
      rec = decode_classic(bytes);
    }
    bits += static_cast<double>(payload_bits(bytes));
    sse += mse(img, rec) * static_cast<double>(img.size());
    samples += static_cast<double>(img.size());
    pixels += static_cast<double>(img.pixels());
    out.decoded.push_back(std::move(rec));
  }
  out.point.bpp = bits / pixels;
  out.point.psnr_db = psnr_from_mse(sse / samples);
  return out;
}

double point_param(const SweepSpec& spec, int i) {
  if (spec.codec == CodecKind::classic) return spec.steps.at(i);
  const nlohmann::json meta = load_checkpoint(spec.checkpoints.at(i)).meta;
  const nlohmann::json prov = meta.value("provenance", nlohmann::json::object());
  return prov.value("lambda", static_cast<double>(i));
}

std::string point_label(const SweepSpec& spec, int i) {
  char buf[64];
  if (spec.codec == CodecKind::classic)
    std::snprintf(buf, sizeof buf, "step=%.6g", spec.steps.at(i));
  else
    std::snprintf(buf, sizeof buf, "model=%s", fs::path(spec.checkpoints.at(i)).stem().string().c_str());
  return buf;
}

Report new_report(const std::string& kind, const SweepSpec& spec, const std::vector<Sample>& data) {
  Report r;
  r.kind = kind;
  r.codec = to_string(spec.codec);
  nlohmann::json cfg = spec.to_json();
  cfg["kind"] = kind;
  r.config_hash = hash_of(cfg);
  r.dataset_checksum = hex64(dataset_checksum(data));
  r.rows.resize(spec.points());
  return r;
}

}  // namespace

Report run_rd_sweep(const SweepSpec& spec, const std::vector<Sample>& data) {
  spec.validate();
  if (data.empty()) throw ConfigError("empty dataset");
  const auto t0 = std::chrono::steady_clock::now();
  Report report = new_report("rd", spec, data);
  parallel_for(spec.points(), spec.jobs, [&](int i) {
    ReportRow& row = report.rows[i];
    row.point = code_dataset(spec, i, data).point;
    row.param = point_param(spec, i);
    row.label = point_label(spec, i);
    row.config_hash = hash_of(spec.point_json(i));
  });
  report.wall_clock_s = seconds_since(t0);
  return report;
}

Report run_seg_under_compression(const SweepSpec& spec, const std::vector<Sample>& data) {
  spec.validate();
  if (data.empty()) throw ConfigError("empty dataset");
  const auto t0 = std::chrono::steady_clock::now();
  Report report = new_report("seg", spec, data);
  const SegTrainResult base = train_segmenter(data, spec.unet, spec.seg);
  RdPoint baseline;
  baseline.bpp = 0.0;
  baseline.psnr_db = kPsnrExact;
  baseline.f1_pos = base.best_val.pos;
  baseline.f1_macro = base.best_val.macro;
  report.baseline = baseline;
  parallel_for(spec.points(), spec.jobs, [&](int i) {
    Coded coded = code_dataset(spec, i, data);
    std::vector<Sample> decoded(data.size());
    for (std::size_t k = 0; k < data.size(); ++k) decoded[k] = {std::move(coded.decoded[k]), data[k].mask};
    const SegTrainResult r =
        train_segmenter(decoded, spec.unet, spec.seg, spec.retrain_segmenter ? nullptr : &base.model);
    ReportRow& row = report.rows[i];
    row.point = coded.point;
    row.point.f1_pos = r.best_val.pos;
    row.point.f1_macro = r.best_val.macro;
    row.param = point_param(spec, i);
    row.label = point_label(spec, i);
    nlohmann::json pj = spec.point_json(i);
    pj["unet"] = spec.unet.to_json();
    pj["seg"] = spec.seg.to_json();
    pj["retrain_segmenter"] = spec.retrain_segmenter;
    row.config_hash = hash_of(pj);
  });
  report.wall_clock_s = seconds_since(t0);
  return report;
}

RdPoint classic_point(const std::vector<Sample>& data, double step, int levels, WaveletKernel kernel) {
  SweepSpec s;
  s.steps = {step};
  s.levels = levels;
  s.kernel = kernel;
  return code_dataset(s, 0, data).point;
}

MatchedPoint classic_at_bpp(const std::vector<Sample>& data, double target_bpp, int levels, WaveletKernel kernel) {
  if (!(target_bpp > 0.0)) throw ConfigError("target bpp must be positive");
  // bpp decreases as the step grows; bisect log2(step) over [2^-14, 2^2].
  double lo = -14.0, hi = 2.0;
  MatchedPoint best;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 24; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double step = std::exp2(mid);
    const RdPoint p = classic_point(data, step, levels, kernel);
    const double gap = std::abs(p.bpp - target_bpp);
    if (gap < best_gap) {
      best_gap = gap;
      best = {p.bpp, p.psnr_db, step};
    }
    if (gap <= 1e-3 * target_bpp) break;
    if (p.bpp > target_bpp)
      lo = mid;
    else
      hi = mid;
  }
  return best;
}

nlohmann::json ScenarioConfig::to_json() const {
  return {{"train", train.to_json()},
          {"pretrain_epochs", pretrain_epochs},
          {"joint_epochs", joint_epochs},
          {"high_lambda", high_lambda},
          {"high_gamma", high_gamma},
          {"low_pretrain_lambda", low_pretrain_lambda},
          {"low_lambda", low_lambda},
          {"low_gamma", low_gamma},
          {"unet", unet.to_json()},
          {"seg", seg.to_json()}};
}

ScenarioTable run_scenarios(const std::vector<Sample>& data, const ScenarioConfig& config, const std::string& out_dir) {
  if (out_dir.empty()) throw ConfigError("scenarios need an output directory");
  if (config.pretrain_epochs < 1 || config.joint_epochs < 1) throw ConfigError("epochs must be at least 1");
  // Segmenter and compressors share one train/validation split.
  SegTrainConfig seg = config.seg;
  seg.seed = config.train.seed;
  seg.val_fraction = config.train.val_fraction;
  const fs::path root(out_dir);
  fs::create_directories(root);

  const SegTrainResult pre_seg = train_segmenter(data, config.unet, seg);
  const std::string seg_ckpt = (root / "segmenter_pretrained.tckpt").string();
  save_unet(seg_ckpt, pre_seg.model, {{"best_epoch", pre_seg.best_epoch}});

  auto pretrain = [&](const std::string& name, double lambda, Quality q) {
    TrainConfig c = config.train;
    c.lambda = lambda;
    c.gamma = 0.0;
    c.quality = q;
    c.max_epochs = config.pretrain_epochs;
    train_compressor(data, c, (root / name).string());
    return (root / name / "compressor.tckpt").string();
  };
  const std::string high_ckpt = pretrain("high_pretrain", config.high_lambda, Quality::high);
  const std::string low_ckpt = pretrain("low_pretrain", config.low_pretrain_lambda, Quality::low);

  ScenarioTable table;
  table.config_hash = hash_of(config.to_json());
  table.dataset_checksum = hex64(dataset_checksum(data));
  TrainConfig joint = config.train;
  joint.max_epochs = config.joint_epochs;
  const Scenario scenarios[] = {{"high_quality_start", high_ckpt, seg_ckpt, config.high_lambda, config.high_gamma},
                                {"low_quality_start", low_ckpt, seg_ckpt, config.low_lambda, config.low_gamma}};
  for (const Scenario& sc : scenarios) {
    const JointResult r = train_joint(data, sc, joint, (root / (sc.name + "_joint")).string());
    table.rows.push_back({sc.name, r.prior, r.post});
  }
  const std::string csv = scenarios_csv(table);
  write_file((root / "scenarios.csv").string(), {reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()});
  nlohmann::json j = {{"config", config.to_json()},
                      {"config_hash", table.config_hash},
                      {"dataset_checksum", table.dataset_checksum}};
  for (const ScenarioRow& row : table.rows)
    j["rows"].push_back({{"scenario", row.name}, {"prior", metrics_json(row.prior)}, {"post", metrics_json(row.post)}});
  const std::string js = j.dump(2) + "\n";
  write_file((root / "scenarios.json").string(), {reinterpret_cast<const std::uint8_t*>(js.data()), js.size()});
  return table;
}

namespace {

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string scenarios_csv(const ScenarioTable& table) {
  std::string s = "scenario,bpp_prior,psnr_prior,f1_prior,bpp_post,psnr_post,f1_post\n";
  for (const ScenarioRow& r : table.rows) {
    const double f1_prior = r.prior.f1 ? r.prior.f1->pos : std::nan("");
    const double f1_post = r.post.f1 ? r.post.f1->pos : std::nan("");
    s += r.name + "," + num(r.prior.bpp) + "," + num(r.prior.psnr_db) + "," + num(f1_prior) + "," + num(r.post.bpp) +
         "," + num(r.post.psnr_db) + "," + num(f1_post) + "\n";
  }
  return s;
}

ReportFormat parse_report_format(const std::string& s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  if (s == "svg") return ReportFormat::svg;
  throw ConfigError("unknown report format '" + s + "' (expected csv, json or svg)");
}

namespace {

constexpr const char* kCsvHeader = "label,param,bpp,psnr_db,f1_pos,f1_macro,config_hash";

std::string render_csv(const Report& r) {
  std::string s;
  s += "# kind=" + r.kind + "\n";
  s += "# codec=" + r.codec + "\n";
  s += "# config_hash=" + r.config_hash + "\n";
  s += "# dataset_checksum=" + r.dataset_checksum + "\n";
  s += "# wall_clock_s=" + num(r.wall_clock_s) + "\n";
  if (r.baseline)
    s += "# baseline=" + num(r.baseline->bpp) + "," + num(r.baseline->psnr_db) + "," + num(r.baseline->f1_pos) + "," +
         num(r.baseline->f1_macro) + "\n";
  s += std::string(kCsvHeader) + "\n";
  for (const ReportRow& row : r.rows)
    s += row.label + "," + num(row.param) + "," + num(row.point.bpp) + "," + num(row.point.psnr_db) + "," +
         num(row.point.f1_pos) + "," + num(row.point.f1_macro) + "," + row.config_hash + "\n";
  return s;
}

nlohmann::json json_num(double v) {
  if (std::isfinite(v)) return v;
  return num(v);
}

nlohmann::json point_to_json(const RdPoint& p) {
  return {{"bpp", json_num(p.bpp)}, {"psnr_db", json_num(p.psnr_db)}, {"f1_pos", json_num(p.f1_pos)},
          {"f1_macro", json_num(p.f1_macro)}};
}

std::string render_json(const Report& r) {
  nlohmann::json j = {{"kind", r.kind},
                      {"codec", r.codec},
                      {"config_hash", r.config_hash},
                      {"dataset_checksum", r.dataset_checksum},
                      {"wall_clock_s", r.wall_clock_s}};
  if (r.baseline) j["baseline"] = point_to_json(*r.baseline);
  j["rows"] = nlohmann::json::array();
  for (const ReportRow& row : r.rows) {
    nlohmann::json pj = point_to_json(row.point);
    pj["label"] = row.label;
    pj["param"] = json_num(row.param);
    pj["config_hash"] = row.config_hash;
    j["rows"].push_back(pj);
  }
  return j.dump(2) + "\n";
}

/// One line chart panel. Points with a non-finite coordinate are skipped.
struct Panel {
  std::string title, x_label, y_label;
  std::vector<std::pair<double, double>> points;
  std::optional<double> reference;  // horizontal dashed line
};

std::string fixed(double v, int digits) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string render_panel(const Panel& p, double ox, double oy, double w, double h) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& q : p.points)
    if (std::isfinite(q.first) && std::isfinite(q.second)) pts.push_back(q);
  std::sort(pts.begin(), pts.end());
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
  if (!pts.empty()) {
    x0 = x1 = pts.front().first;
    y0 = y1 = pts.front().second;
    for (const auto& [x, y] : pts) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (p.reference && std::isfinite(*p.reference)) {
    y0 = std::min(y0, *p.reference);
    y1 = std::max(y1, *p.reference);
  }
  if (x1 - x0 < 1e-12) x1 = x0 + 1.0;
  if (y1 - y0 < 1e-12) y1 = y0 + 1.0;
  const double px0 = ox + 60, px1 = ox + w - 20, py0 = oy + h - 50, py1 = oy + 30;
  auto sx = [&](double x) { return px0 + (x - x0) / (x1 - x0) * (px1 - px0); };
  auto sy = [&](double y) { return py0 + (y - y0) / (y1 - y0) * (py1 - py0); };

  std::ostringstream s;
  s << "<g>\n";
  s << "<text x=\"" << fixed(ox + w / 2, 1) << "\" y=\"" << fixed(oy + 18, 1)
    << "\" text-anchor=\"middle\" font-size=\"14\">" << p.title << "</text>\n";
  s << "<rect x=\"" << fixed(px0, 1) << "\" y=\"" << fixed(py1, 1) << "\" width=\"" << fixed(px1 - px0, 1)
    << "\" height=\"" << fixed(py0 - py1, 1) << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = x0 + (x1 - x0) * t / 4.0, yv = y0 + (y1 - y0) * t / 4.0;
    s << "<text x=\"" << fixed(sx(xv), 1) << "\" y=\"" << fixed(py0 + 16, 1)
      << "\" text-anchor=\"middle\" font-size=\"10\">" << fixed(xv, 3) << "</text>\n";
    s << "<text x=\"" << fixed(px0 - 6, 1) << "\" y=\"" << fixed(sy(yv) + 3, 1)
      << "\" text-anchor=\"end\" font-size=\"10\">" << fixed(yv, 2) << "</text>\n";
  }
  s << "<text x=\"" << fixed((px0 + px1) / 2, 1) << "\" y=\"" << fixed(py0 + 36, 1)
    << "\" text-anchor=\"middle\" font-size=\"12\">" << p.x_label << "</text>\n";
  s << "<text x=\"" << fixed(ox + 14, 1) << "\" y=\"" << fixed((py0 + py1) / 2, 1)
    << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 " << fixed(ox + 14, 1) << " "
    << fixed((py0 + py1) / 2, 1) << ")\">" << p.y_label << "</text>\n";
  if (p.reference && std::isfinite(*p.reference))
    s << "<line x1=\"" << fixed(px0, 1) << "\" y1=\"" << fixed(sy(*p.reference), 1) << "\" x2=\"" << fixed(px1, 1)
      << "\" y2=\"" << fixed(sy(*p.reference), 1) << "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n";
  if (!pts.empty()) {
    s << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i)
      s << (i ? " " : "") << fixed(sx(pts[i].first), 1) << "," << fixed(sy(pts[i].second), 1);
    s << "\"/>\n";
    for (const auto& [x, y] : pts)
      s << "<circle cx=\"" << fixed(sx(x), 1) << "\" cy=\"" << fixed(sy(y), 1) << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
  }
  s << "</g>\n";
  return s.str();
}

std::string render_svg(const Report& r) {
  std::vector<Panel> panels;
  Panel rd{"Rate-distortion (" + r.codec + ")", "bits per pixel", "PSNR [dB]", {}, std::nullopt};
  for (const ReportRow& row : r.rows) rd.points.emplace_back(row.point.bpp, row.point.psnr_db);
  panels.push_back(rd);
  if (r.kind == "seg") {
    Panel f1{"Segmentation F1 vs rate", "bits per pixel", "F1 (positive class)", {}, std::nullopt};
    for (const ReportRow& row : r.rows) f1.points.emplace_back(row.point.bpp, row.point.f1_pos);
    if (r.baseline) f1.reference = r.baseline->f1_pos;
    panels.push_back(f1);
  }
  const double w = 420, h = 320;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(w * panels.size(), 0) << "\" height=\""
    << fixed(h, 0) << "\" font-family=\"sans-serif\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < panels.size(); ++i) s << render_panel(panels[i], w * i, 0, w, h);
  s << "</svg>\n";
  return s.str();
}

}  // namespace

std::string render_report(const Report& report, ReportFormat format) {
  if (report.rows.empty()) throw ConfigError("no sweep points");
  switch (format) {
    case ReportFormat::csv:
      return render_csv(report);
    case ReportFormat::json:
      return render_json(report);
    case ReportFormat::svg:
      return render_svg(report);
  }
  throw ConfigError("unknown report format");
}

void emit_report(const Report& report, ReportFormat format, const std::string& path) {
  const std::string text = render_report(report, format);
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_num(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw FormatError("bad number '" + s + "' in report");
  }
  if (used != s.size()) throw FormatError("bad number '" + s + "' in report");
  return v;
}

}  // namespace

Report parse_report_csv(const std::string& text) {
  Report r;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      const std::string kv = line.substr(2);
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw FormatError("bad report metadata line");
      const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
      if (key == "kind") r.kind = value;
      else if (key == "codec") r.codec = value;
      else if (key == "config_hash") r.config_hash = value;
      else if (key == "dataset_checksum") r.dataset_checksum = value;
      else if (key == "wall_clock_s") r.wall_clock_s = parse_num(value);
      else if (key == "baseline") {
        const auto f = split(value, ',');
        if (f.size() != 4) throw FormatError("bad baseline line");
        r.baseline = RdPoint{parse_num(f[0]), parse_num(f[1]), parse_num(f[2]), parse_num(f[3])};
      }
      continue;
    }
    if (!header) {
      if (line != kCsvHeader) throw FormatError("unexpected report header");
      header = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 7) throw FormatError("report row has " + std::to_string(f.size()) + " fields, expected 7");
    ReportRow row;
    row.label = f[0];
    row.param = parse_num(f[1]);
    row.point = {parse_num(f[2]), parse_num(f[3]), parse_num(f[4]), parse_num(f[5])};
    row.config_hash = f[6];
    r.rows.push_back(row);
  }
  if (!header) throw FormatError("report has no header");
  return r;
}

Report read_report(const std::string& path) {
  const auto bytes = read_file(path);
  return parse_report_csv({bytes.begin(), bytes.end()});
}

}  // namespace tcb
