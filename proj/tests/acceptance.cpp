// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// if any selected criterion fails. Artifacts (reports, run directories,
// comparison tables) are written under --out.

#include <CLI11.hpp>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "support/oracles.hpp"
#include "tcb/bench.hpp"
#include "tcb/bytes.hpp"
#include "tcb/container.hpp"
#include "tcb/dwt.hpp"
#include "tcb/entropy_model.hpp"
#include "tcb/error.hpp"
#include "tcb/gradcheck.hpp"
#include "tcb/learned_codec.hpp"
#include "tcb/parallel.hpp"
#include "tcb/range_coder.hpp"
#include "tcb/segmenter.hpp"
#include "tcb/synth.hpp"
#include "tcb/trainer.hpp"

namespace fs = std::filesystem;
using namespace tcb;
using namespace tcb::oracle;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path out;
  int jobs = 1;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path fresh_dir(const Context& ctx, const std::string& name) {
  const fs::path p = ctx.out / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::vector<int> all_indices(std::size_t n) {
  std::vector<int> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
  return idx;
}

// ------------------------------------------------------------------ range coder

Outcome rc_exactness(const Context&) {
  Rng rng(2024);
  const int trials = 1000000;
  int failures = 0;
  std::uint64_t symbols_total = 0;
  for (int t = 0; t < trials; ++t) {
    const CdfTable table = random_table(rng, rng.uniform() < 0.1 ? 1024 : 64);
    const int n = rng.integer(0, 24);
    const int alphabet = static_cast<int>(table.frequencies().size());
    std::vector<int> symbols(n);
    for (int& s : symbols) s = rng.uniform() < 0.5 ? sample(rng, table) : rng.integer(0, alphabet - 1);
    const std::vector<CdfTable> palette{table};
    const std::vector<std::uint32_t> idx(n, 0);
    const Bitstream bs = rc_encode(symbols, palette, idx);
    if (rc_decode(bs, palette, idx, n) != symbols) ++failures;
    symbols_total += n;
  }
  return {failures == 0, fmt("%d round trips (%llu symbols), %d failures", trials,
                             static_cast<unsigned long long>(symbols_total), failures)};
}

Outcome coding_efficiency(const Context&) {
  Rng rng(77);
  const std::size_t n = 100000;
  double worst_excess = -1e300;
  bool pass = true;
  std::string cases;
  for (int trial = 0; trial < 6; ++trial) {
    std::vector<CdfTable> palette;
    if (trial == 4) {
      palette.push_back(build_cdf(std::vector<double>{0.999, 0.0005, 0.0005}));
    } else if (trial == 5) {
      palette.push_back(uniform_cdf(8));
    } else {
      for (int i = 0; i < 16; ++i) palette.push_back(random_table(rng, 4 << (2 * trial)));
    }
    std::vector<std::uint32_t> idx(n);
    std::vector<int> symbols(n);
    std::vector<CdfTable> per_symbol;
    per_symbol.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      idx[i] = static_cast<std::uint32_t>(rng.integer(0, static_cast<int>(palette.size()) - 1));
      symbols[i] = sample(rng, palette[idx[i]]);
      per_symbol.push_back(palette[idx[i]]);
    }
    const Bitstream bs = rc_encode(symbols, palette, idx);
    const double info = self_information(symbols, per_symbol);
    const double bound = info * 1.001 + 32.0;
    const double coded = static_cast<double>(bs.bits());
    pass = pass && coded <= bound && rc_decode(bs, palette, idx, n) == symbols;
    worst_excess = std::max(worst_excess, coded - info);
    cases += fmt(" %.0f/%.0f", coded, info);
  }
  return {pass, "coded/self-information bits:" + cases + fmt("; worst excess %.1f bits", worst_excess)};
}

// ------------------------------------------------------------------ wavelet

Outcome wavelet_pr(const Context&) {
  long long signals = 0, failures = 0;
  for (int n = 1; n <= 16; ++n) {
    const int max_levels = std::bit_width(static_cast<unsigned>(n)) - 1;
    long long count = 1;
    for (int i = 0; i < n; ++i) count *= 3;
    std::vector<std::int32_t> x(n), y(n);
    std::vector<int> xi(n), low, high;
    std::vector<int> depths{max_levels};
    if (max_levels > 1 && n <= 12) depths.push_back(1);
    for (long long code = 0; code < count; ++code) {
      long long c = code;
      for (int i = 0; i < n; ++i, c /= 3) x[i] = static_cast<std::int32_t>(c % 3) - 1;
      for (int levels : depths) {
        y = x;
        dwt53_forward_1d(y, levels);
        if (levels == 1) {
          xi.assign(x.begin(), x.end());
          direct_53(xi, low, high);
          for (std::size_t i = 0; i < low.size(); ++i) failures += y[i] != low[i];
          for (std::size_t i = 0; i < high.size(); ++i) failures += y[low.size() + i] != high[i];
        }
        dwt53_inverse_1d(y, levels);
        failures += y != x;
      }
      ++signals;
    }
  }
  Rng rng(11);
  int planes = 0;
  for (int t = 0; t < 1000; ++t) {
    Plane<std::int32_t> p(64, 64);
    const int range = t % 2 == 0 ? 255 : 1 << 20;
    for (auto& v : p.data) v = rng.integer(t % 2 == 0 ? 0 : -range, range);
    const int levels = 1 + t % max_dwt_levels(64, 64);
    failures += dwt53_inverse(dwt53_forward(p, levels), levels).data != p.data;
    ++planes;
  }
  return {failures == 0, fmt("%lld exhaustive signals over {-1,0,1}^N, N<=16 at full depth (N<=12 also at one level and against the direct form); "
                             "%d random 64x64 planes; %lld mismatches",
                             signals, planes, failures)};
}

// ------------------------------------------------------------------ entropy model

// Mass of N(mu, sigma^2) on [y - 1/2, y + 1/2] from the complementary error
// function in extended precision, evaluated on the tail-stable side.
double erfc_mass(int y, double mu, double sigma) {
  const long double s = static_cast<long double>(sigma) * std::sqrt(2.0L);
  const long double a = (y - 0.5L - mu) / s, b = (y + 0.5L - mu) / s;
  const long double m = y >= mu ? 0.5L * (std::erfc(a) - std::erfc(b)) : 0.5L * (std::erfc(-b) - std::erfc(-a));
  return static_cast<double>(m);
}

Outcome gaussian_pmf(const Context&) {
  Rng rng(31);
  double worst_quad = 0.0, worst_erf = 0.0;
  int bitwise_mismatch = 0;
  const int triples = 10000;
  for (int t = 0; t < triples; ++t) {
    const double mu = rng.uniform(-60, 60);
    const double sigma = kScaleFloor + std::exp(rng.uniform(-3.0, 4.0));
    const double spread = t % 10 == 0 ? 12.0 : 4.0;
    const int y = static_cast<int>(std::round(mu + rng.uniform(-spread, spread) * sigma));
    const double pmf = discretized_gaussian_pmf(y, mu, sigma);
    worst_quad = std::max(worst_quad, std::abs(pmf - std::max(integrated_mass(y, mu, sigma), kPmfFloor)));
    worst_erf = std::max(worst_erf, std::abs(pmf - std::max(erfc_mass(y, mu, sigma), kPmfFloor)));
    const double single = mixture_pmf(y, MixtureParams{{1.0}, {mu}, {sigma}});
    bitwise_mismatch += std::memcmp(&single, &pmf, sizeof pmf) != 0;
  }
  const bool pass = worst_quad <= 1e-9 && worst_erf <= 1e-9 && bitwise_mismatch == 0;
  return {pass, fmt("%d triples: max |pmf - quadrature| %.2e, max |pmf - erfc| %.2e; K=1 bitwise mismatches %d",
                    triples, worst_quad, worst_erf, bitwise_mismatch)};
}

// ------------------------------------------------------------------ gradients

Tensor random_tensor(Rng& rng, int n, int c, int h, int w, double lo, double hi) {
  Tensor t(n, c, h, w);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Move every parameter off its initial value so checks do not sit on
// symmetric or zero-bias configurations.
void perturb(ParamStore& store, Rng& rng, double amount) {
  for (const auto& name : store.names())
    for (double& v : store.at(name).value.values()) v += amount * rng.normal();
}

Outcome gradients(const Context&) {
  GradCheckOptions opt;
  opt.max_entries_per_param = 24;
  double worst = 0.0;
  int checked = 0;
  std::string paths;
  auto record = [&](const std::string& name, const GradCheckResult& r) {
    worst = std::max(worst, r.max_rel_error);
    checked += r.entries_checked;
    paths += fmt(" %s=%.1e", name.c_str(), r.max_rel_error);
  };

  for (int trial = 0; trial < 3; ++trial) {
    Rng rng(100 + trial);
    const int h = 2 + rng.integer(0, 3) * 2, w = 2 + rng.integer(0, 3) * 2;
    ParamStore ps;
    ps.add("x", random_tensor(rng, 2, 2, h, w, -1, 2), "uniform");
    const Tensor target = random_tensor(rng, 2, 2, h, w, 0, 1);
    Tensor labels(2, 2, h, w);
    for (double& v : labels.values()) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
    opt.seed = trial;
    record("mse", grad_check([&](Graph& g, ParamStore& p) { return ops::mse_loss(g.param(p.at("x")), g.constant(target)); },
                             ps, opt));
    record("bce", grad_check([&](Graph& g, ParamStore& p) { return ops::bce_with_logits(g.param(p.at("x")), labels); },
                             ps, opt));

    const int k = 1 + trial;
    ParamStore rs;
    rs.add("y", random_tensor(rng, 1, 3, h, w, -4, 4), "uniform");
    rs.add("head", random_tensor(rng, 1, 3 * k * 3, h, w, -1.5, 1.5), "normal");
    record(fmt("rate_gmm_k%d", k), grad_check([&](Graph& g, ParamStore& p) {
             return ops::mixture_rate_bits(g.param(p.at("y")), g.param(p.at("head")), k);
           }, rs, opt));

    FactorizedPrior prior("prior", 3);
    ParamStore fs_store;
    prior.init_params(fs_store, rng);
    perturb(fs_store, rng, 0.3);
    fs_store.add("y", random_tensor(rng, 1, 3, h, w, -3, 3), "uniform");
    record("rate_factorized", grad_check([&](Graph& g, ParamStore& p) {
             return prior.rate(g, g.param(p.at("y")), p);
           }, fs_store, opt));
  }

  // Full objective: lambda * D + R + gamma * T through codec and segmenter.
  for (auto variant : {EntropyVariant::gmm, EntropyVariant::factorized}) {
    Rng rng(300 + static_cast<int>(variant));
    TransformSpec spec;
    spec.in_channels = 2;
    spec.latent_channels = 4;
    spec.hidden_channels = 3;
    spec.head_channels = 3;
    spec.mixtures = 2;
    spec.variant = variant;
    LearnedCodec codec(spec, 21);
    perturb(codec.params(), rng, 0.05);
    UNet seg({2, 2, 2}, 22);
    perturb(seg.params(), rng, 0.05);
    const Tensor x = random_tensor(rng, 2, 2, 8, 8, 0.2, 0.8);
    Tensor mask(2, 1, 8, 8);
    for (double& v : mask.values()) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
    TrainConfig cfg;
    cfg.lambda = 0.01;
    cfg.gamma = 0.5;
    auto loss = [&](Graph& g, ParamStore&) {
      Rng noise(23);
      return build_loss(g, codec, &seg, x, &mask, cfg, noise).loss;
    };
    GradCheckOptions o;
    o.max_entries_per_param = 8;
    record("composite_codec_" + to_string(variant), grad_check(loss, codec.params(), o));
    record("composite_seg_" + to_string(variant), grad_check(loss, seg.params(), o));
  }
  return {worst <= 1e-3, fmt("max relative error %.2e over %d entries;", worst, checked) + paths};
}

// ------------------------------------------------------------------ rate fidelity

Outcome rate_fidelity(const Context&) {
  // Train on 32x32 tiles of 256x256 scenes, measure on held-out 256x256 scenes.
  auto scene_spec = desk_preset(SynthTask::fire_like, 16, 41);
  scene_spec.height = scene_spec.width = 256;
  std::vector<std::pair<int, int>> centers;
  for (int i = 16; i < 256; i += 32)
    for (int j = 16; j < 256; j += 32) centers.emplace_back(i, j);
  std::vector<Sample> train;
  for (const Sample& s : generate(scene_spec)) {
    auto tiles = crop_patches(s.image, s.mask, 32, centers);
    std::move(tiles.begin(), tiles.end(), std::back_inserter(train));
  }
  auto eval_spec = desk_preset(SynthTask::fire_like, 3, 42);
  eval_spec.height = eval_spec.width = 256;
  const auto eval = generate(eval_spec);
  bool pass = true;
  double worst = 0.0;
  std::size_t min_latents = SIZE_MAX;
  std::string detail;
  for (auto variant : {EntropyVariant::gmm, EntropyVariant::factorized}) {
    TrainConfig cfg;
    cfg.variant = variant;
    cfg.max_epochs = 20;
    cfg.patience = 20;
    cfg.lambda = 1.0;
    const LearnedCodec codec = train_compressor(train, cfg).codec;
    for (const Sample& s : eval) {
      const LatentCode code = codec.analyze(s.image);
      const double real = static_cast<double>(payload_bits(codec.encode(s.image)));
      const double est = code.estimated_bits;
      min_latents = std::min(min_latents, code.symbols.values().size());
      pass = pass && std::abs(real - est) <= 0.005 * est + 64.0;
      worst = std::max(worst, std::abs(real - est) / est);
      detail += fmt(" %s %.0f/%.0f", to_string(variant).c_str(), real, est);
    }
  }
  pass = pass && min_latents >= 10000;
  return {pass, fmt("%zu latents per image; worst |real-est|/est %.4f; real/est bits:", min_latents, worst) + detail};
}

// ------------------------------------------------------------------ codec trends

struct TrendSetup {
  SynthTask task;
  int height, width, channels;
  int train_count, test_count;
  std::vector<double> lambdas;
  int epochs;
};

// Matched-bpp comparison of trained learned codecs against the classic codec
// on held-out data, with reports and a comparison table under `dir`.
struct TrendPoint {
  double lambda;
  EvalMetrics learned;
  MatchedPoint classic;
  double gap_db() const { return learned.psnr_db - classic.psnr_db; }
};

std::vector<TrendPoint> run_trend(const Context& ctx, const TrendSetup& setup, const fs::path& dir) {
  auto spec = desk_preset(setup.task, setup.train_count + setup.test_count, 2026);
  spec.height = setup.height;
  spec.width = setup.width;
  spec.channels = setup.channels;
  const auto all = generate(spec);
  const std::vector<Sample> train(all.begin(), all.begin() + setup.train_count);
  const std::vector<Sample> test(all.begin() + setup.train_count, all.end());

  std::vector<TrendPoint> points(setup.lambdas.size());
  std::vector<std::string> checkpoints(setup.lambdas.size());
  parallel_for(static_cast<int>(points.size()), ctx.jobs, [&](int i) {
    TrainConfig cfg;
    cfg.lambda = setup.lambdas[i];
    cfg.max_epochs = setup.epochs;
    cfg.patience = setup.epochs;
    cfg.seed = 7;
    const fs::path run = dir / fmt("lambda_%g", cfg.lambda);
    const TrainResult r = train_compressor(train, cfg, run.string());
    checkpoints[i] = (run / "compressor.tckpt").string();
    points[i].lambda = cfg.lambda;
    points[i].learned = evaluate_codec(r.codec, nullptr, test, all_indices(test.size()));
    points[i].classic = classic_at_bpp(test, points[i].learned.bpp);
  });

  SweepSpec learned_sweep;
  learned_sweep.codec = CodecKind::learned;
  learned_sweep.checkpoints = checkpoints;
  learned_sweep.jobs = ctx.jobs;
  SweepSpec classic_sweep;
  for (const auto& p : points) classic_sweep.steps.push_back(p.classic.step);
  for (auto [name, sweep] : {std::pair{"learned", &learned_sweep}, std::pair{"classic", &classic_sweep}}) {
    const Report r = run_rd_sweep(*sweep, test);
    for (auto f : {ReportFormat::csv, ReportFormat::svg})
      emit_report(r, f, (dir / (std::string("report_") + name + (f == ReportFormat::csv ? ".csv" : ".svg"))).string());
  }
  std::string table = "lambda,learned_bpp,learned_psnr,classic_bpp,classic_psnr,gap_db\n";
  for (const auto& p : points)
    table += fmt("%g,%.6f,%.4f,%.6f,%.4f,%.4f\n", p.lambda, p.learned.bpp, p.learned.psnr_db, p.classic.bpp,
                 p.classic.psnr_db, p.gap_db());
  write_text(dir / "comparison.csv", table);
  return points;
}

std::string describe(const std::vector<TrendPoint>& points) {
  std::string s;
  for (const auto& p : points)
    s += fmt(" [lambda %g: learned %.3f bpp %.2f dB, classic %.3f bpp %.2f dB, gap %+.2f dB]", p.lambda, p.learned.bpp,
             p.learned.psnr_db, p.classic.bpp, p.classic.psnr_db, p.gap_db());
  return s;
}

const std::vector<double> kTrendLambdas{0.1, 1.0, 10.0};
constexpr int kTrendEpochs = 20;

Outcome multichannel_trend(const Context& ctx) {
  const fs::path dir = fresh_dir(ctx, "multichannel_trend");
  const auto points = run_trend(ctx, {SynthTask::building_like, 64, 64, 8, 2000, 200, kTrendLambdas, kTrendEpochs}, dir);
  int wins = 0;
  bool matched = true;
  for (const auto& p : points) {
    wins += p.learned.psnr_db > p.classic.psnr_db;
    matched = matched && std::abs(p.classic.bpp - p.learned.bpp) <= 0.1 * p.learned.bpp;
  }
  return {matched && wins >= 2, fmt("learned ahead at %d of %zu points;", wins, points.size()) + describe(points)};
}

Outcome monochrome_trend(const Context& ctx) {
  const fs::path dir = fresh_dir(ctx, "monochrome_trend");
  const auto points = run_trend(ctx, {SynthTask::fire_like, 32, 32, 1, 2000, 200, kTrendLambdas, kTrendEpochs}, dir);
  // The learned bpp must be the payload size of real bitstreams.
  const Report learned = read_report((dir / "report_learned.csv").string());
  bool real_bits = learned.rows.size() == points.size();
  for (std::size_t i = 0; real_bits && i < points.size(); ++i)
    real_bits = learned.rows[i].point.bpp == points[i].learned.bpp;
  const bool produced = fs::exists(dir / "report_learned.svg") && fs::exists(dir / "report_classic.svg") &&
                        fs::exists(dir / "comparison.csv");
  int classic_ok = 0;
  for (const auto& p : points) classic_ok += p.gap_db() <= 1.0;
  return {produced && real_bits,
          fmt("report written with real-bitstream bpp; classic within 1 dB or better at %d of %zu points;", classic_ok,
              points.size()) +
              describe(points)};
}

// ------------------------------------------------------------------ plateau

Outcome plateau(const Context& ctx) {
  const fs::path dir = fresh_dir(ctx, "plateau");
  auto spec = desk_preset(SynthTask::fire_like, 800, 99);
  const auto data = generate(spec);
  SweepSpec s;
  s.steps = {1.0 / 4096, 1.0 / 256, 1.0 / 64, 1.0 / 16, 1.0 / 4, 1.0};
  s.unet = {1, 3, 8};
  s.seg.max_epochs = 25;
  s.seg.patience = 5;
  s.seg.seed = 5;
  s.jobs = ctx.jobs;
  const Report r = run_seg_under_compression(s, data);
  for (auto f : {ReportFormat::csv, ReportFormat::json, ReportFormat::svg})
    emit_report(r, f, (dir / (f == ReportFormat::csv ? "report.csv" : f == ReportFormat::json ? "report.json" : "report.svg")).string());
  const auto hi = std::max_element(r.rows.begin(), r.rows.end(),
                                   [](const ReportRow& a, const ReportRow& b) { return a.point.bpp < b.point.bpp; });
  const auto lo = std::min_element(r.rows.begin(), r.rows.end(),
                                   [](const ReportRow& a, const ReportRow& b) { return a.point.bpp < b.point.bpp; });
  const double base = r.baseline->f1_pos;
  const bool pass = std::abs(hi->point.f1_pos - base) <= 0.02 && lo->point.f1_pos <= base - 0.1;
  std::string curve;
  for (const auto& row : r.rows) curve += fmt(" %.3f bpp:%.3f", row.point.bpp, row.point.f1_pos);
  return {pass, fmt("baseline F1+ %.4f; highest %.3f bpp F1+ %.4f (|diff| %.4f); lowest %.3f bpp F1+ %.4f (drop %.4f);"
                    " curve",
                    base, hi->point.bpp, hi->point.f1_pos, std::abs(hi->point.f1_pos - base), lo->point.bpp,
                    lo->point.f1_pos, base - lo->point.f1_pos) +
                    curve};
}

// ------------------------------------------------------------------ scenarios

Outcome scenario_table(const Context& ctx) {
  const fs::path dir = fresh_dir(ctx, "scenarios");
  auto spec = desk_preset(SynthTask::fire_like, 1000, 123);
  const auto data = generate(spec);
  ScenarioConfig cfg;
  cfg.train.seed = 3;
  cfg.unet = {1, 3, 8};
  cfg.seg.max_epochs = 25;
  const ScenarioTable t = run_scenarios(data, cfg, dir.string());
  const std::string csv = slurp(dir / "scenarios.csv");
  int lines = 0, bad_width = 0;
  for (std::istringstream in(csv); !in.eof();) {
    std::string line;
    if (!std::getline(in, line) || line.empty()) continue;
    ++lines;
    bad_width += std::count(line.begin(), line.end(), ',') != 6;
  }
  const bool shape = lines == 3 && bad_width == 0 && t.rows.size() == 2;
  const auto& high = t.rows.at(0);
  const auto& low = t.rows.at(1);
  const double d_high = high.post.f1->pos - high.prior.f1->pos;
  const bool low_up = low.post.psnr_db > low.prior.psnr_db && low.post.f1->pos > low.prior.f1->pos;
  const bool high_flat = std::abs(d_high) <= 0.02;
  auto row = [](const ScenarioRow& r) {
    return fmt("%s %.3f bpp %.2f dB F1+ %.4f -> %.3f bpp %.2f dB F1+ %.4f", r.name.c_str(), r.prior.bpp, r.prior.psnr_db,
               r.prior.f1->pos, r.post.bpp, r.post.psnr_db, r.post.f1->pos);
  };
  return {shape && low_up && high_flat,
          fmt("2x6 table %s; low start improves %s; high start dF1 %+.4f; ", shape ? "ok" : "malformed",
              low_up ? "yes" : "no", d_high) +
              row(high) + "; " + row(low)};
}

// ------------------------------------------------------------------ determinism

Outcome determinism(const Context& ctx) {
  const fs::path dir = fresh_dir(ctx, "determinism");
  auto spec = desk_preset(SynthTask::fire_like, 48, 8);
  const auto data = generate(spec);
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.seed = 17;
  cfg.hidden_channels = 16;
  train_compressor(data, cfg, (dir / "standalone_a").string());
  train_compressor(data, cfg, (dir / "standalone_b").string());

  const UNet seg = train_segmenter(data, {1, 3, 4}, {2, 2, 8, 1e-3, 17}).model;
  save_unet((dir / "segmenter.tckpt").string(), seg);
  TrainConfig joint = cfg;
  joint.max_epochs = 2;
  const Scenario sc{"joint", (dir / "standalone_a" / "compressor.tckpt").string(), (dir / "segmenter.tckpt").string(),
                    1.0, 0.01};
  train_joint(data, sc, joint, (dir / "joint_a").string());
  train_joint(data, sc, joint, (dir / "joint_b").string());

  const std::string sa = slurp(dir / "standalone_a" / "history.csv"), sb = slurp(dir / "standalone_b" / "history.csv");
  const std::string ja = slurp(dir / "joint_a" / "history.csv"), jb = slurp(dir / "joint_b" / "history.csv");
  const bool pass = !sa.empty() && sa == sb && !ja.empty() && ja == jb;
  return {pass, fmt("standalone history.csv %s (%zu bytes), joint history.csv %s (%zu bytes)",
                    sa == sb ? "identical" : "differs", sa.size(), ja == jb ? "identical" : "differs", ja.size())};
}

struct Criterion {
  const char* id;
  Outcome (*run)(const Context&);
};

const Criterion kCriteria[] = {
    {"rc_exactness", rc_exactness},
    {"coding_efficiency", coding_efficiency},
    {"wavelet_pr", wavelet_pr},
    {"gaussian_pmf", gaussian_pmf},
    {"gradients", gradients},
    {"rate_fidelity", rate_fidelity},
    {"multichannel_trend", multichannel_trend},
    {"monochrome_trend", monochrome_trend},
    {"plateau", plateau},
    {"scenario_table", scenario_table},
    {"determinism", determinism},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria of the compression bench"};
  std::vector<std::string> only;
  Context ctx{"acceptance_out", 1};
  std::string out = ctx.out.string();
  bool list = false;
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_option("--out", out, "Artifact directory");
  app.add_option("--jobs", ctx.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--list", list, "List criterion ids");
  CLI11_PARSE(app, argc, argv);
  ctx.out = out;

  if (list) {
    for (const auto& c : kCriteria) std::cout << c.id << "\n";
    return 0;
  }
  for (const auto& id : only)
    if (std::none_of(std::begin(kCriteria), std::end(kCriteria), [&](const Criterion& c) { return id == c.id; })) {
      std::cerr << "unknown criterion '" << id << "'\n";
      return 2;
    }
  fs::create_directories(ctx.out);

  int failed = 0;
  for (const auto& c : kCriteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", c.id, secs, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
