#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <string>
#include <vector>

#include "tcb/bench.hpp"
#include "tcb/classic_codec.hpp"
#include "tcb/container.hpp"
#include "tcb/dataset.hpp"
#include "tcb/entropy_model.hpp"
#include "tcb/error.hpp"
#include "tcb/learned_codec.hpp"
#include "tcb/range_coder.hpp"
#include "tcb/synth.hpp"
#include "tcb/trainer.hpp"

namespace py = pybind11;
using namespace tcb;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Raster to_raster(const FloatArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw ConfigError("raster array must be H x W or H x W x C");
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  Raster r(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), c);
  std::memcpy(r.data.data(), a.data(), r.size() * sizeof(float));
  return r;
}

FloatArray from_raster(const Raster& r) {
  FloatArray a({r.height, r.width, r.channels});
  std::memcpy(a.mutable_data(), r.data.data(), r.size() * sizeof(float));
  return a;
}

Mask to_mask(const ByteArray& a) {
  if (a.ndim() != 2) throw ConfigError("mask array must be H x W");
  Mask m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::memcpy(m.labels.data(), a.data(), m.size());
  return m;
}

ByteArray from_mask(const Mask& m) {
  ByteArray a({m.height, m.width});
  std::memcpy(a.mutable_data(), m.labels.data(), m.size());
  return a;
}

py::bytes to_bytes(const std::vector<std::uint8_t>& v) {
  return {reinterpret_cast<const char*>(v.data()), v.size()};
}

std::vector<std::uint8_t> from_bytes(const py::bytes& b) {
  const std::string s = b;
  return {s.begin(), s.end()};
}

std::vector<Sample> to_samples(const py::list& items) {
  std::vector<Sample> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    const auto pair = item.cast<py::tuple>();
    out.push_back({to_raster(pair[0].cast<FloatArray>()), to_mask(pair[1].cast<ByteArray>())});
  }
  return out;
}

py::list from_samples(const std::vector<Sample>& samples) {
  py::list out;
  for (const Sample& s : samples) out.append(py::make_tuple(from_raster(s.image), from_mask(s.mask)));
  return out;
}

nlohmann::json to_json(const py::dict& d) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(d).cast<std::string>());
}

py::object to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

std::vector<CdfTable> cycle_tables(const std::vector<std::vector<std::uint32_t>>& cumulative, std::size_t n) {
  if (cumulative.empty()) throw ConfigError("at least one cdf table required");
  std::vector<CdfTable> base(cumulative.begin(), cumulative.end());
  std::vector<CdfTable> tables;
  tables.reserve(n);
  for (std::size_t i = 0; i < n; ++i) tables.push_back(base[i % base.size()]);
  return tables;
}

py::dict rd_dict(const RdPoint& p) {
  py::dict d;
  d["bpp"] = p.bpp;
  d["psnr_db"] = p.psnr_db;
  d["f1_pos"] = p.f1_pos;
  d["f1_macro"] = p.f1_macro;
  return d;
}

}  // namespace

PYBIND11_MODULE(_tcbench, m) {
  m.doc() = "Task-aware raster compression bench: codecs, entropy model, training and sweeps.";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());

  m.def(
      "synth",
      [](const std::string& task, int count, std::uint64_t seed, int height, int width, int channels) {
        SynthSpec spec = desk_preset(parse_synth_task(task), count, seed);
        if (height > 0) spec.height = height;
        if (width > 0) spec.width = width;
        if (channels > 0) spec.channels = channels;
        spec.validate();
        return from_samples(generate(spec));
      },
      py::arg("task"), py::arg("count"), py::arg("seed") = 0, py::arg("height") = 0, py::arg("width") = 0,
      py::arg("channels") = 0, "Synthetic (image, mask) pairs; images are H x W x C float32 in [0, 1].");

  m.def(
      "normalize_global_max",
      [](const std::vector<FloatArray>& images) {
        std::vector<Raster> rs;
        for (const auto& a : images) rs.push_back(to_raster(a));
        auto [out, scale] = normalize_global_max(std::move(rs));
        std::vector<FloatArray> arrays;
        for (const Raster& r : out) arrays.push_back(from_raster(r));
        return py::make_tuple(arrays, scale);
      },
      py::arg("images"));

  m.def(
      "psnr", [](const FloatArray& a, const FloatArray& b, double peak) { return psnr(to_raster(a), to_raster(b), peak); },
      py::arg("reference"), py::arg("reconstruction"), py::arg("peak") = 1.0);
  m.def(
      "f1_scores",
      [](const ByteArray& pred, const ByteArray& truth) {
        const F1Scores f = f1_scores(to_mask(pred), to_mask(truth));
        return py::make_tuple(f.pos, f.neg, f.macro);
      },
      py::arg("predicted"), py::arg("truth"), "(F1 positive, F1 negative, macro F1)");
  m.def("bits_per_pixel", &bits_per_pixel, py::arg("bits"), py::arg("height"), py::arg("width"));

  m.def(
      "rc_encode",
      [](const std::vector<int>& symbols, const std::vector<std::vector<std::uint32_t>>& cumulative) {
        return to_bytes(rc_encode(symbols, cycle_tables(cumulative, symbols.size())).bytes);
      },
      py::arg("symbols"), py::arg("cdfs"), "Range-code symbols; symbol i uses cdfs[i % len(cdfs)].");
  m.def(
      "rc_decode",
      [](const py::bytes& payload, const std::vector<std::vector<std::uint32_t>>& cumulative, std::size_t n) {
        return rc_decode(Bitstream{from_bytes(payload)}, cycle_tables(cumulative, n), n);
      },
      py::arg("payload"), py::arg("cdfs"), py::arg("count"));
  m.def(
      "build_cdf", [](const std::vector<double>& pmf, int precision) { return build_cdf(pmf, precision).cumulative(); },
      py::arg("pmf"), py::arg("precision") = kCdfPrecision);

  m.def("discretized_gaussian_pmf", &discretized_gaussian_pmf, py::arg("y"), py::arg("mu"), py::arg("sigma"));
  m.def(
      "mixture_pmf",
      [](int y, const std::vector<double>& w, const std::vector<double>& mu, const std::vector<double>& sigma) {
        return mixture_pmf(y, MixtureParams{w, mu, sigma});
      },
      py::arg("y"), py::arg("weights"), py::arg("means"), py::arg("scales"));

  m.def(
      "encode_classic",
      [](const FloatArray& image, double step, int levels, const std::string& kernel) {
        const Raster r = to_raster(image);
        const int l = levels > 0 ? levels : default_levels(r.height, r.width);
        return to_bytes(encode_classic(r, {l, parse_wavelet_kernel(kernel)}, {step}));
      },
      py::arg("image"), py::arg("step"), py::arg("levels") = 0, py::arg("kernel") = "float9_7");
  m.def(
      "decode", [](const py::bytes& b, const std::string& model) {
        const auto bytes = from_bytes(b);
        if (parse_container(bytes).codec == CodecId::classic) return from_raster(decode_classic(bytes));
        if (model.empty()) throw ConfigError("a learned bitstream needs a model checkpoint");
        return from_raster(load_codec(model).decode(bytes));
      },
      py::arg("bitstream"), py::arg("model") = "", "Decode a TCB1 bitstream into an H x W x C array.");
  m.def(
      "payload_bits", [](const py::bytes& b) { return payload_bits(from_bytes(b)); }, py::arg("bitstream"));

  py::class_<LearnedCodec>(m, "LearnedCodec")
      .def_static("load", &load_codec, py::arg("path"))
      .def("save", [](const LearnedCodec& c, const std::string& path) { save_codec(path, c); }, py::arg("path"))
      .def("encode", [](const LearnedCodec& c, const FloatArray& a) { return to_bytes(c.encode(to_raster(a))); })
      .def("decode", [](const LearnedCodec& c, const py::bytes& b) { return from_raster(c.decode(from_bytes(b))); })
      .def("reconstruct", [](const LearnedCodec& c, const FloatArray& a) { return from_raster(c.reconstruct(to_raster(a))); })
      .def("estimated_bits", [](const LearnedCodec& c, const FloatArray& a) { return c.analyze(to_raster(a)).estimated_bits; })
      .def_property_readonly("spec", [](const LearnedCodec& c) { return to_py(c.spec().to_json()); });

  m.def(
      "train_compressor",
      [](const py::list& data, const py::dict& config, const std::string& run_dir) {
        const auto samples = to_samples(data);
        const TrainConfig cfg = TrainConfig::from_json(to_json(config));
        TrainResult r = [&] {
          py::gil_scoped_release release;
          return train_compressor(samples, cfg, run_dir);
        }();
        py::list history;
        for (const EpochRecord& e : r.history) {
          py::dict d;
          d["epoch"] = e.epoch;
          d["D"] = e.train.distortion;
          d["R"] = e.train.rate;
          d["total"] = e.train.total;
          d["val_bpp"] = e.val.bpp;
          d["val_psnr"] = e.val.psnr_db;
          history.append(d);
        }
        return py::make_tuple(std::move(r.codec), history);
      },
      py::arg("data"), py::arg("config") = py::dict(), py::arg("run_dir") = "",
      "Standalone rate-distortion training; returns (codec, per-epoch history).");

  m.def(
      "rd_sweep",
      [](const py::list& data, const std::vector<double>& steps, int jobs) {
        const auto samples = to_samples(data);
        SweepSpec spec;
        spec.steps = steps;
        spec.jobs = jobs;
        Report r = [&] {
          py::gil_scoped_release release;
          return run_rd_sweep(spec, samples);
        }();
        py::list rows;
        for (const ReportRow& row : r.rows) rows.append(rd_dict(row.point));
        return rows;
      },
      py::arg("data"), py::arg("steps"), py::arg("jobs") = 1, "Classic-codec RD sweep with real bitstream bpp.");

  m.def("read_dataset", [](const std::string& dir) { return from_samples(read_dataset(dir)); }, py::arg("path"));
  m.def(
      "write_dataset",
      [](const std::string& dir, const py::list& data) { write_dataset(dir, to_samples(data), nlohmann::json::object()); },
      py::arg("path"), py::arg("data"));
}
