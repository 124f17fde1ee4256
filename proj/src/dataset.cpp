#include "tcb/dataset.hpp"

#include <cstdio>
#include <filesystem>

#include "tcb/bytes.hpp"
#include "tcb/error.hpp"

namespace tcb {

namespace fs = std::filesystem;

nlohmann::json synth_spec_json(const SynthSpec& spec) {
  nlohmann::json j = {{"task", to_string(spec.task)},
                      {"count", spec.count},
                      {"height", spec.height},
                      {"width", spec.width},
                      {"channels", spec.channels},
                      {"seed", spec.seed},
                      {"positive_fraction_target", spec.positive_fraction_target}};
  if (spec.blob_amplitude) j["blob_amplitude"] = *spec.blob_amplitude;
  if (spec.rect_count) j["rect_count"] = *spec.rect_count;
  return j;
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  try {
    s.task = parse_synth_task(j.at("task").get<std::string>());
    s.count = j.at("count").get<int>();
    s.height = j.at("height").get<int>();
    s.width = j.at("width").get<int>();
    s.channels = j.at("channels").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.positive_fraction_target = j.at("positive_fraction_target").get<double>();
    if (j.contains("blob_amplitude")) s.blob_amplitude = j["blob_amplitude"].get<double>();
    if (j.contains("rect_count")) s.rect_count = j["rect_count"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

void write_dataset(const std::string& dir, const std::vector<Sample>& samples, const nlohmann::json& spec) {
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "masks");
  nlohmann::json files = nlohmann::json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%05zu.ras", i);
    const std::string image = std::string("images/") + name;
    const std::string mask = std::string("masks/") + name;
    write_raster((fs::path(dir) / image).string(), samples[i].image);
    write_mask((fs::path(dir) / mask).string(), samples[i].mask);
    files.push_back({{"image", image}, {"mask", mask}});
  }
  const nlohmann::json manifest = {{"format", "tcbench-dataset-1"},
                                   {"spec", spec},
                                   {"count", samples.size()},
                                   {"files", files},
                                   {"dataset_checksum", hex64(dataset_checksum(samples))}};
  const std::string text = manifest.dump(2) + "\n";
  write_file((fs::path(dir) / "manifest.json").string(), {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

nlohmann::json read_manifest(const std::string& dir) {
  const auto bytes = read_file((fs::path(dir) / "manifest.json").string());
  nlohmann::json m = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (m.is_discarded() || m.value("format", "") != "tcbench-dataset-1") throw FormatError(dir + ": not a dataset manifest");
  return m;
}

std::vector<Sample> read_dataset(const std::string& dir) {
  const nlohmann::json m = read_manifest(dir);
  std::vector<Sample> out;
  try {
    for (const auto& f : m.at("files")) {
      Sample s;
      s.image = read_raster((fs::path(dir) / f.at("image").get<std::string>()).string());
      s.mask = read_mask((fs::path(dir) / f.at("mask").get<std::string>()).string());
      out.push_back(std::move(s));
    }
    if (hex64(dataset_checksum(out)) != m.at("dataset_checksum").get<std::string>())
      throw FormatError(dir + ": dataset checksum mismatch");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(dir + ": bad manifest: " + e.what());
  }
  return out;
}

}  // namespace tcb
